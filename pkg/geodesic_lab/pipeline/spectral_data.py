import io
import logging
import math
from typing import IO, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DomainError, EigenvalueParseError

logger = logging.getLogger("geodesic_lab")

WEYL_RATIO_LOW = 0.85
WEYL_RATIO_HIGH = 1.15
# Eigenvalues closer than this (relative) are merged into one entry
MERGE_TOLERANCE = 1e-12


class EigenvalueList(BaseModel):
    model_config = ConfigDict(frozen=True)

    entries: Tuple[Tuple[float, int], ...] = Field(description="(lambda, multiplicity), ascending")
    source: str = Field(default="", description="Where the values came from")

    @model_validator(mode="after")
    def check_entries(self):
        values = [lam for lam, _ in self.entries]
        if any(lam < 0 for lam in values):
            raise ValueError("eigenvalues must be nonnegative")
        if any(b <= a for a, b in zip(values, values[1:])):
            raise ValueError("eigenvalues must be strictly ascending after merging")
        if any(mult < 1 for _, mult in self.entries):
            raise ValueError("multiplicities must be positive")
        return self

    @property
    def total(self) -> int:
        return sum(mult for _, mult in self.entries)


class ZeroSet(BaseModel):
    """Zeros of the Selberg zeta function derived from a Laplace spectrum.

    Each stored ordinate gamma stands for the pair 1/2 +- i gamma.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    trivial: bool = Field(description="rho = 1 present")
    real_zeros: Tuple[Tuple[float, int], ...] = Field(default=(), description="rho in (1/2, 1) with multiplicity")
    companion_zeros: Tuple[Tuple[float, int], ...] = Field(
        default=(), description="1 - rho in (0, 1/2); recorded, never summed"
    )
    half_multiplicity: int = Field(default=0, ge=0, description="Multiplicity of lambda = 1/4 (rho = 1/2)")
    gammas: np.ndarray = Field(description="Positive ordinates, strictly increasing")
    multiplicities: np.ndarray = Field(description="Multiplicity of each ordinate")
    area: float = Field(gt=0, description="Surface area for Weyl checks")
    coverage: float = Field(ge=0, description="Ordinates are claimed complete up to here")
    source: str = Field(default="", description="Provenance label")

    @model_validator(mode="after")
    def check_zeros(self):
        if self.gammas.shape != self.multiplicities.shape or self.gammas.ndim != 1:
            raise ValueError("gammas and multiplicities must be parallel 1-d arrays")
        if self.gammas.size:
            if not np.all(self.gammas > 0):
                raise ValueError("ordinates must be positive")
            if not np.all(np.diff(self.gammas) > 0):
                raise ValueError("ordinates must be strictly increasing")
            if not np.all(self.multiplicities >= 1):
                raise ValueError("multiplicities must be positive")
        for rho, _ in self.real_zeros:
            if not 0.5 < rho < 1:
                raise ValueError(f"real zero {rho!r} outside (1/2, 1)")
        return self

    @property
    def count(self) -> int:
        """Stored ordinates with multiplicity (pairs counted once)"""
        return int(self.multiplicities.sum())

    @property
    def max_gamma(self) -> float:
        return float(self.gammas[-1]) if self.gammas.size else 0.0

    @property
    def min_gamma(self) -> float:
        return float(self.gammas[0]) if self.gammas.size else math.inf

    def window(self, lower: float, upper: float, include_upper: bool = True) -> Tuple[np.ndarray, np.ndarray]:
        """Ordinates in (lower, upper] (or (lower, upper) when include_upper is False)"""
        lo = int(np.searchsorted(self.gammas, lower, side="right"))
        hi = int(np.searchsorted(self.gammas, upper, side="right" if include_upper else "left"))
        return self.gammas[lo:hi], self.multiplicities[lo:hi]

    def to_eigenvalues(self) -> EigenvalueList:
        """lambda = 1/4 + gamma^2 for ordinates, rho(1 - rho) for real zeros"""
        entries: List[Tuple[float, int]] = []
        if self.trivial:
            entries.append((0.0, 1))
        entries.extend((rho * (1 - rho), mult) for rho, mult in self.real_zeros)
        if self.half_multiplicity:
            entries.append((0.25, self.half_multiplicity))
        entries.extend((0.25 + float(g) ** 2, int(m)) for g, m in zip(self.gammas, self.multiplicities))
        entries.sort()
        return EigenvalueList(entries=tuple(entries), source=self.source)


class WeylReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    T: float
    expected: float = Field(description="(area / 4 pi) T^2")
    observed: int = Field(description="#{gamma <= T} with multiplicity")
    ratio: float

    @property
    def plausible(self) -> bool:
        return WEYL_RATIO_LOW <= self.ratio <= WEYL_RATIO_HIGH


def _merge(values: List[Tuple[float, int]]) -> List[Tuple[float, int]]:
    merged: List[Tuple[float, int]] = []
    for lam, mult in sorted(values):
        if merged and abs(lam - merged[-1][0]) <= MERGE_TOLERANCE * max(1.0, lam):
            merged[-1] = (merged[-1][0], merged[-1][1] + mult)
        else:
            merged.append((lam, mult))
    return merged


def load_eigenvalues(source: Union[IO[str], IO[bytes], str, bytes], label: str = "") -> EigenvalueList:
    """Parse 'lambda' or 'lambda,multiplicity' records; '#' starts a comment"""
    if isinstance(source, bytes):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        raw = source.read()
        text = raw.decode("utf-8") if isinstance(raw, bytes) else raw

    values: List[Tuple[float, int]] = []
    for lineno, line in enumerate(io.StringIO(text), start=1):
        record = line.split("#", 1)[0].strip()
        if not record:
            continue
        fields = [f.strip() for f in record.split(",")]
        if len(fields) > 2:
            raise EigenvalueParseError(f"line {lineno}: expected 'lambda[,multiplicity]', got {record!r}")
        try:
            lam = float(fields[0])
            mult = int(fields[1]) if len(fields) == 2 else 1
        except ValueError:
            raise EigenvalueParseError(f"line {lineno}: non-numeric record {record!r}")
        if not math.isfinite(lam):
            raise EigenvalueParseError(f"line {lineno}: eigenvalue must be finite")
        if lam < 0:
            raise EigenvalueParseError(f"line {lineno}: negative eigenvalue {lam!r}")
        if mult < 1:
            raise EigenvalueParseError(f"line {lineno}: multiplicity must be positive")
        values.append((lam, mult))

    if not values:
        raise EigenvalueParseError("no eigenvalues")

    merged = _merge(values)
    if merged[0][0] == 0.0 and merged[0][1] > 1:
        raise EigenvalueParseError(
            f"eigenvalue 0 has multiplicity {merged[0][1]}; the surface must be connected"
        )
    if merged[0][0] != 0.0:
        logger.warning(f"INGESTED: no zero eigenvalue in {label or 'input'}; trivial zero will be absent")

    evs = EigenvalueList(entries=tuple(merged), source=label)
    logger.info(f"INGESTED: {evs.total} eigenvalues ({len(merged)} distinct) from {label or 'stream'}")
    return evs


def load_eigenvalue_file(path: str) -> EigenvalueList:
    with open(path, "rb") as handle:
        return load_eigenvalues(handle, label=path)


def eigenvalues_to_zeros(evs: EigenvalueList, area: float, coverage: Optional[float] = None) -> ZeroSet:
    """Map each eigenvalue to its Selberg zeta zero(s)"""
    if not area > 0:
        raise DomainError(f"area must be positive, got {area!r}")

    trivial = False
    real_zeros: List[Tuple[float, int]] = []
    companions: List[Tuple[float, int]] = []
    half = 0
    gammas: List[float] = []
    mults: List[int] = []
    for lam, mult in evs.entries:
        if lam == 0.0:
            trivial = True
        elif lam < 0.25:
            offset = math.sqrt(0.25 - lam)
            real_zeros.append((0.5 + offset, mult))
            companions.append((0.5 - offset, mult))
        elif lam == 0.25:
            half += mult
        else:
            gammas.append(math.sqrt(lam - 0.25))
            mults.append(mult)

    zeros = ZeroSet(
        trivial=trivial,
        real_zeros=tuple(sorted(real_zeros)),
        companion_zeros=tuple(sorted(companions)),
        half_multiplicity=half,
        gammas=np.asarray(gammas, dtype=np.float64),
        multiplicities=np.asarray(mults, dtype=np.int64),
        area=float(area),
        coverage=float(coverage) if coverage is not None else (gammas[-1] if gammas else 0.0),
        source=evs.source,
    )
    logger.info(
        f"INGESTED: {zeros.count} ordinates up to {zeros.max_gamma:.6g}, "
        f"{len(real_zeros)} real zeros, half multiplicity {half}"
    )
    return zeros


def weyl_check(zeros: ZeroSet, T: float) -> WeylReport:
    """Compare the ordinate count below T with (area / 4 pi) T^2"""
    if not T > 0:
        raise DomainError(f"T must be positive, got {T!r}")
    _, mults = zeros.window(0.0, T)
    observed = int(mults.sum())
    expected = zeros.area / (4 * math.pi) * T * T
    report = WeylReport(T=float(T), expected=expected, observed=observed, ratio=observed / expected)
    if zeros.count and not report.plausible:
        logger.warning(
            f"WEYL: ratio {report.ratio:.3f} at T={T:.6g} outside "
            f"[{WEYL_RATIO_LOW}, {WEYL_RATIO_HIGH}]; zero data looks truncated"
        )
    return report


def synthesize_zeros(area: float, T_max: float, seed: int = 0, jitter: float = 1.0) -> ZeroSet:
    """Weyl-density ordinates gamma_j = sqrt((j - 1/2) 4 pi / area), jittered deterministically.

    Each ordinate moves by at most 0.4 * jitter of its smaller neighbouring gap,
    so the sequence stays positive and strictly increasing.
    """
    if not area > 0:
        raise DomainError(f"area must be positive, got {area!r}")
    if not T_max > 1:
        raise DomainError(f"T_max must exceed 1, got {T_max!r}")
    if not 0 <= jitter <= 1:
        raise DomainError(f"jitter must lie in [0, 1], got {jitter!r}")

    scale = 4 * math.pi / area
    count = int(math.floor(T_max * T_max / scale + 0.5))
    # one extra ordinate so the last point has a right-hand gap
    j = np.arange(1, count + 2, dtype=np.float64)
    base = np.sqrt((j - 0.5) * scale)

    if jitter > 0 and count > 0:
        left = np.diff(base, prepend=0.0)[:count]
        right = np.diff(base)[:count]
        gaps = np.minimum(left, right)
        rng = np.random.default_rng(seed)
        offsets = jitter * 0.8 * (rng.uniform(size=count) - 0.5) * gaps
        gammas = base[:count] + offsets
    else:
        gammas = base[:count].copy()

    gammas = gammas[gammas <= T_max]
    zeros = ZeroSet(
        trivial=True,
        gammas=gammas,
        multiplicities=np.ones(gammas.size, dtype=np.int64),
        area=float(area),
        coverage=float(T_max),
        source=f"synthetic(area={area!r}, T_max={T_max!r}, seed={seed}, jitter={jitter!r})",
    )
    logger.info(f"SYNTHESIZED: {zeros.count} ordinates up to {T_max:.6g} (seed {seed})")
    return zeros
