import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..errors import DomainError, ZeroDataTooShallowError
from .explicit_formula import (
    RESIDUAL_REAL_ZERO_CUTOFF,
    SmoothCoefficients,
    delta1,
    low_range_bound,
    pair_terms,
    psi1_formula,
    real_zero_sum,
)
from .group_models import LengthSpectrum
from .spectral_data import ZeroSet
from .summatory import exact_first_difference_bounds, psi
from .util import get_worker_count

logger = logging.getLogger("geodesic_lab")

DEFAULT_DENSITY = 256
MIN_DENSITY = 64
# Zeros per vectorised block; fixed so reductions never depend on the thread count
ZERO_CHUNK = 4096
Y_CLAMP_FACTOR = 1 - 1e-9


class ExceptionalParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=1.0, gt=0, description="Log-power saving in the threshold")
    beta: float = Field(default=6.0, description="Y1 = n^beta; must exceed 4 alpha + 1")
    n_range: Tuple[int, int] = Field(default=(4, 10), description="Inclusive octave range, T = e^n")
    density: int = Field(default=DEFAULT_DENSITY, ge=MIN_DENSITY, description="Grid points per octave")

    @model_validator(mode="after")
    def check_params(self):
        if not self.beta > 4 * self.alpha + 1:
            raise ValueError(f"beta={self.beta} must exceed 4*alpha + 1 = {4 * self.alpha + 1}")
        lo, hi = self.n_range
        if lo < 2 or hi < lo:
            raise ValueError(f"n_range {self.n_range} must satisfy 2 <= lo <= hi")
        return self


class ExceptionalSetReport(BaseModel):
    """Sampled D_Y^T: points of [T, eT) where the tail zero sum beats x^(3/2)/(log x)^(2 alpha)."""

    model_config = ConfigDict(frozen=True)

    n: Optional[int] = None
    kind: Optional[str] = Field(default=None, description="E, F or G")
    T: float
    Y: float
    alpha: float
    beta: Optional[float] = None
    density: int
    indicator: Tuple[bool, ...]
    intervals: Tuple[Tuple[float, float], ...]
    log_measure: float
    resolution_error: float
    max_ratio: float
    clamped: bool = False
    empty_range: bool = False

    def grid_x(self) -> np.ndarray:
        return self.T * np.exp((np.arange(self.density) + 0.5) / self.density)

    def contains(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.intervals)

    def to_json_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "kind": self.kind,
            "T": self.T,
            "Y": self.Y,
            "alpha": self.alpha,
            "beta": self.beta,
            "grid_density": self.density,
            "log_measure": self.log_measure,
            "resolution_error": self.resolution_error,
            "max_ratio": self.max_ratio,
            "clamped": self.clamped,
            "intervals": [[a, b] for a, b in self.intervals],
        }


class OctaveScan(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int
    T: float
    E: ExceptionalSetReport
    F: ExceptionalSetReport
    G: ExceptionalSetReport
    H_intervals: Tuple[Tuple[float, float], ...]
    measure_H: float
    bound_envelope: float

    def in_H(self, x: float) -> bool:
        return any(a <= x < b for a, b in self.H_intervals)


class EFGHResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    params: ExceptionalParams
    octaves: Tuple[OctaveScan, ...]
    partial_E: Tuple[float, ...]
    partial_F: Tuple[float, ...]
    partial_G: Tuple[float, ...]
    comparison: Dict[str, Tuple[float, ...]]

    def octave(self, n: int) -> Optional[OctaveScan]:
        return next((o for o in self.octaves if o.n == n), None)

    def reports(self) -> List[ExceptionalSetReport]:
        return [r for o in self.octaves for r in (o.E, o.F, o.G)]


class MeasureBoundCheck(BaseModel):
    model_config = ConfigDict(frozen=True)

    C_hat: float
    ratios: Tuple[float, ...] = Field(description="log_measure * Y / (1 + log T)^(4 alpha) per report")
    octave_ratios: Tuple[Tuple[float, float], ...] = Field(description="(T, max ratio) in ascending T")
    slack: float
    passed: bool


class Thm2Bounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    n: int
    T: float
    h: float
    lower: float = Field(description="Delta1- of the psi1 formula over h")
    upper: float = Field(description="Delta1+ of the psi1 formula over h")
    exact_lower: float = Field(description="Delta1- of the exact psi1 over h")
    exact_upper: float = Field(description="Delta1+ of the exact psi1 over h")
    psi: float
    exceptional: bool
    case: str = Field(description="I when x + h stays in the octave of x, else II")
    low_range: float = Field(description="x^(1/2) sum_{gamma <= n^beta} 1/|rho|")

    @property
    def width(self) -> float:
        return self.upper - self.lower


def sigma_sum(zeros: ZeroSet, x: float, Y: float, T: float) -> float:
    """Sum over pairs with Y < gamma <= T of 2 Re[x^(rho+1) / (rho(rho+1))]"""
    if not Y > 0:
        raise DomainError(f"Y must be positive, got {Y!r}")
    if Y >= T:
        return 0.0
    gammas, mults = zeros.window(Y, T)
    return math.fsum(pair_terms(gammas, mults, x, 1))


def _normalized_sum(gammas: np.ndarray, mults: np.ndarray, u: np.ndarray) -> np.ndarray:
    """sum 2 mult Re[e^(i gamma u) / (rho(rho+1))] at each u, i.e. the tail sum over x^(3/2)"""
    rho = 0.5 + 1j * gammas
    weights = 2.0 * mults / (rho * (rho + 1))
    partials = []
    for start in range(0, gammas.size, ZERO_CHUNK):
        g = gammas[start:start + ZERO_CHUNK]
        w = weights[start:start + ZERO_CHUNK]
        phase = np.outer(u, g)
        block = np.cos(phase) * w.real - np.sin(phase) * w.imag
        partials.append(block.sum(axis=1))
    if not partials:
        return np.zeros_like(u)
    stacked = np.vstack(partials)
    return np.array([math.fsum(column) for column in stacked.T])


def _runs(indicator: Sequence[bool], T: float, density: int) -> Tuple[Tuple[float, float], ...]:
    intervals = []
    start = None
    for j, flagged in enumerate(list(indicator) + [False]):
        if flagged and start is None:
            start = j
        elif not flagged and start is not None:
            intervals.append((T * math.exp(start / density), T * math.exp(j / density)))
            start = None
    return tuple(intervals)


def scan_D(
    zeros: ZeroSet,
    T: float,
    Y: float,
    alpha: float,
    density: int = DEFAULT_DENSITY,
    n: Optional[int] = None,
    kind: Optional[str] = None,
    beta: Optional[float] = None,
    clamped: bool = False,
) -> ExceptionalSetReport:
    """Sample D_Y^T on the log-uniform midpoint grid of [T, eT)"""
    if density < MIN_DENSITY:
        raise DomainError(f"density must be >= {MIN_DENSITY}, got {density}")
    if not Y > 0 or not T > 1:
        raise DomainError(f"need Y > 0 and T > 1, got Y={Y!r}, T={T!r}")
    if alpha < 0:
        raise DomainError(f"alpha must be nonnegative, got {alpha!r}")

    u = math.log(T) + (np.arange(density) + 0.5) / density
    gammas, mults = zeros.window(Y, T) if Y < T else (zeros.gammas[:0], zeros.multiplicities[:0])
    empty = gammas.size == 0
    common = dict(n=n, kind=kind, T=float(T), Y=float(Y), alpha=float(alpha), beta=beta,
                  density=density, resolution_error=1.0 / density, clamped=clamped)
    if empty:
        return ExceptionalSetReport(indicator=(False,) * density, intervals=(), log_measure=0.0,
                                    max_ratio=0.0, empty_range=True, **common)

    log_threshold = 1.5 * u - 2 * alpha * np.log(u)
    if not np.all(np.diff(log_threshold) > 0):
        logger.warning(f"SCANNED: threshold not strictly increasing on [{T:.6g}, e*T) for alpha={alpha}")

    s = np.abs(_normalized_sum(gammas, mults, u))
    scaled = s * u ** (2 * alpha)
    indicator = tuple(bool(v) for v in scaled > 1.0)
    count = sum(indicator)
    report = ExceptionalSetReport(
        indicator=indicator,
        intervals=_runs(indicator, T, density),
        log_measure=count / density,
        max_ratio=float(scaled.max()),
        **common,
    )
    logger.debug(f"SCANNED: T={T:.6g} Y={Y:.6g} zeros={gammas.size} measure={report.log_measure}")
    return report


def log_measure(intervals: Sequence[Tuple[float, float]]) -> float:
    """Sum of log(b/a) over disjoint [a, b)"""
    ordered = sorted((float(a), float(b)) for a, b in intervals)
    for a, b in ordered:
        if not 0 < a <= b:
            raise DomainError(f"interval [{a!r}, {b!r}) needs 0 < a <= b")
    for (_, b1), (a2, _) in zip(ordered, ordered[1:]):
        if a2 < b1:
            raise DomainError(f"intervals overlap at {a2!r}")
    return math.fsum(math.log(b / a) for a, b in ordered)


def comparison_series(alpha: float, beta: float, n_lo: int, n_hi: int) -> Dict[str, Tuple[float, ...]]:
    """Cumulative sums of (n+1)^(4a)/n^b, (n+1)^(4a)/(n-1)^b and (n+1)^(4a)/e^(n-1)"""
    if n_lo < 2:
        raise DomainError("comparison series start at n = 2")
    out: Dict[str, Tuple[float, ...]] = {}
    terms = {
        "E": lambda n: (n + 1) ** (4 * alpha) / n ** beta,
        "F": lambda n: (n + 1) ** (4 * alpha) / (n - 1) ** beta,
        "G": lambda n: (n + 1) ** (4 * alpha) / math.exp(n - 1),
    }
    for kind, term in terms.items():
        values = [term(n) for n in range(n_lo, n_hi + 1)]
        out[kind] = tuple(math.fsum(values[:i + 1]) for i in range(len(values)))
    return out


def comparison_tail_bound(alpha: float, beta: float, N: int) -> float:
    """Bound on sum_{n > N} (n+1)^(4a)/n^b via 2^(4a) * integral_N^inf t^(4a-b) dt"""
    if not beta > 4 * alpha + 1:
        raise DomainError("tail converges only for beta > 4 alpha + 1")
    if N < 1:
        raise DomainError("N must be >= 1")
    return 2 ** (4 * alpha) * N ** (4 * alpha - beta + 1) / (beta - 4 * alpha - 1)


def max_feasible_octave(zeros: ZeroSet) -> int:
    if zeros.coverage <= 1:
        return 0
    return int(math.floor(math.log(zeros.coverage) + 1e-12))


def _octave_Y(zeros: ZeroSet, Y: float, n: int, kind: str) -> Tuple[float, bool]:
    if zeros.count and Y < zeros.min_gamma:
        clamped = zeros.min_gamma * Y_CLAMP_FACTOR
        logger.warning(f"SCANNED: n={n} {kind}: Y={Y:.6g} below smallest ordinate; clamped to {clamped:.6g}")
        return clamped, True
    return Y, False


def _scan_octave(zeros: ZeroSet, params: ExceptionalParams, n: int) -> OctaveScan:
    T = math.exp(n)
    targets = {"E": n ** params.beta, "F": (n - 1) ** params.beta, "G": math.exp(n - 1)}
    reports = {}
    for kind, Y in targets.items():
        Y, clamped = _octave_Y(zeros, Y, n, kind)
        reports[kind] = scan_D(zeros, T, Y, params.alpha, params.density,
                               n=n, kind=kind, beta=params.beta, clamped=clamped)
    union = tuple(any(flags) for flags in zip(*(r.indicator for r in reports.values())))
    envelope = (n + 1) ** (4 * params.alpha) * (
        1 / n ** params.beta + 1 / (n - 1) ** params.beta + 1 / math.exp(n - 1)
    )
    logger.info(
        f"SCANNED: octave n={n} E={reports['E'].log_measure} F={reports['F'].log_measure} "
        f"G={reports['G'].log_measure} H={sum(union) / params.density}"
    )
    return OctaveScan(
        n=n, T=T, E=reports["E"], F=reports["F"], G=reports["G"],
        H_intervals=_runs(union, T, params.density),
        measure_H=sum(union) / params.density,
        bound_envelope=envelope,
    )


def build_EFGH(zeros: ZeroSet, params: ExceptionalParams, workers: Optional[int] = None) -> EFGHResult:
    """
    Scan E_n, F_n, G_n and their union H for every octave in params.n_range.

    Octaves run on the thread pool; results are reassembled in octave order.

    Returns:
        EFGHResult with one OctaveScan per n, the cumulative measures of E, F
        and G, and the comparison series over the same range.
    """
    lo, hi = params.n_range
    max_n = max_feasible_octave(zeros)
    if hi > max_n:
        raise ZeroDataTooShallowError(
            f"zero data covers gamma <= {zeros.coverage:.6g}; requested n={hi}, max feasible n is {max_n}",
            max_n,
        )
    workers = workers or get_worker_count()
    with ThreadPoolExecutor(max_workers=workers) as pool:
        octaves = list(pool.map(lambda n: _scan_octave(zeros, params, n), range(lo, hi + 1)))

    def cumulative(values: List[float]) -> Tuple[float, ...]:
        return tuple(math.fsum(values[:i + 1]) for i in range(len(values)))

    return EFGHResult(
        params=params,
        octaves=tuple(octaves),
        partial_E=cumulative([o.E.log_measure for o in octaves]),
        partial_F=cumulative([o.F.log_measure for o in octaves]),
        partial_G=cumulative([o.G.log_measure for o in octaves]),
        comparison=comparison_series(params.alpha, params.beta, lo, hi),
    )


def verify_measure_bound(reports: Sequence[ExceptionalSetReport], slack: float = 3.0) -> MeasureBoundCheck:
    """Empirical constant in mu(D_Y^T) << (1 + log T)^(4 alpha) / Y and its trend over octaves"""
    if len(reports) < 3:
        raise DomainError(f"need at least 3 reports, got {len(reports)}")
    octaves = sorted({round(math.log(r.T), 9) for r in reports})
    if len(octaves) < 2:
        raise DomainError("reports must span at least 2 octaves")

    ratios = [r.log_measure * r.Y / (1 + math.log(r.T)) ** (4 * r.alpha) for r in reports]
    C_hat = max(ratios)
    per_octave: Dict[float, float] = {}
    for r, ratio in zip(reports, ratios):
        key = round(math.log(r.T), 9)
        per_octave[key] = max(per_octave.get(key, 0.0), ratio)

    passed = math.isfinite(C_hat)
    running = 0.0
    for key in octaves:
        ratio = per_octave[key]
        if running > 0 and ratio > slack * running:
            passed = False
        running = max(running, ratio)

    return MeasureBoundCheck(
        C_hat=C_hat,
        ratios=tuple(ratios),
        octave_ratios=tuple((math.exp(k), per_octave[k]) for k in octaves),
        slack=slack,
        passed=passed,
    )


def reconstruct_psi_thm2(
    coeffs: SmoothCoefficients,
    zeros: ZeroSet,
    spec: LengthSpectrum,
    x: float,
    alpha: float,
    efgh: EFGHResult,
    g: int = 2,
) -> Thm2Bounds:
    """
    First-difference sandwich of the psi1 formula with h = x^(3/4)/(log x)^alpha and T = e^floor(log x).

    Returns:
        Thm2Bounds with the formula interval, the exact Delta1 interval of the
        spectrum, the Case I / II label and the exceptional flag.
    """
    logx = math.log(x)
    n = int(math.floor(logx))
    T = math.exp(n)
    if T > zeros.coverage * (1 + 1e-12):
        raise ZeroDataTooShallowError(
            f"x={x!r} needs zeros up to {T:.6g}; coverage is {zeros.coverage:.6g}", max_feasible_octave(zeros)
        )
    h = x ** 0.75 / logx ** alpha
    if not (h < x / 2 and x - h > 1):
        raise DomainError(f"h={h!r} inadmissible at x={x!r}")

    # Case II: x + h has crossed into the next octave, so H is checked there
    n_next = int(math.floor(math.log(x + h)))
    here, there = efgh.octave(n), efgh.octave(n_next)
    if here is None or there is None:
        missing = n if here is None else n_next
        raise DomainError(f"octave n={missing} was not scanned")

    def formula(y: float) -> float:
        return psi1_formula(coeffs, zeros, g, y, T)

    lower = delta1(formula, x, h, "minus", domain_min=1.0) / h
    upper = delta1(formula, x, h, "plus") / h
    exact_lower, exact_upper = exact_first_difference_bounds(spec, x, h)

    return Thm2Bounds(
        x=x, n=n, T=T, h=h,
        lower=lower, upper=upper,
        exact_lower=exact_lower, exact_upper=exact_upper,
        psi=psi(spec, x),
        exceptional=here.in_H(x) or there.in_H(x + h),
        case="I" if n_next == n else "II",
        low_range=low_range_bound(zeros, x, n ** efgh.params.beta),
    )


def residual_thm2(spec: LengthSpectrum, zeros: ZeroSet, x: float, epsilon: float = 0.01) -> float:
    """psi(x) - x - sum_{3/4 - epsilon < rho < 1} x^rho / rho"""
    if not 0 <= epsilon < 0.25:
        raise DomainError(f"epsilon must lie in [0, 1/4), got {epsilon!r}")
    return psi(spec, x) - x - real_zero_sum(zeros, x, RESIDUAL_REAL_ZERO_CUTOFF - epsilon)
