import bisect
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from ..errors import DomainError, SpectrumIncompleteError
from .group_models import LengthSpectrum
from .util import Accumulator, get_worker_count

logger = logging.getLogger("geodesic_lab")


class SummatoryProfile(BaseModel):
    model_config = ConfigDict(frozen=True)

    grid: Tuple[float, ...] = Field(description="Ascending x values")
    psi: Tuple[float, ...]
    psi1: Tuple[float, ...]
    psi2: Tuple[float, ...]
    x_max: float = Field(description="Validity bound (spectrum norm bound)")
    provenance: Dict[str, Any] = Field(default_factory=dict)

    def is_monotone(self) -> bool:
        return all(
            all(b >= a for a, b in zip(column, column[1:]))
            for column in (self.psi, self.psi1, self.psi2)
        )

    def rows(self):
        return zip(self.grid, self.psi, self.psi1, self.psi2)


class EventIndex:
    """Prime-power events (P, k) sorted by N(P)^k, with psi, psi1 and psi2 tabulated at each event.

    With weights w = mult * log N and events at N^k, the integrals are built
    segment by segment. Between consecutive events psi is the constant W, so
        psi1(b) = psi1(a) + W d,  psi2(b) = psi2(a) + psi1(a) d + W d^2 / 2,  d = b - a.
    Every increment is nonnegative.
    """

    def __init__(self, classes: Sequence[Tuple[float, int]], x_max: float):
        log_max = math.log(x_max) if x_max > 1 else 0.0
        events = []
        for length, mult in classes:
            k = 1
            # e^{k l} avoids overflowing N^k for large k
            while k * length <= log_max * (1 + 1e-15):
                events.append((math.exp(k * length), mult * length))
                k += 1
        events.sort()
        self.norms = [n for n, _ in events]
        self.weights = [w for _, w in events]

        # Slot i holds the state just after the i-th event; slot 0 is x = 1
        self.at, self.W, self.P1, self.P2 = [1.0], [0.0], [0.0], [0.0]
        w_acc, p1_acc, p2_acc = Accumulator(), Accumulator(), Accumulator()
        for norm, weight in events:
            d = norm - self.at[-1]
            p2_acc.add(self.P1[-1] * d).add(self.W[-1] * d * d / 2.0)
            p1_acc.add(self.W[-1] * d)
            self.at.append(norm)
            self.W.append(w_acc.add(weight).value)
            self.P1.append(p1_acc.value)
            self.P2.append(p2_acc.value)

    def __len__(self) -> int:
        return len(self.norms)

    def evaluate(self, x: float) -> Tuple[float, float, float]:
        i = bisect.bisect_right(self.norms, x)
        W, p1, d = self.W[i], self.P1[i], x - self.at[i]
        return W, p1 + W * d, float(Accumulator(self.P2[i]).add(p1 * d).add(W * d * d / 2.0))

    def _between(self, lo: float, hi: float) -> Tuple[List[float], List[float]]:
        """Events with lo < N^k <= hi"""
        i, j = bisect.bisect_right(self.norms, lo), bisect.bisect_right(self.norms, hi)
        return self.norms[i:j], self.weights[i:j]

    def first_differences(self, x: float, h: float) -> Tuple[float, float]:
        """(Delta1- psi1 / h, Delta1+ psi1 / h) as psi(x) minus and plus the jumps within h of x.

        Returns:
            A pair bracketing psi(x) exactly, since psi(x) is the stored W.
        """
        W = self.W[bisect.bisect_right(self.norms, x)]
        lo, hi = x - h, x + h
        norms, weights = self._between(lo, x)
        lower = math.fsum([W] + [-w * (n - lo) / h for n, w in zip(norms, weights)])
        norms, weights = self._between(x, hi)
        upper = math.fsum([W] + [w * (hi - n) / h for n, w in zip(norms, weights)])
        return lower, upper

    def second_differences(self, x: float, h: float) -> Tuple[float, float]:
        """(Delta2- psi2 / h^2, Delta2+ psi2 / h^2), the means of psi over the two triangular kernels.

        A jump at distance u from x (0 <= u < 2h) enters with the share of the
        square [0, h]^2 lying on the far side of s + t = u.
        """
        W = self.W[bisect.bisect_right(self.norms, x)]

        def share(u: float) -> float:
            r = u / h
            return 1.0 - r * r / 2.0 if r <= 1.0 else (2.0 - r) ** 2 / 2.0

        norms, weights = self._between(x - 2.0 * h, x)
        lower = math.fsum([W] + [-w * share(x - n) for n, w in zip(norms, weights)])
        norms, weights = self._between(x, x + 2.0 * h)
        upper = math.fsum([W] + [w * share(n - x) for n, w in zip(norms, weights)])
        return lower, upper


@lru_cache(maxsize=16)
def _index_for(classes: Tuple[Tuple[float, int], ...], x_max: float) -> EventIndex:
    return EventIndex(classes, x_max)


def event_index(spec: LengthSpectrum) -> EventIndex:
    key = tuple((c.length, c.multiplicity) for c in spec.classes)
    return _index_for(key, float(spec.norm_bound))


def _check_range(spec: LengthSpectrum, x: float):
    if x < 1:
        raise DomainError(f"x must be >= 1, got {x!r}")
    if x > spec.norm_bound * (1 + 1e-12):
        if spec.complete:
            raise SpectrumIncompleteError(
                f"spectrum incomplete: x={x!r} beyond norm bound {spec.norm_bound!r}"
            )
        logger.warning(f"PROFILED: x={x!r} beyond best-effort bound {spec.norm_bound!r}; values are lower bounds")


def psi(spec: LengthSpectrum, x: float) -> float:
    """Sum of mult * log N(P) over prime powers N(P)^k <= x"""
    _check_range(spec, x)
    return event_index(spec).evaluate(x)[0]


def psi1(spec: LengthSpectrum, x: float) -> float:
    """Integral of psi over [1, x]"""
    _check_range(spec, x)
    return event_index(spec).evaluate(x)[1]


def psi2(spec: LengthSpectrum, x: float) -> float:
    """Integral of psi1 over [1, x]"""
    _check_range(spec, x)
    return event_index(spec).evaluate(x)[2]


def batch_profile(
    spec: LengthSpectrum,
    grid: Sequence[float],
    workers: Optional[int] = None,
) -> SummatoryProfile:
    """
    psi, psi1, psi2 on an ascending grid.

    Returns:
        SummatoryProfile whose values equal the pointwise calls exactly,
        whatever the worker count.
    """
    grid = [float(x) for x in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid must be strictly ascending")
    for x in (grid[:1] + grid[-1:]):
        _check_range(spec, x)

    index = event_index(spec)
    workers = workers or get_worker_count()
    values: List[Optional[Tuple[float, float, float]]] = [None] * len(grid)

    def fill(chunk: range):
        for i in chunk:
            values[i] = index.evaluate(grid[i])

    size = max(1, math.ceil(len(grid) / workers))
    chunks = [range(lo, min(lo + size, len(grid))) for lo in range(0, len(grid), size)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        list(pool.map(fill, chunks))

    logger.info(f"PROFILED: {len(grid)} points over {len(index)} events ({spec.model})")
    return SummatoryProfile(
        grid=tuple(grid),
        psi=tuple(v[0] for v in values),
        psi1=tuple(v[1] for v in values),
        psi2=tuple(v[2] for v in values),
        x_max=spec.norm_bound,
        provenance={"model": spec.model, "norm_bound": spec.norm_bound, "complete": spec.complete,
                    "classes": spec.class_count},
    )


def exact_sandwich(spec: LengthSpectrum, x: float, h: float) -> Tuple[float, float]:
    """(Delta2- psi2 / h^2, Delta2+ psi2 / h^2) from the exact psi2.

    Evaluated from the jumps within 2h of x rather than by differencing psi2,
    so lower <= psi(x) <= upper holds in floating point too.
    """
    if not 0 < h < (x - 1) / 2:
        raise DomainError(f"need 0 < h < (x - 1)/2, got x={x!r}, h={h!r}")
    _check_range(spec, x + 2 * h)
    return event_index(spec).second_differences(x, h)


def exact_first_difference_bounds(spec: LengthSpectrum, x: float, h: float) -> Tuple[float, float]:
    """(Delta1- psi1 / h, Delta1+ psi1 / h) from the exact psi1"""
    if not 0 < h < x - 1:
        raise DomainError(f"need 0 < h < x - 1, got x={x!r}, h={h!r}")
    _check_range(spec, x + h)
    return event_index(spec).first_differences(x, h)
