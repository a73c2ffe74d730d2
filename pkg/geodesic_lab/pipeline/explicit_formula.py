import logging
import math
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..errors import DomainError, RankDeficientFitError, SeriesDivergenceError
from .group_models import LengthSpectrum
from .spectral_data import ZeroSet, weyl_check
from .summatory import batch_profile, psi

logger = logging.getLogger("geodesic_lab")

MAX_SERIES_TERMS = 1_000_000
# sum_{k>=3} (2k+1) / (k (k-1) (k-2)), by partial fractions
INTEGRATED_SERIES_CONSTANT = 9.0 / 4.0
RESIDUAL_REAL_ZERO_CUTOFF = 0.75


class SmoothCoefficients(BaseModel):
    """Fitted constants of the psi1 and psi2 explicit formulas."""

    model_config = ConfigDict(frozen=True)

    alpha0: float = 0.0
    beta0: float = 0.0
    alpha1: float = 0.0
    beta1: float = Field(default=0.0, description="Shared by both formulas")
    alpha0p: float = 0.0
    beta0p: float = 0.0
    alpha1p: float = 0.0
    beta2: float = 0.0
    residual_psi1: float = Field(default=0.0, description="Relative residual norm of the psi1 fit")
    residual_psi2: float = Field(default=0.0, description="Relative residual norm of the psi2 fit")
    grid: Tuple[float, float, int] = Field(default=(0.0, 0.0, 0), description="(min, max, count) of the fit grid")
    T: float = Field(default=math.inf, description="Ordinate truncation used in the fit")


class TailSplit(BaseModel):
    model_config = ConfigDict(frozen=True)

    head: float
    tail: float


class Thm1Bounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float
    h: float
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float, rel_tol: float = 1e-12) -> bool:
        slack = rel_tol * max(1.0, abs(value))
        return self.lower - slack <= value <= self.upper + slack


class ExponentFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    r2: float
    used: int
    dropped: int
    log_power: float = 0.0


def _check_genus(g: int):
    if g < 2:
        raise DomainError(f"genus must be >= 2, got {g!r}")


def small_series_G(x: float, g: int, tol: float = 1e-15, k_max: Optional[int] = None) -> float:
    """(2g-2) * sum_{k>=2} (2k+1)/(k(k-1)) x^(1-k)"""
    _check_genus(g)
    if not x > 1:
        raise SeriesDivergenceError(f"series diverges for x={x!r} <= 1")
    y = 1.0 / x
    terms: List[float] = []
    running = 0.0
    power = y
    k = 2
    while True:
        term = (2 * k + 1) / (k * (k - 1)) * power
        terms.append(term)
        running += term
        if k_max is not None and k >= k_max:
            break
        power *= y
        nxt = (2 * k + 3) / ((k + 1) * k) * power
        if abs(nxt) < tol * abs(running):
            break
        k += 1
        if k > MAX_SERIES_TERMS:
            raise SeriesDivergenceError(f"series not converged after {MAX_SERIES_TERMS} terms at x={x!r}")
    return (2 * g - 2) * math.fsum(terms)


def integrated_series_term(x: float, g: int, tol: float = 1e-15, k_max: Optional[int] = None) -> float:
    """Antiderivative of small_series_G from 1 to x, term by term.

    The k = 2 term integrates to (5/2) log x; k >= 3 terms give
    (2k+1)/(k(k-1)) (1 - x^(2-k)) / (k-2).
    """
    _check_genus(g)
    if x == 1:
        return 0.0
    if not x > 1:
        raise SeriesDivergenceError(f"series diverges for x={x!r} < 1")
    log_part = 2.5 * math.log(x)
    if k_max is not None and k_max < 3:
        return (2 * g - 2) * log_part

    y = 1.0 / x
    constant: List[float] = []
    oscillating: List[float] = []
    running = 0.0
    power = y
    k = 3
    while True:
        coeff = (2 * k + 1) / (k * (k - 1) * (k - 2))
        if k_max is not None:
            constant.append(coeff)
        term = coeff * power
        oscillating.append(term)
        running += term
        if k_max is not None and k >= k_max:
            break
        power *= y
        nxt = (2 * k + 3) / ((k + 1) * k * (k - 1)) * power
        if k_max is None and abs(nxt) < tol * abs(running):
            break
        k += 1
        if k > MAX_SERIES_TERMS:
            raise SeriesDivergenceError(f"series not converged after {MAX_SERIES_TERMS} terms at x={x!r}")
    const_part = math.fsum(constant) if k_max is not None else INTEGRATED_SERIES_CONSTANT
    return (2 * g - 2) * (log_part + const_part - math.fsum(oscillating))


def pair_terms(gammas: np.ndarray, mults: np.ndarray, x: float, order: int) -> np.ndarray:
    """2 * mult * Re[x^(rho+order) / (rho (rho+1) ... (rho+order))] for rho = 1/2 + i gamma"""
    rho = 0.5 + 1j * gammas
    denom = rho * (rho + 1)
    if order == 2:
        denom = denom * (rho + 2)
    phase = np.exp(1j * gammas * math.log(x))
    return 2.0 * mults * x ** (0.5 + order) * np.real(phase / denom)


def _real_terms(zeros: ZeroSet, x: float, order: int) -> List[float]:
    terms = []
    for rho, mult in zeros.real_zeros:
        denom = rho * (rho + 1) * ((rho + 2) if order == 2 else 1.0)
        terms.append(mult * x ** (rho + order) / denom)
    return terms


def _check_x(x: float):
    if not x > 0:
        raise DomainError(f"x must be positive, got {x!r}")


def spectral_sum_psi1(zeros: ZeroSet, x: float, T: float, include_trivial: bool = False) -> float:
    """Sum over zeros with gamma < T of x^(rho+1)/(rho(rho+1)), pairs folded, plus real zeros.

    The trivial zero is the separate x^2/2 main term unless include_trivial is set.
    """
    _check_x(x)
    gammas, mults = zeros.window(0.0, T, include_upper=False)
    terms = list(pair_terms(gammas, mults, x, 1))
    terms.extend(_real_terms(zeros, x, 1))
    if include_trivial and zeros.trivial:
        terms.append(x * x / 2.0)
    return math.fsum(terms)


def spectral_sum_psi2(
    zeros: ZeroSet,
    x: float,
    T: float = math.inf,
    tol: float = 1e-12,
    include_trivial: bool = False,
) -> float:
    """Sum of x^(rho+2)/(rho(rho+1)(rho+2)); with T = inf the stored list is cut
    once the remaining tail bound drops below tol."""
    _check_x(x)
    gammas, mults = zeros.window(0.0, T, include_upper=False)
    if math.isinf(T) and gammas.size:
        rho_abs = np.sqrt(0.25 + gammas ** 2)
        bounds = 2.0 * mults * x ** 2.5 / (rho_abs * np.sqrt(2.25 + gammas ** 2) * np.sqrt(6.25 + gammas ** 2))
        suffix = np.cumsum(bounds[::-1])[::-1]
        below = np.nonzero(suffix < tol)[0]
        if below.size:
            gammas, mults = gammas[:below[0]], mults[:below[0]]
    terms = list(pair_terms(gammas, mults, x, 2))
    terms.extend(_real_terms(zeros, x, 2))
    if include_trivial and zeros.trivial:
        terms.append(x ** 3 / 6.0)
    return math.fsum(terms)


def real_zero_sum(zeros: ZeroSet, x: float, lower: float) -> float:
    """Sum of mult * x^rho / rho over real zeros with lower < rho < 1"""
    if not 0.5 <= lower < 1:
        raise DomainError(f"lower must lie in [1/2, 1), got {lower!r}")
    return math.fsum(mult * x ** rho / rho for rho, mult in zeros.real_zeros if lower < rho < 1)


def delta2(f: Callable, x, h, direction: str = "plus", domain_min=None):
    """Second difference f(x +- 2h) - 2 f(x +- h) + f(x). Works on any numeric type."""
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    if direction == "plus":
        return f(x + 2 * h) - 2 * f(x + h) + f(x)
    if direction == "minus":
        if domain_min is not None and x - 2 * h < domain_min:
            raise DomainError(f"x - 2h = {x - 2 * h!r} below domain minimum {domain_min!r}")
        return f(x - 2 * h) - 2 * f(x - h) + f(x)
    raise DomainError(f"direction must be 'plus' or 'minus', got {direction!r}")


def delta1(f: Callable, x, h, direction: str = "plus", domain_min=None):
    """First difference f(x+h) - f(x) (plus) or f(x) - f(x-h) (minus)."""
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    if direction == "plus":
        return f(x + h) - f(x)
    if direction == "minus":
        if domain_min is not None and x - h < domain_min:
            raise DomainError(f"x - h = {x - h!r} below domain minimum {domain_min!r}")
        return f(x) - f(x - h)
    raise DomainError(f"direction must be 'plus' or 'minus', got {direction!r}")


def sandwich(f: Callable, x, h, domain_min=None):
    """(Delta2- f / h^2, Delta2+ f / h^2); brackets f'' averages, so psi when f = psi2"""
    lower = delta2(f, x, h, "minus", domain_min) / (h * h)
    upper = delta2(f, x, h, "plus") / (h * h)
    return lower, upper


def tail_split_bound(zeros: ZeroSet, x: float, h: float, M: float) -> TailSplit:
    """x^(1/2) sum_{|rho|<M} 1/|rho| and x^(5/2)/h^2 sum_{|rho|>=M} 1/|rho|^3, both members of each pair"""
    if not M > 2:
        raise DomainError(f"M must exceed 2, got {M!r}")
    if not h > 0:
        raise DomainError(f"h must be positive, got {h!r}")
    rho_abs = np.sqrt(0.25 + zeros.gammas ** 2)
    weights = 2.0 * zeros.multiplicities
    inside = rho_abs < M
    head = math.sqrt(x) * math.fsum(weights[inside] / rho_abs[inside])
    tail = x ** 2.5 / (h * h) * math.fsum(weights[~inside] / rho_abs[~inside] ** 3)
    return TailSplit(head=head, tail=tail)


def low_range_bound(zeros: ZeroSet, x: float, Y: float) -> float:
    """x^(1/2) * sum over both members of pairs with gamma <= Y of 1/|rho|"""
    gammas, mults = zeros.window(0.0, Y)
    return math.sqrt(x) * math.fsum(2.0 * mults / np.sqrt(0.25 + gammas ** 2))


def _scaled_lstsq(design: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, float]:
    rows, cols = design.shape
    if rows < cols:
        raise RankDeficientFitError(f"{rows} grid points cannot determine {cols} coefficients")
    scale = np.max(np.abs(design), axis=0)
    if np.any(scale == 0):
        raise RankDeficientFitError("design has an all-zero column")
    coef, _, rank, _ = np.linalg.lstsq(design / scale, target, rcond=None)
    if rank < cols:
        raise RankDeficientFitError(f"design rank {rank} < {cols}; grid too small or collinear")
    coef = coef / scale
    norm = float(np.linalg.norm(target))
    residual = float(np.linalg.norm(target - design @ coef)) / norm if norm > 0 else 0.0
    return coef, residual


def fit_psi1_coefficients(grid: Sequence[float], residuals: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Least squares for (alpha0, beta0, alpha1, beta1) on the basis (x, x log x, 1, log x)"""
    x = np.asarray(grid, dtype=np.float64)
    logx = np.log(x)
    design = np.column_stack([x, x * logx, np.ones_like(x), logx])
    return _scaled_lstsq(design, np.asarray(residuals, dtype=np.float64))


def fit_psi2_coefficients(grid: Sequence[float], residuals: Sequence[float]) -> Tuple[np.ndarray, float]:
    """Least squares for (alpha0', beta0', alpha1', beta2) on the basis (x^2, x^2 log x, x, 1)"""
    x = np.asarray(grid, dtype=np.float64)
    design = np.column_stack([x * x, x * x * np.log(x), x, np.ones_like(x)])
    return _scaled_lstsq(design, np.asarray(residuals, dtype=np.float64))


def fit_smooth_coefficients(
    spec: LengthSpectrum,
    zeros: ZeroSet,
    grid: Sequence[float],
    g: int = 2,
    T: Optional[float] = None,
) -> SmoothCoefficients:
    """
    Fit the smooth constants against exact psi1 / psi2 minus every known term.

    Columns are scaled before the least-squares solve; T bounds the ordinates
    used in the zero sums (all of them when None).

    Returns:
        SmoothCoefficients with the fit grid, T and relative residuals of both fits.
    """
    _check_genus(g)
    T = math.inf if T is None else float(T)
    grid = [float(x) for x in grid]
    if len(grid) < 4:
        raise RankDeficientFitError(f"{len(grid)} grid points cannot determine 4 coefficients")
    if min(grid) <= 1:
        raise DomainError("fit grid must lie above 1")
    if zeros.count:
        report = weyl_check(zeros, min(T, zeros.max_gamma))
        if not report.plausible:
            logger.warning(f"FITTED: zero data fails the Weyl check (ratio {report.ratio:.3f}); fit absorbs the gap")

    profile = batch_profile(spec, grid)
    r1 = [
        p1 - x * x / 2.0 - spectral_sum_psi1(zeros, x, T) - small_series_G(x, g)
        for x, p1 in zip(grid, profile.psi1)
    ]
    c1, res1 = fit_psi1_coefficients(grid, r1)
    alpha0, beta0, alpha1, beta1 = (float(v) for v in c1)

    r2 = [
        p2 - x ** 3 / 6.0 - beta1 * x * math.log(x) - integrated_series_term(x, g) - spectral_sum_psi2(zeros, x, T)
        for x, p2 in zip(grid, profile.psi2)
    ]
    c2, res2 = fit_psi2_coefficients(grid, r2)
    alpha0p, beta0p, alpha1p, beta2 = (float(v) for v in c2)

    coeffs = SmoothCoefficients(
        alpha0=alpha0, beta0=beta0, alpha1=alpha1, beta1=beta1,
        alpha0p=alpha0p, beta0p=beta0p, alpha1p=alpha1p, beta2=beta2,
        residual_psi1=res1, residual_psi2=res2,
        grid=(min(grid), max(grid), len(grid)), T=T,
    )
    logger.info(f"FITTED: {len(grid)} points, residuals psi1={res1:.3e} psi2={res2:.3e}")
    return coeffs


def psi1_formula(
    coeffs: SmoothCoefficients,
    zeros: ZeroSet,
    g: int,
    x: float,
    T: float,
    tol: float = 1e-15,
) -> float:
    """alpha0 x + beta0 x log x + alpha1 + beta1 log x + G(x) + x^2/2 + zero sum over gamma < T"""
    logx = math.log(x)
    return math.fsum([
        coeffs.alpha0 * x,
        coeffs.beta0 * x * logx,
        coeffs.alpha1,
        coeffs.beta1 * logx,
        small_series_G(x, g, tol),
        x * x / 2.0,
        spectral_sum_psi1(zeros, x, T),
    ])


def psi2_formula(
    coeffs: SmoothCoefficients,
    zeros: ZeroSet,
    g: int,
    x: float,
    tol: float = 1e-12,
    T: float = math.inf,
) -> float:
    """The integrated explicit formula for psi2 with the zero sum taken to T (default: all)"""
    if not x >= 1:
        raise DomainError(f"x must be >= 1, got {x!r}")
    logx = math.log(x)
    return math.fsum([
        coeffs.alpha0p * x * x,
        coeffs.beta0p * x * x * logx,
        coeffs.alpha1p * x,
        coeffs.beta1 * x * logx,
        x ** 3 / 6.0,
        coeffs.beta2,
        integrated_series_term(x, g),
        spectral_sum_psi2(zeros, x, T, tol),
    ])


def reconstruct_psi_thm1(
    coeffs: SmoothCoefficients,
    zeros: ZeroSet,
    g: int,
    x: float,
    T: float = math.inf,
    tol: float = 1e-12,
) -> Thm1Bounds:
    """Second-difference sandwich of psi2_formula with h = x^(3/4)"""
    h = x ** 0.75
    if not x - 2 * h > 1:
        raise DomainError(f"x={x!r} too small: x - 2h must exceed 1 for h = x^(3/4)")
    lower, upper = sandwich(lambda y: psi2_formula(coeffs, zeros, g, y, tol, T), x, h, domain_min=1.0)
    return Thm1Bounds(x=x, h=h, lower=lower, upper=upper)


def residual_thm1(spec: LengthSpectrum, zeros: ZeroSet, x: float) -> float:
    """psi(x) - x - sum_{3/4 < rho < 1} x^rho / rho"""
    return psi(spec, x) - x - real_zero_sum(zeros, x, RESIDUAL_REAL_ZERO_CUTOFF)


def fit_error_exponent(pairs: Iterable[Tuple[float, float]], log_power: float = 0.0) -> ExponentFit:
    """OLS of log|residual| (+ log_power * log log x) against log x; zero residuals dropped"""
    pairs = list(pairs)
    usable = [
        (float(x), float(r)) for x, r in pairs
        if x > 0 and r != 0 and math.isfinite(r) and (log_power == 0 or x > 1)
    ]
    dropped = len(pairs) - len(usable)
    if len(usable) < 10:
        raise DomainError(f"fewer than 10 usable pairs ({len(usable)} after dropping {dropped})")
    xs = np.array([x for x, _ in usable])
    if xs.max() / xs.min() < 100:
        raise DomainError("x values must span at least two decades")

    logx = np.log(xs)
    target = np.log(np.abs([r for _, r in usable]))
    if log_power:
        target = target + log_power * np.log(logx)
    slope, intercept = np.polyfit(logx, target, 1)
    fitted = slope * logx + intercept
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    ss_res = float(np.sum((target - fitted) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - ss_res / ss_tot
    if dropped:
        logger.info(f"FITTED: dropped {dropped} zero or invalid residuals")
    return ExponentFit(slope=float(slope), intercept=float(intercept), r2=r2,
                       used=len(usable), dropped=dropped, log_power=log_power)
