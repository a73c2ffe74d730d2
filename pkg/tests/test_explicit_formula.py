import math
import random
from fractions import Fraction

import numpy as np
import pytest

from conftest import make_zeros
from geodesic_lab.errors import DomainError, RankDeficientFitError, SeriesDivergenceError
from geodesic_lab.pipeline.exceptional_set import residual_thm2
from geodesic_lab.pipeline.explicit_formula import (
    SmoothCoefficients,
    delta1,
    delta2,
    fit_error_exponent,
    fit_psi1_coefficients,
    fit_psi2_coefficients,
    fit_smooth_coefficients,
    integrated_series_term,
    low_range_bound,
    psi1_formula,
    psi2_formula,
    real_zero_sum,
    reconstruct_psi_thm1,
    residual_thm1,
    sandwich,
    small_series_G,
    spectral_sum_psi1,
    spectral_sum_psi2,
    tail_split_bound,
)
from geodesic_lab.pipeline.group_models import enumerate_length_spectrum, modular_generators
from geodesic_lab.pipeline.spectral_data import eigenvalues_to_zeros, load_eigenvalue_file, synthesize_zeros
from geodesic_lab.pipeline.summatory import batch_profile, psi


def G_closed(x, g):
    return (2 * g - 2) * (1 + (x - 3) * math.log1p(-1 / x))


def integrated_closed(x, g):
    y = 1 / x
    L = -math.log1p(-y)
    oscillating = 0.5 * (L - y - y * y / 2) / (y * y) - 3 * (L - y) / y + 2.5 * L
    return (2 * g - 2) * (2.5 * math.log(x) + 9 / 4 - oscillating)


# === Difference operators ===

def test_second_difference_of_cubic_is_exact():
    rng = random.Random(20240611)
    cube = lambda y: y ** 3 / 6
    for _ in range(1000):
        x = Fraction(rng.uniform(1.0, 1e4))
        h = Fraction(rng.uniform(1e-3, 1e3))
        value = delta2(cube, x, h) / (h * h)
        assert value == x + h
        assert abs(float(value) - float(x + h)) <= 4 * math.ulp(float(x + h))
        assert delta2(cube, x, h, "minus") / (h * h) == x - h


def test_first_difference_both_directions():
    x, h = Fraction(7, 3), Fraction(1, 5)
    square = lambda y: y * y
    assert delta1(square, x, h) == 2 * x * h + h * h
    assert delta1(square, x, h, "minus") == 2 * x * h - h * h


def test_difference_operator_contracts():
    with pytest.raises(DomainError):
        delta2(math.exp, 1.0, 0.0)
    with pytest.raises(DomainError):
        delta1(math.exp, 1.0, 0.1, "sideways")
    with pytest.raises(DomainError, match="domain minimum"):
        delta2(math.log, 1.5, 0.5, "minus", domain_min=1.0)
    with pytest.raises(DomainError):
        delta1(math.log, 1.5, 1.0, "minus", domain_min=1.0)


def test_sandwich_of_cubic():
    lower, upper = sandwich(lambda y: y ** 3 / 6, Fraction(10), Fraction(2))
    assert (lower, upper) == (8, 12)


# === Smooth series ===

@pytest.mark.parametrize("x", [1.5, 2.0, 5.0, 10.0, 100.0])
def test_small_series_matches_closed_form(x):
    assert small_series_G(x, 2) == pytest.approx(G_closed(x, 2), rel=1e-10)
    assert small_series_G(x, 3) == pytest.approx(2 * G_closed(x, 2), rel=1e-10)


@pytest.mark.parametrize("x", [2.0, 5.0, 10.0, 100.0])
def test_integrated_series_matches_closed_form(x):
    assert integrated_series_term(x, 2) == pytest.approx(integrated_closed(x, 2), rel=1e-10)


def test_integrated_series_is_an_antiderivative():
    x, step = 10.0, 1e-4
    slope = (integrated_series_term(x + step, 2) - integrated_series_term(x - step, 2)) / (2 * step)
    assert slope == pytest.approx(small_series_G(x, 2), rel=1e-6)
    assert integrated_series_term(1.0, 2) == 0.0


def test_truncated_series():
    assert small_series_G(4.0, 2, k_max=2) == pytest.approx(2 * 2.5 / 4.0)
    assert integrated_series_term(4.0, 2, k_max=2) == pytest.approx(2 * 2.5 * math.log(4.0))
    partial = 2 * (2.5 * math.log(4.0) + 7 / 6 * (1 - 1 / 4.0))
    assert integrated_series_term(4.0, 2, k_max=3) == pytest.approx(partial)


def test_series_domain():
    with pytest.raises(SeriesDivergenceError):
        small_series_G(1.0, 2)
    with pytest.raises(SeriesDivergenceError):
        integrated_series_term(0.5, 2)
    with pytest.raises(DomainError):
        small_series_G(2.0, 1)


# === Zero sums ===

def test_single_pair_matches_complex_arithmetic():
    zeros = make_zeros([5.0], coverage=10.0)
    rho = 0.5 + 5.0j
    x = 50.0
    expected1 = 2 * (x ** (rho + 1) / (rho * (rho + 1))).real
    expected2 = 2 * (x ** (rho + 2) / (rho * (rho + 1) * (rho + 2))).real
    assert spectral_sum_psi1(zeros, x, 10.0) == pytest.approx(expected1, rel=1e-12)
    assert spectral_sum_psi2(zeros, x) == pytest.approx(expected2, rel=1e-12)
    assert spectral_sum_psi1(zeros, x, 10.0, include_trivial=True) == pytest.approx(expected1 + x * x / 2)
    # ordinates at the cutoff are excluded
    assert spectral_sum_psi1(zeros, x, 5.0) == 0.0


def test_real_zeros_enter_the_sums():
    zeros = make_zeros([], real_zeros=[(0.8, 2)])
    x = 30.0
    assert spectral_sum_psi1(zeros, x, 10.0) == pytest.approx(2 * x ** 1.8 / (0.8 * 1.8))
    assert spectral_sum_psi2(zeros, x) == pytest.approx(2 * x ** 2.8 / (0.8 * 1.8 * 2.8))


def test_real_zero_window():
    zeros = make_zeros([], real_zeros=[(0.74, 1), (0.8, 1)])
    x = 100.0
    assert real_zero_sum(zeros, x, 0.75) == pytest.approx(x ** 0.8 / 0.8)
    assert real_zero_sum(zeros, x, 0.73) == pytest.approx(x ** 0.8 / 0.8 + x ** 0.74 / 0.74)
    assert real_zero_sum(zeros, x, 0.8) == 0.0
    with pytest.raises(DomainError):
        real_zero_sum(zeros, x, 0.4)


def test_tail_split_and_low_range_bounds():
    zeros = make_zeros([1.0, 10.0], [1, 2])
    x, h = 100.0, 20.0
    split = tail_split_bound(zeros, x, h, M=5.0)
    assert split.head == pytest.approx(10.0 * 2 / math.sqrt(1.25))
    assert split.tail == pytest.approx(x ** 2.5 / h ** 2 * 4 / (100.25 ** 1.5))
    assert low_range_bound(zeros, x, 5.0) == pytest.approx(split.head)
    with pytest.raises(DomainError):
        tail_split_bound(zeros, x, h, M=2.0)


def write_eigenvalue_file(path, zeros):
    lines = ["# lambda,multiplicity"]
    lines += [f"{lam!r},{mult}" for lam, mult in zeros.to_eigenvalues().entries]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_psi2_formula_converges_as_T_doubles(tmp_path):
    weyl = synthesize_zeros(4 * math.pi, 40.0, seed=5)
    path = write_eigenvalue_file(tmp_path / "eigenvalues.txt", weyl)
    zeros = eigenvalues_to_zeros(load_eigenvalue_file(path), 4 * math.pi)
    assert zeros.trivial
    assert zeros.count >= 50

    coeffs = SmoothCoefficients(alpha0p=0.1, beta1=-0.3)
    grid = np.geomspace(10.0, 200.0, 60)
    target = [psi2_formula(coeffs, zeros, 2, float(x)) for x in grid]
    errors = {
        T: np.abs(np.array([psi2_formula(coeffs, zeros, 2, float(x), T=T) for x in grid]) - target)
        for T in (5.0, 10.0, 20.0)
    }
    for T in (5.0, 10.0):
        assert np.mean(errors[2 * T] < errors[T]) >= 0.8


def test_psi1_formula_is_derivative_of_psi2_formula():
    zeros = make_zeros([3.0, 7.5])
    coeffs = SmoothCoefficients(alpha0=0.3, beta0=-0.01, alpha1=2.0, beta1=0.5,
                                alpha0p=0.1525, beta0p=-0.005, alpha1p=2.0, beta2=1.0)
    x, step = 60.0, 1e-3
    slope = (psi2_formula(coeffs, zeros, 2, x + step) - psi2_formula(coeffs, zeros, 2, x - step)) / (2 * step)
    # 2 alpha0p + beta0p = alpha0, 2 beta0p = beta0 and alpha1p = alpha1; beta1 x log x leaves beta1 over
    expected = psi1_formula(coeffs, zeros, 2, x, math.inf) + coeffs.beta1
    assert slope == pytest.approx(expected, rel=1e-7)


# === Reconstruction and residuals ===

def test_thm1_sandwich_without_zeros():
    zeros = make_zeros([])
    coeffs = SmoothCoefficients()
    for x in (100.0, 1e3, 1e4):
        bounds = reconstruct_psi_thm1(coeffs, zeros, 2, x)
        assert bounds.h == pytest.approx(x ** 0.75)
        assert bounds.lower < x < bounds.upper
        assert bounds.width == pytest.approx(2 * bounds.h, rel=1e-3)


def test_thm1_needs_room_below_x():
    with pytest.raises(DomainError):
        reconstruct_psi_thm1(SmoothCoefficients(), make_zeros([]), 2, 10.0)


def test_residuals(modular_small):
    zeros = make_zeros([], real_zeros=[(0.74, 1), (0.8, 1)])
    x = 200.0
    base = psi(modular_small, x) - x
    assert residual_thm1(modular_small, zeros, x) == pytest.approx(base - x ** 0.8 / 0.8)
    assert residual_thm2(modular_small, zeros, x, 0.02) == pytest.approx(
        base - x ** 0.8 / 0.8 - x ** 0.74 / 0.74
    )
    assert residual_thm2(modular_small, zeros, x, 0.0) == residual_thm1(modular_small, zeros, x)


# === Fits ===

def test_linear_fits_recover_coefficients():
    grid = np.geomspace(10.0, 1e3, 40)
    logx = np.log(grid)
    r1 = 2.0 * grid + 0.5 * grid * logx - 3.0 + 1.5 * logx
    (a0, b0, a1, b1), res1 = fit_psi1_coefficients(grid, r1)
    assert (a0, b0, a1, b1) == pytest.approx((2.0, 0.5, -3.0, 1.5), rel=1e-8)
    assert res1 < 1e-12

    r2 = -0.25 * grid ** 2 + 0.01 * grid ** 2 * logx + 4.0 * grid + 7.0
    coef2, res2 = fit_psi2_coefficients(grid, r2)
    assert tuple(coef2) == pytest.approx((-0.25, 0.01, 4.0, 7.0), rel=1e-6)
    assert res2 < 1e-12


def test_fits_reject_rank_deficient_grids():
    with pytest.raises(RankDeficientFitError):
        fit_psi1_coefficients([10.0, 20.0, 30.0], [1.0, 2.0, 3.0])
    with pytest.raises(RankDeficientFitError):
        fit_psi2_coefficients([10.0] * 6, [1.0] * 6)


def test_fit_smooth_coefficients_on_bolza(bolza_200, sample_eigenvalue_path):
    zeros = eigenvalues_to_zeros(load_eigenvalue_file(sample_eigenvalue_path), 4 * math.pi)
    grid = [float(x) for x in np.geomspace(10.0, 200.0, 30)]
    coeffs = fit_smooth_coefficients(bolza_200, zeros, grid)
    assert coeffs.grid == (10.0, 200.0, 30)
    assert math.isinf(coeffs.T)
    assert 0 <= coeffs.residual_psi1 < 1
    assert 0 <= coeffs.residual_psi2 < 1

    # the psi1 fit is a least-squares projection, so it cannot be worse than no fit
    profile = batch_profile(bolza_200, grid)
    fitted = [psi1_formula(coeffs, zeros, 2, x, math.inf) for x in grid]
    bare = [x * x / 2 + small_series_G(x, 2) + spectral_sum_psi1(zeros, x, math.inf) for x in grid]
    err_fit = np.linalg.norm(np.array(fitted) - profile.psi1)
    err_bare = np.linalg.norm(np.array(bare) - profile.psi1)
    assert err_fit <= err_bare * (1 + 1e-9)


def test_fit_smooth_coefficients_needs_four_points(bolza_200):
    with pytest.raises(RankDeficientFitError):
        fit_smooth_coefficients(bolza_200, make_zeros([]), [10.0, 20.0, 30.0])


def test_error_exponent_fit():
    xs = np.geomspace(10.0, 1e4, 30)
    fit = fit_error_exponent([(x, 3 * x ** 0.75) for x in xs])
    assert fit.slope == pytest.approx(0.75)
    assert fit.intercept == pytest.approx(math.log(3))
    assert fit.r2 == pytest.approx(1.0)

    with_log = fit_error_exponent([(x, -(x ** 0.6) / math.log(x)) for x in xs], log_power=1.0)
    assert with_log.slope == pytest.approx(0.6)

    padded = fit_error_exponent([(x, x ** 0.5) for x in xs] + [(50.0, 0.0), (60.0, 0.0)])
    assert padded.dropped == 2
    assert padded.used == 30


def test_error_exponent_fit_contracts():
    with pytest.raises(DomainError, match="fewer than 10"):
        fit_error_exponent([(x, x) for x in (10.0, 100.0, 1000.0)])
    with pytest.raises(DomainError, match="two decades"):
        fit_error_exponent([(x, x) for x in np.linspace(10.0, 500.0, 20)])


@pytest.mark.slow
def test_modular_residual_scaling():
    spectrum = enumerate_length_spectrum(modular_generators(), 1e5)
    zeros = make_zeros([], area=math.pi / 3)
    grid = [float(x) for x in np.geomspace(10.0, 1e5, 400)]
    pairs = [(x, residual_thm1(spectrum, zeros, x)) for x in grid]
    scaled = {x: abs(r) / x ** 0.75 for x, r in pairs}
    top = max(v for x, v in scaled.items() if x >= 1e4)
    below = max(v for x, v in scaled.items() if 1e3 <= x < 1e4)
    assert top <= 2 * below
    assert fit_error_exponent(pairs).slope <= 0.85
