"""Entropy densities, structure functions, and concavity conditions."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from gammaflow.densities import constant, tilted
from gammaflow.entropy import (CustomMobility, EntropyModel, f_and_l_psi,
                               mccann_check, psi_alpha, relative_entropy,
                               shifted_entropy)

ALPHAS = (0.0, 0.25, 0.5, 0.75, 1.0)


def test_psi_normalization():
    for alpha in ALPHAS:
        assert psi_alpha(1.0, alpha) == pytest.approx(0.0, abs=1e-14)


def test_psi_rejects_bad_exponent():
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        psi_alpha(1.0, 1.5)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        psi_alpha(1.0, -0.1)


def test_psi_quadratic_case():
    # alpha = 0 entropy is the squared distance to 1, halved
    assert psi_alpha(3.0, 0.0) == pytest.approx(2.0, abs=1e-14)


def test_psi_log_limit():
    # the closed form at alpha ~ 1 matches the logarithmic limit
    exact = 2 * np.log(2.0) - 1.0
    assert psi_alpha(2.0, 0.999) == pytest.approx(exact, abs=1e-3)
    assert psi_alpha(2.0, 1.0) == pytest.approx(exact, abs=1e-14)


def test_psi_at_vacuum_continuous_extension():
    for alpha in ALPHAS:
        assert psi_alpha(0.0, alpha) == pytest.approx(1.0 / (2.0 - alpha))


@given(rho=st.floats(0.0, 50.0), alpha=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_psi_nonnegative_everywhere(rho, alpha):
    assert psi_alpha(rho, alpha) >= -1e-13


@given(a=st.floats(0.01, 20.0), b=st.floats(0.01, 20.0),
       alpha=st.floats(0.0, 1.0), theta=st.floats(0.0, 1.0))
@settings(max_examples=200, deadline=None)
def test_psi_convex_along_segments(a, b, alpha, theta):
    mix = theta * a + (1 - theta) * b
    upper = theta * psi_alpha(a, alpha) + (1 - theta) * psi_alpha(b, alpha)
    assert psi_alpha(mix, alpha) <= upper + 1e-10 * (1 + upper)


def test_second_derivative_inverts_mobility_symbolic():
    # symbolic differentiation oracle: psi'' h = 1 to 1e-10
    import sympy as sp

    r, al = sp.symbols("r alpha", positive=True)
    expr = (r**(2 - al) - 1 - (2 - al) * (r - 1)) / ((2 - al) * (1 - al))
    d2 = sp.diff(expr, r, 2)
    for alpha in (0.0, 0.25, 0.5, 0.75):
        f = sp.lambdify(r, d2.subs(al, alpha), "numpy")
        rho = np.geomspace(1e-2, 1e2, 1000)
        model = EntropyModel(alpha)
        assert np.max(np.abs(f(rho) * model.h(rho) - 1.0)) <= 1e-10
    # logarithmic case symbolically: (r log r - r + 1)'' = 1/r
    d2log = sp.diff(r * sp.log(r) - r + 1, r, 2)
    assert sp.simplify(d2log - 1 / r) == 0


def test_second_derivative_inverts_mobility_finite_differences():
    # same identity via differences of the closed form (roundoff-limited)
    rho = np.geomspace(1e-2, 1e2, 1000)
    for alpha in ALPHAS:
        model = EntropyModel(alpha)
        h_step = 1e-6 * np.maximum(rho, 1.0)
        d2 = (model.dpsi(rho + h_step) - model.dpsi(rho - h_step)) / (2 * h_step)
        assert np.max(np.abs(d2 * model.h(rho) - 1.0)) <= 1e-7


def test_mobility_concave_and_refined_condition():
    rho = np.geomspace(1e-3, 1e3, 400)
    for alpha in ALPHAS:
        model = EntropyModel(alpha)
        h = model.h(rho)
        # divided second differences (the lattice is log-spaced)
        a, b, c = rho[:-2], rho[1:-1], rho[2:]
        second = ((h[2:] - h[1:-1]) / (c - b) - (h[1:-1] - h[:-2]) / (b - a)) \
            / (c - a)
        assert np.max(second) <= 1e-10
        if alpha > 0:
            beta = model.beta_raw
            hpp = alpha * (alpha - 1) * rho**(alpha - 2)
            hp = alpha * rho**(alpha - 1)
            refined = (1 - beta) * h * hpp + 2 * beta * hp**2
            assert np.max(refined) <= 1e-10


def test_mobility_alpha_root_is_linear():
    # h^(1/alpha) is the identity for the power family: flat second
    # differences certify its concavity trivially
    rho = np.linspace(0.5, 50.0, 200)
    for alpha in (0.25, 0.5, 0.75, 1.0):
        model = EntropyModel(alpha)
        z = model.h(rho) ** (1.0 / alpha)
        second = z[:-2] - 2 * z[1:-1] + z[2:]
        assert np.max(np.abs(second)) <= 1e-9


def test_superlinearity_of_entropy():
    rho = np.linspace(1.0, 200.0, 400)
    for alpha in ALPHAS:
        ratio = psi_alpha(rho, alpha) / rho
        assert np.all(np.diff(ratio) > -1e-13)


def test_beta_values():
    assert EntropyModel(0.5).beta == pytest.approx(1.0 / 3.0)
    assert EntropyModel(1.0).beta == 0.0
    # the constant mobility's raw modulus leaves the admissible range of
    # the decay refinement, so the usable value falls back to zero
    m0 = EntropyModel(0.0)
    assert m0.beta_raw == 1.0
    assert m0.beta == 0.0
    assert m0.beta_clamped


# -- shifted entropy -----------------------------------------------------------


def test_shift_at_one_recovers_base():
    r = np.linspace(0.0, 5.0, 21)
    for alpha in ALPHAS:
        model = EntropyModel(alpha)
        assert np.allclose(shifted_entropy(r, 1.0, model), model.psi(r),
                           atol=1e-13)


def test_shifted_log_entropy_closed_form():
    # g = 1/x family: x log x - a log a - (1 + log a)(x - a), at a = e
    model = EntropyModel(1.0)
    a = np.e
    x = np.linspace(0.2, 9.0, 25)
    expected = x * np.log(x) - a - (2.0) * (x - a)
    assert np.allclose(shifted_entropy(x, a, model), expected, atol=1e-12)
    assert shifted_entropy(a, a, model) == pytest.approx(0.0, abs=1e-14)


def test_shifted_entropy_matches_quadrature(rng):
    # adaptive quadrature oracle for the double-integral representation
    model = EntropyModel(0.5)
    for _ in range(20):
        x = float(rng.uniform(0.1, 10.0))
        a = float(rng.uniform(0.1, 10.0))
        val, err = quad(lambda s: (x - s) * model.g(s), a, x, epsabs=1e-12)
        assert shifted_entropy(x, a, model) == pytest.approx(val, abs=1e-8)


def test_shifted_entropy_nonnegative(rng):
    model = EntropyModel(0.5)
    x = rng.uniform(0.0, 10.0, size=200)
    a = float(rng.uniform(0.5, 2.0))
    assert np.all(shifted_entropy(x, a, model) >= -1e-12)
    with pytest.raises(ValueError, match="positive"):
        shifted_entropy(1.0, -1.0, model)


# -- relative entropy ----------------------------------------------------------


def test_relative_entropy_of_constants(gauss_grid, log_model):
    for c in (0.5, 1.0, 3.0):
        assert relative_entropy(constant(gauss_grid, c), log_model) == \
            pytest.approx(0.0, abs=1e-12)


def test_relative_entropy_tilted_gaussian(gauss_grid, log_model):
    # closed form for the exponential tilt against the Gaussian weight
    a = 0.5
    val = relative_entropy(tilted(gauss_grid, a), log_model)
    assert val == pytest.approx(a * a / 2.0, rel=1e-4)


def test_relative_entropy_zero_mass_rejected(gauss_grid, log_model):
    with pytest.raises(ValueError, match="positive mass"):
        relative_entropy(constant(gauss_grid, 0.0), log_model)


def _shifted_log_family(x, a):
    return x * np.log(x) - a * np.log(a) - (1 + np.log(a)) * (x - a)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 0.75])
@pytest.mark.parametrize("a", [0.3, 1.0, 1.7])
def test_log_family_brackets_shifted_entropy(alpha, a):
    # concavity chord bound: above the shift point the shifted entropy
    # dominates a*g(a) times the shifted log family, below it is
    # dominated (both sides vanish to second order at the shift point;
    # the prefactor carries the chord normalization h(x) >= h(a) x / a)
    model = EntropyModel(alpha)
    scale = a * float(model.g(a))
    x_hi = np.linspace(a, 60.0, 300)
    assert np.all(shifted_entropy(x_hi, a, model)
                  - scale * _shifted_log_family(x_hi, a) >= -1e-10)
    x_lo = np.linspace(0.02, a, 150)
    assert np.all(shifted_entropy(x_lo, a, model)
                  - scale * _shifted_log_family(x_lo, a) <= 1e-10)


def test_log_lower_bound_unit_normalized_shift():
    # with the shift point at the entropy's normalization the plain
    # g(a)-prefactor bound holds nodewise above the shift point
    model = EntropyModel(0.5)
    for a in (1.0, 1.7, 3.0):
        x = np.linspace(a, 60.0, 300)
        assert np.all(shifted_entropy(x, a, model)
                      - float(model.g(a)) * _shifted_log_family(x, a) >= -1e-10)


# -- structure functions -------------------------------------------------------


def test_f_and_l_psi_normalization():
    for alpha in ALPHAS:
        model = EntropyModel(alpha)
        f0, l1 = model.f(0.0), model.l_psi(1.0)
        assert f0 == 0.0
        assert l1 == pytest.approx(0.0, abs=1e-14)


def test_f_closed_forms():
    assert EntropyModel(0.0).f(3.0) == pytest.approx(3.0)
    assert EntropyModel(1.0).f(4.0) == pytest.approx(4.0)  # 2 sqrt(4)
    r = np.linspace(0.1, 5, 17)
    assert np.allclose(EntropyModel(1.0).f(r), 2 * np.sqrt(r))


def test_f_matches_quadrature(rng):
    model = EntropyModel(0.5)
    for _ in range(10):
        r = float(rng.uniform(0.05, 8.0))
        val, _ = quad(lambda s: np.sqrt(model.g(s)), 0.0, r)
        assert model.f(r) == pytest.approx(val, rel=1e-8)


def test_l_psi_derivative_identity():
    # d l_psi / dr = r / h(r), checked by finite differences at r = 2
    model = EntropyModel(0.5)
    h = 1e-6
    fd = (model.l_psi(2 + h) - model.l_psi(2 - h)) / (2 * h)
    assert fd == pytest.approx(np.sqrt(2.0), abs=1e-6)
    f, l = f_and_l_psi(2.0, model)
    assert (f, l) == (model.f(2.0), model.l_psi(2.0))


# -- displacement-convexity conditions ----------------------------------------


def test_mccann_power_family():
    samples = np.geomspace(1e-4, 1e4, 1000)
    report = mccann_check(EntropyModel(0.5), samples)
    assert report.passed, str(report)


def test_mccann_log_case_symbolic_values():
    # with the vacuum anchor, x psi' - psi = x and the second condition
    # vanishes identically for the log entropy
    samples = np.geomspace(1e-3, 1e3, 101)
    report = mccann_check(EntropyModel(1.0), samples)
    assert report.passed
    assert np.allclose(report.first_condition, samples, rtol=1e-12)
    assert np.max(np.abs(report.second_condition)) <= 1e-9 * samples.max()


def test_mccann_detects_negated_entropy():
    class Negated(EntropyModel):
        def psi(self, r):
            return -super().psi(r)

        def dpsi(self, r):
            return -super().dpsi(r)

        def g(self, r):
            return -super().g(r)

    report = mccann_check(Negated(0.5), np.geomspace(0.1, 10, 50))
    assert not report.passed
    assert report.violations.size == 50


def test_mccann_rejects_nonpositive_samples():
    with pytest.raises(ValueError, match="positive"):
        mccann_check(EntropyModel(0.5), np.array([0.0, 1.0]))


# -- custom mobilities ---------------------------------------------------------


def test_custom_mobility_matches_power_family():
    custom = CustomMobility(lambda r: np.sqrt(r), "sqrt")
    model = EntropyModel(0.5)
    r = np.linspace(0.5, 5.0, 9)
    assert np.allclose(custom.g(r), model.g(r))
    assert np.allclose(custom.dg(r), model.dg(r), rtol=1e-5, atol=1e-7)
    for x in (0.7, 2.3):
        assert custom.shifted_psi(x, 1.3) == pytest.approx(
            model.shifted_psi(x, 1.3), abs=1e-7)


def test_custom_mobility_quadratic_growth():
    custom = CustomMobility(lambda r: r**2, "square")
    assert custom.h_infinity > 1e6  # superlinear growth, no finite slope
    assert custom.d2g(np.array([2.0]))[0] == pytest.approx(
        6.0 / 2.0**4, rel=1e-4)
