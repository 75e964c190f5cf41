"""Potential families, smoothing approximants, linear-growth certificates."""

import numpy as np
import pytest

from gammaflow.grid import build_grid
from gammaflow.potentials import (certify_linear_bound, harmonic,
                                  make_potential, quartic_blend, soft_abs,
                                  validate_convexity, yosida_approx)


def test_harmonic_values():
    pot = harmonic()
    assert pot.v(2.0) == pytest.approx(2.0)
    assert pot.dv(2.0) == pytest.approx(2.0)
    assert pot.d2v(2.0) == pytest.approx(1.0)
    assert pot.lam == 1.0


def test_soft_abs_hand_derivatives():
    # V = sqrt(x^2 + 1): V''(0) = 1, V'' -> 0 at infinity, lam = 0
    pot = soft_abs(1.0)
    assert pot.d2v(0.0) == pytest.approx(1.0)
    assert pot.d2v(50.0) < 1e-4
    assert pot.lam == 0.0


def test_quartic_blend_degenerates_to_harmonic():
    x = np.linspace(-5, 5, 101)
    assert np.allclose(quartic_blend(0.0).v(x), harmonic().v(x))
    assert np.allclose(quartic_blend(0.0).d2v(x), harmonic().d2v(x))


def test_quartic_blend_rejects_negative_coefficient():
    with pytest.raises(ValueError, match="nonnegative"):
        quartic_blend(-0.1)


def test_soft_abs_rejects_bad_width():
    with pytest.raises(ValueError, match="positive"):
        soft_abs(0.0)


@pytest.mark.parametrize("factory,params", [
    (harmonic, {}), (quartic_blend, {"c": 0.05}), (soft_abs, {"eps": 1.0}),
])
def test_derivatives_match_finite_differences(factory, params, rng):
    pot = factory(**params)
    x = rng.uniform(-6, 6, size=50)
    h = 1e-6
    fd1 = (pot.v(x + h) - pot.v(x - h)) / (2 * h)
    fd2 = (pot.dv(x + h) - pot.dv(x - h)) / (2 * h)
    assert np.allclose(fd1, pot.dv(x), rtol=1e-6, atol=1e-8)
    assert np.allclose(fd2, pot.d2v(x), rtol=1e-6, atol=1e-8)


def test_convexity_validator(gauss_grid):
    validate_convexity(harmonic(), gauss_grid.x)
    overstated = harmonic()
    overstated = type(overstated)(
        name="overstated", raw_v=overstated.raw_v, raw_dv=overstated.raw_dv,
        raw_d2v=overstated.raw_d2v, lam=2.0)
    with pytest.raises(ValueError, match="convexity certificate"):
        validate_convexity(overstated, gauss_grid.x)


def test_normalization_gives_unit_mass():
    pot = soft_abs(1.0).normalized_on(12.0, 512)
    grid = build_grid(pot, 12.0, 512)
    assert abs(grid.partition_sum - 1.0) <= 1e-12
    assert grid.integrate(np.ones(grid.n)) == pytest.approx(1.0, abs=1e-12)


def test_make_potential_registry():
    assert make_potential("harmonic").name == "harmonic"
    with pytest.raises(ValueError, match="unknown potential"):
        make_potential("nope")


# -- inf-convolution smoothing ------------------------------------------------


def test_yosida_of_harmonic_is_exact():
    # the quadratic part is subtracted before the infimum, which then
    # smooths the zero function and returns it unchanged
    pot = harmonic()
    approx = yosida_approx(pot, 10.0)
    x = np.linspace(-4, 4, 41)
    assert np.allclose(approx.v(x), pot.v(x), atol=1e-8)


def test_yosida_below_and_monotone(rng):
    pot = soft_abs(1.0)
    x = rng.uniform(-8, 8, size=100)
    v1 = yosida_approx(pot, 1.0).v(x)
    v10 = yosida_approx(pot, 10.0).v(x)
    v100 = yosida_approx(pot, 100.0).v(x)
    vex = pot.v(x)
    assert np.all(v1 <= v10 + 1e-10)
    assert np.all(v10 <= v100 + 1e-10)
    assert np.all(v100 <= vex + 1e-10)


def test_yosida_keeps_convexity_certificate(gauss_grid_coarse):
    approx = yosida_approx(soft_abs(0.5), 25.0)
    x = gauss_grid_coarse.x
    assert np.min(approx.d2v(x)) >= approx.lam - 1e-8


def test_yosida_detects_overstated_convexity():
    # claiming lam = 10 for a curvature-1 potential makes the shifted
    # inner objective concave, which the candidate scan must flag
    lying = type(harmonic())(
        name="overstated_lam",
        raw_v=lambda x: np.cos(x),
        raw_dv=lambda x: -np.sin(x),
        raw_d2v=lambda x: -np.cos(x),
        lam=10.0,
    )
    with pytest.raises(ValueError, match="not convex"):
        yosida_approx(lying, 5.0).v(np.array([0.0]))


# -- linear-growth certificate ------------------------------------------------


def test_linear_bound_harmonic_hand_certificate(gauss_grid):
    # complete the square: x^2/2 >= |x| - 1/2
    x = gauss_grid.x
    assert np.all(harmonic().v(x) >= np.abs(x) - 0.5 - 1e-12)


def test_linear_bound_certificate_valid(gauss_grid):
    a, b = certify_linear_bound(harmonic(), gauss_grid.x)
    assert a > 0 and b >= 0
    assert np.all(harmonic().v(gauss_grid.x) >= a * np.abs(gauss_grid.x) - b - 1e-12)


def test_linear_bound_soft_abs():
    grid = build_grid(soft_abs(1.0), 12.0, 512)
    a, b = certify_linear_bound(soft_abs(1.0), grid.x)
    assert a == pytest.approx(0.9)
    # any larger slack budget also certifies
    assert np.all(soft_abs(1.0).v(grid.x) >= a * np.abs(grid.x) - max(b, 1.0))


def test_linear_bound_shift_property(gauss_grid):
    pot = harmonic()
    a0, b0 = certify_linear_bound(pot, gauss_grid.x)
    shifted = type(pot)(name="shifted", raw_v=lambda x: pot.raw_v(x) + 5.0,
                        raw_dv=pot.raw_dv, raw_d2v=pot.raw_d2v, lam=pot.lam)
    a1, b1 = certify_linear_bound(shifted, gauss_grid.x)
    assert a1 == a0
    assert b1 == pytest.approx(max(b0 - 5.0, 0.0), abs=1e-12)


def test_linear_bound_rejects_noncoercive(gauss_grid):
    flat = type(harmonic())(
        name="flat", raw_v=lambda x: np.zeros_like(x),
        raw_dv=lambda x: np.zeros_like(x),
        raw_d2v=lambda x: np.zeros_like(x), lam=0.0)
    with pytest.raises(ValueError, match="not coercive"):
        certify_linear_bound(flat, gauss_grid.x)
