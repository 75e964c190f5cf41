"""Mobility / entropy pairs.

A model bundles a concave, positive, non-decreasing mobility ``h`` with
its reciprocal ``g = 1/h``, the entropy density ``psi`` with
``psi'' = g`` normalized by ``psi(1) = psi'(1) = 0``, and the auxiliary
functions

    f(r)     = integral_0^r sqrt(g)           (Fisher-type square root),
    l_psi(r) = r psi'(r) - psi(r)             (with  l_psi'(r) = r g(r)).

The canonical family is ``h(r) = r**alpha`` for ``alpha in [0, 1]``; the
pure-log entropy is the ``alpha -> 1`` limit and is used verbatim when
``alpha`` is within 1e-6 of 1 to avoid catastrophic cancellation in the
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .grid import DensityField

# below this distance from alpha = 1 the closed form loses ~9 digits,
# so we switch to the exact logarithmic limit
_LOG_SWITCH = 1e-6


def _is_log(alpha: float) -> bool:
    return abs(alpha - 1.0) <= _LOG_SWITCH


def psi_alpha(rho, alpha: float):
    """Entropy density of the power family, ``psi(1) = psi'(1) = 0``.

    For ``alpha`` within 1e-6 of 1 the logarithmic limit
    ``rho log rho - (rho - 1)`` is used.
    """
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"mobility exponent must lie in [0, 1], got {alpha}")
    r = np.asarray(rho, dtype=float)
    if np.any(r < 0):
        raise ValueError("densities must be nonnegative")
    if _is_log(alpha):
        with np.errstate(divide="ignore", invalid="ignore"):
            xlogx = np.where(r > 0, r * np.log(np.maximum(r, 1e-300)), 0.0)
        out = xlogx - (r - 1.0)
    else:
        p = 2.0 - alpha
        out = (r**p - 1.0 - p * (r - 1.0)) / (p * (1.0 - alpha))
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class EntropyModel:
    """Power-family mobility ``h(r) = r**alpha``."""

    alpha: float
    name: str = field(init=False)

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(
                f"mobility exponent must lie in [0, 1], got {self.alpha}")
        object.__setattr__(self, "name", f"power(alpha={self.alpha:g})")

    # -- structure constants --------------------------------------------

    @property
    def is_log(self) -> bool:
        return _is_log(self.alpha)

    @property
    def beta_raw(self) -> float:
        """Modulus of convexity ``(1 - alpha) / (1 + alpha)``."""
        return (1.0 - self.alpha) / (1.0 + self.alpha)

    @property
    def beta(self) -> float:
        """Modulus used by the decay estimates (needs ``beta < 1``).

        At ``alpha = 0`` the formula gives 1, outside the admissible
        range of the refined decay theorem; fall back to 0 there.
        """
        return 0.0 if self.beta_clamped else self.beta_raw

    @property
    def beta_clamped(self) -> bool:
        return self.alpha == 0.0

    @property
    def h_infinity(self) -> float:
        """Limit of ``h(r)/r`` for large ``r`` (1 iff linear growth)."""
        return 1.0 if self.is_log else 0.0

    # -- mobility and derivatives ----------------------------------------

    def h(self, r):
        r = np.asarray(r, dtype=float)
        return r**self.alpha if self.alpha > 0 else np.ones_like(r)

    def g(self, r):
        r = np.asarray(r, dtype=float)
        if self.alpha == 0:
            return np.ones_like(r)
        with np.errstate(divide="ignore"):
            return r**(-self.alpha)

    def dg(self, r):
        r = np.asarray(r, dtype=float)
        if self.alpha == 0:
            return np.zeros_like(r)
        with np.errstate(divide="ignore"):
            return -self.alpha * r**(-self.alpha - 1.0)

    def d2g(self, r):
        r = np.asarray(r, dtype=float)
        if self.alpha == 0:
            return np.zeros_like(r)
        with np.errstate(divide="ignore"):
            return self.alpha * (self.alpha + 1.0) * r**(-self.alpha - 2.0)

    # -- entropy ----------------------------------------------------------

    def psi(self, r):
        return psi_alpha(r, self.alpha)

    def dpsi(self, r):
        r = np.asarray(r, dtype=float)
        if self.is_log:
            with np.errstate(divide="ignore"):
                out = np.log(r)
        else:
            out = (r**(1.0 - self.alpha) - 1.0) / (1.0 - self.alpha)
        return out if np.ndim(out) else float(out)

    def f(self, r):
        """Antiderivative of ``sqrt(g)`` from 0."""
        r = np.asarray(r, dtype=float)
        p = 1.0 - 0.5 * self.alpha
        out = r**p / p
        return out if out.ndim else float(out)

    def l_psi(self, r):
        """``r psi'(r) - psi(r)``; derivative is ``r / h(r)``."""
        r = np.asarray(r, dtype=float)
        if self.is_log:
            out = r - 1.0
        else:
            p = 2.0 - self.alpha
            out = (r**p - 1.0) / p
        return out if out.ndim else float(out)

    def shifted_psi(self, rho, a: float):
        """Entropy density recentered to vanish to second order at ``a``."""
        if not a > 0:
            raise ValueError(f"shift point must be positive, got {a}")
        r = np.asarray(rho, dtype=float)
        out = self.psi(r) - self.psi(a) - self.dpsi(a) * (r - a)
        return out if out.ndim else float(out)


def shifted_entropy(rho, a: float, model: EntropyModel):
    return model.shifted_psi(rho, a)


def relative_entropy(rho: DensityField, model: EntropyModel) -> float:
    """Entropy relative to the density's own mass.

    Shift point ``a`` is the weighted mass of the field, making the
    functional nonnegative and zero exactly on constants.
    """
    a = rho.mass
    if not a > 0:
        raise ValueError("relative entropy needs a density of positive mass")
    val = rho.grid.integrate(model.shifted_psi(rho.values, a))
    # nonnegative up to quadrature roundoff
    return max(val, 0.0) if val > -1e-13 else val


def f_and_l_psi(r, model: EntropyModel):
    return model.f(r), model.l_psi(r)


@dataclass(frozen=True)
class McCannReport:
    passed: bool
    samples: np.ndarray
    first_condition: np.ndarray   # r psi' - psi   (psi anchored at 0)
    second_condition: np.ndarray  # r^2 psi'' - r psi' + psi
    violations: np.ndarray        # indices of failing samples

    def __str__(self) -> str:
        verdict = "pass" if self.passed else f"FAIL ({self.violations.size})"
        return (f"McCann conditions on {self.samples.size} samples: {verdict}; "
                f"min margins {self.first_condition.min():.3e}, "
                f"{self.second_condition.min():.3e}")


def mccann_check(model: EntropyModel, samples: Sequence[float],
                 tol: float = 1e-10) -> McCannReport:
    """Diagnostic for the displacement-convexity conditions.

    The two classical inequalities are invariant under adding a linear
    function to ``psi`` but not a constant, so the entropy is re-anchored
    to ``psi(0) = 0`` before evaluating.
    """
    r = np.asarray(samples, dtype=float)
    if np.any(r <= 0):
        raise ValueError("samples must be positive")
    psi0 = model.psi(0.0)
    psi = model.psi(r) - psi0
    dpsi = model.dpsi(r)
    d2psi = model.g(r)
    first = r * dpsi - psi
    second = r**2 * d2psi - r * dpsi + psi
    scale = 1.0 + np.abs(psi)
    bad = np.flatnonzero((first < -tol * scale) | (second < -tol * scale))
    return McCannReport(passed=bad.size == 0, samples=r,
                        first_condition=first, second_condition=second,
                        violations=bad)


class CustomMobility:
    """Mobility given as a callable, with finite-difference derivatives.

    Intended for diagnostics (e.g. feeding a *non*-concave mobility to the
    convexity certificate); the entropy density is built by numerical
    double integration of ``g``, refined until two trapezoid levels agree
    to ``int_tol``.
    """

    def __init__(self, h: Callable[[np.ndarray], np.ndarray], name: str,
                 beta: float = 0.0, int_tol: float = 1e-8):
        self._h = h
        self.name = name
        self.alpha = None
        self.beta = beta
        self.beta_raw = beta
        self.beta_clamped = False
        self.int_tol = int_tol

    def h(self, r):
        return np.asarray(self._h(np.asarray(r, dtype=float)), dtype=float)

    def g(self, r):
        with np.errstate(divide="ignore"):
            return 1.0 / self.h(r)

    def dg(self, r, rel_step: float = 1e-6):
        r = np.asarray(r, dtype=float)
        step = rel_step * np.maximum(np.abs(r), 1.0)
        return (self.g(r + step) - self.g(r - step)) / (2.0 * step)

    def d2g(self, r, rel_step: float = 1e-5):
        r = np.asarray(r, dtype=float)
        step = rel_step * np.maximum(np.abs(r), 1.0)
        return (self.g(r + step) - 2.0 * self.g(r) + self.g(r - step)) / step**2

    @property
    def h_infinity(self) -> float:
        big = 1e12
        return float(self.h(big) / big)

    def shifted_psi(self, rho, a: float):
        """``integral_a^x (x - r) g(r) dr`` by refined trapezoid."""
        if not a > 0:
            raise ValueError(f"shift point must be positive, got {a}")
        x = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            out[i] = self._psi_shift_scalar(float(xi), a)
        return out if np.ndim(rho) else float(out[0])

    def _psi_shift_scalar(self, x: float, a: float) -> float:
        if x == a:
            return 0.0
        m, prev = 64, np.inf
        while True:
            r = np.linspace(a, x, m + 1)
            val = float(np.trapezoid((x - r) * self.g(r), r))
            if abs(val - prev) <= self.int_tol * max(1.0, abs(val)) or m > 2**20:
                return val
            prev, m = val, 2 * m
