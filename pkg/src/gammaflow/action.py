"""Action density, action functional, entropy production, and bounds.

The action density is ``phi(rho, w) = |w|^2 / h(rho)``.  At vacuum the
lower semicontinuous convention applies: ``phi(0, w)`` is infinite unless
``w = 0`` (for mobilities with ``h(0) = 0``).  Nodes with density below
``RHO_FLOOR`` are treated as vacuum.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import DensityField, VectorField, same_grid

RHO_FLOOR = 1e-12


def action_density(rho, w, model):
    """Pointwise ``|w|^2 / h(rho)`` with the vacuum convention."""
    r = np.asarray(rho, dtype=float)
    v = np.asarray(w, dtype=float)
    if np.any(r < 0):
        raise ValueError("densities must be nonnegative")
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(v == 0.0, 0.0, v**2 * model.g(np.maximum(r, RHO_FLOOR)))
    if float(model.h(0.0)) == 0.0:
        out = np.where((r < RHO_FLOOR) & (v != 0.0), np.inf, out)
    return out if np.ndim(out) else float(out)


def recession(rho, w, model):
    """One-homogeneous large-mass limit of the action density.

    Finite on moving mass only when the mobility grows linearly; for
    sublinear mobilities any nonzero flux costs infinitely much.
    """
    r = np.asarray(rho, dtype=float)
    v = np.asarray(w, dtype=float)
    h_inf = model.h_infinity
    if h_inf == 0.0:
        out = np.where(v == 0.0, 0.0, np.inf)
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(v == 0.0, 0.0,
                           np.where(r > 0.0, v**2 / (h_inf * r), np.inf))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class ActionValue:
    value: float

    @property
    def finite(self) -> bool:
        return bool(np.isfinite(self.value))

    def __float__(self) -> float:
        return self.value


def action_functional(rho: DensityField, w: VectorField, model) -> ActionValue:
    """Weighted integral of the action density (infinite if any node is)."""
    grid = same_grid(rho, w)
    phi = action_density(rho.values, w.values, model)
    if np.any(np.isinf(phi)):
        return ActionValue(np.inf)
    return ActionValue(grid.integrate(phi))


@dataclass(frozen=True)
class ProductionResult:
    """Entropy production in its two discrete forms.

    ``value`` is the square-root form ``int |grad f(rho)|^2`` (coercive and
    regular at vacuum); ``direct`` is ``Phi(rho, grad rho)``.  Both are
    second-order discretizations of the same quantity, so a discrepancy
    much larger than the grid scale flags under-resolution.
    """

    value: float
    direct: float
    discrepancy: float
    under_resolved: bool

    def __float__(self) -> float:
        return self.value


def entropy_production(rho: DensityField, model) -> ProductionResult:
    grid = rho.grid
    f_form = grid.integrate(grid.grad(model.f(rho.values)) ** 2)
    phi = action_density(rho.values, grid.grad(rho.values), model)
    direct = np.inf if np.any(np.isinf(phi)) else grid.integrate(phi)
    disc = abs(direct - f_form) if np.isfinite(direct) else np.inf
    scale = max(f_form, 1e-300)
    warn = disc > 10.0 * grid.dx**2 * scale
    return ProductionResult(value=f_form, direct=direct, discrepancy=disc,
                            under_resolved=bool(warn))


@dataclass(frozen=True)
class ConvexityReport:
    """Result of sampling the Hessian quadratic form of the action density."""

    beta: float
    convex_margin_min: float
    refined_margin_min: float
    convex_failures: np.ndarray
    refined_failures: np.ndarray

    @property
    def convex(self) -> bool:
        return self.convex_failures.size == 0

    @property
    def refined(self) -> bool:
        return self.refined_failures.size == 0


def convexity_certificate(model, samples, tol: float = 1e-9) -> ConvexityReport:
    """Evaluate the Hessian quadratic form on sample directions.

    ``samples`` has rows ``(rho, w, x, y)`` with ``rho > 0``: the form
    ``g''(rho) w^2 x^2 + 4 g'(rho) w x y + 2 g(rho) y^2`` must be
    nonnegative (convexity) and dominate ``2 beta phi(rho, y)`` (refined
    modulus, with the model's raw beta).
    """
    s = np.asarray(samples, dtype=float)
    if s.ndim != 2 or s.shape[1] != 4:
        raise ValueError("samples must have rows (rho, w, x, y)")
    rho, w, x, y = s.T
    if np.any(rho <= 0):
        raise ValueError("sample densities must be positive")
    beta = model.beta_raw
    form = (model.d2g(rho) * w**2 * x**2
            + 4.0 * model.dg(rho) * w * x * y
            + 2.0 * model.g(rho) * y**2)
    phi_y = model.g(rho) * y**2
    scale = 1.0 + np.abs(form) + phi_y
    bad_convex = np.flatnonzero(form < -tol * scale)
    bad_refined = np.flatnonzero(form - 2.0 * beta * phi_y < -tol * scale)
    return ConvexityReport(
        beta=beta,
        convex_margin_min=float(np.min(form / scale)),
        refined_margin_min=float(np.min((form - 2.0 * beta * phi_y) / scale)),
        convex_failures=bad_convex,
        refined_failures=bad_refined,
    )


@dataclass(frozen=True)
class MomentBoundReport:
    name: str
    lhs: float
    rhs: float
    passed: bool

    def __str__(self) -> str:
        tag = "pass" if self.passed else "FAIL"
        return f"{self.name}: {self.lhs:.6e} <= {self.rhs:.6e} [{tag}]"


def moment_bound_check(rho: DensityField, w: VectorField, zeta, model,
                       slack: float = 1e-8) -> MomentBoundReport:
    """Weighted-mass bound on the flux against a nonnegative test weight.

    Checks ``(int zeta d|nu|)^2 <= Phi(mu, nu) * gamma(zeta^2) *
    h(mu(zeta^2) / gamma(zeta^2))`` for ``mu = rho gamma``,
    ``nu = w gamma``.
    """
    grid = same_grid(rho, w)
    z = np.asarray(zeta, dtype=float)
    if np.any(z < 0):
        raise ValueError("the test weight must be nonnegative")
    gz2 = grid.integrate(z**2)
    if not gz2 > 0:
        raise ValueError("the test weight must have positive weighted mass")
    lhs = grid.integrate(z * np.abs(w.values)) ** 2
    phi = action_functional(rho, w, model).value
    mz2 = grid.integrate(z**2 * rho.values)
    rhs = phi * gz2 * float(model.h(mz2 / gz2))
    return MomentBoundReport("flux moment bound", lhs, rhs,
                             passed=bool(lhs <= rhs * (1.0 + slack)))


def first_moment_bound_check(rho: DensityField, w: VectorField, model,
                             slack: float = 1e-8) -> MomentBoundReport:
    """First-moment variant with weight ``|x|`` and second moments."""
    grid = same_grid(rho, w)
    m1 = grid.integrate(np.abs(grid.x) * np.abs(w.values))
    m2_gamma = grid.integrate(grid.x**2)
    m2_mu = grid.integrate(grid.x**2 * rho.values)
    phi = action_functional(rho, w, model).value
    rhs = float(np.sqrt(phi * m2_gamma * model.h(m2_mu / m2_gamma)))
    return MomentBoundReport("first moment bound", m1, rhs,
                             passed=bool(m1 <= rhs * (1.0 + slack)))
