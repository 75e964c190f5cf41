"""Truncated 1D grid weighted by a log-concave reference measure.

The reference measure has density ``exp(-V)`` with respect to Lebesgue
measure, normalized to a probability measure.  The whole line is truncated
to ``[-L, L]`` with a no-flux closure; the truncation error of every
integrated quantity is of size ``exp(-V(L))``.

Discrete calculus follows a summation-by-parts construction on a uniform
cell-centered grid:

* ``grad`` is the centered second-order difference (first-order one-sided
  in the two boundary cells),
* ``div_gamma`` is *defined* as the negative adjoint of ``grad`` in the
  weighted inner product ``<u, v> = sum_i u_i v_i g_i``,
* ``laplace_gamma = div_gamma o grad``.

Definitions, not approximations, give the structural identities: discrete
integration by parts is exact, ``laplace_gamma`` annihilates constants,
conserves weighted mass, and is symmetric negative semidefinite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .potentials import Potential


class GridMismatchError(ValueError):
    """Two fields defined on different grids were combined."""


@dataclass(frozen=True)
class GammaGrid:
    """Uniform cell-centered grid on [-L, L] with normalized weights.

    Attributes
    ----------
    half_width : float
        Truncation radius L.
    n : int
        Number of cells (= nodes; values live at cell centers).
    x : ndarray
        Node positions, strictly increasing.
    dx : float
        Cell width, ``2 L / n``.
    gamma_weights : ndarray
        Quadrature weights ``exp(-V(x_i)) dx / Z`` normalized so that
        they sum to 1 exactly (within roundoff).
    potential : Potential
        The potential used to build the weights.
    """

    half_width: float
    n: int
    x: np.ndarray
    dx: float
    gamma_weights: np.ndarray
    potential: Potential
    # raw (un-normalized) partition sum of the truncated grid
    partition_sum: float = field(default=1.0)

    def __post_init__(self) -> None:
        if np.any(self.gamma_weights <= 0.0):
            raise ValueError("all gamma weights must be positive")
        if abs(float(self.gamma_weights.sum()) - 1.0) > 1e-12:
            raise ValueError("gamma weights must sum to 1 after normalization")

    def describe(self) -> str:
        return (f"GammaGrid(L={self.half_width}, n={self.n}, "
                f"potential={self.potential.name})")

    # -- quadrature ----------------------------------------------------

    def integrate(self, values) -> float:
        """Weighted sum ``sum_i v_i g_i`` (the single quadrature rule)."""
        v = _as_values(values, self)
        if v.shape[-1] != self.n:
            raise GridMismatchError(
                f"field with {v.shape[-1]} nodes on {self.describe()}")
        out = np.sum(v * self.gamma_weights, axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def inner(self, u, v) -> float:
        """Weighted inner product of two nodal fields."""
        return self.integrate(_as_values(u, self) * _as_values(v, self))

    def norm(self, u) -> float:
        return float(np.sqrt(max(self.inner(u, u), 0.0)))

    def mass(self, rho) -> float:
        return self.integrate(rho)

    # -- discrete calculus ---------------------------------------------
    #
    # All operators act along the last axis, so (paths of) fields with
    # shape (..., n) are handled in one call.

    def grad(self, u) -> np.ndarray:
        u = _as_values(u, self)
        out = np.empty_like(u, dtype=float)
        out[..., 1:-1] = (u[..., 2:] - u[..., :-2]) / (2.0 * self.dx)
        out[..., 0] = (u[..., 1] - u[..., 0]) / self.dx
        out[..., -1] = (u[..., -1] - u[..., -2]) / self.dx
        return out

    def div_gamma(self, w) -> np.ndarray:
        """Negative weighted adjoint of :meth:`grad`.

        Satisfies ``<grad u, w> = -<u, div_gamma w>`` exactly for all
        nodal fields, which encodes the no-flux closure at ``+-L``.
        """
        w = _as_values(w, self)
        t = self.gamma_weights * w
        out = np.zeros_like(t, dtype=float)
        half = 1.0 / (2.0 * self.dx)
        # transpose of the centered interior rows
        out[..., 2:] += t[..., 1:-1] * half
        out[..., :-2] -= t[..., 1:-1] * half
        # transpose of the one-sided boundary rows
        out[..., 0] -= t[..., 0] / self.dx
        out[..., 1] += t[..., 0] / self.dx
        out[..., -2] -= t[..., -1] / self.dx
        out[..., -1] += t[..., -1] / self.dx
        return -out / self.gamma_weights

    def laplace_gamma(self, u) -> np.ndarray:
        return self.div_gamma(self.grad(u))

    def grad_matrix(self) -> np.ndarray:
        """Dense matrix of :meth:`grad` (used to assemble banded solves)."""
        g = np.zeros((self.n, self.n))
        half = 1.0 / (2.0 * self.dx)
        idx = np.arange(1, self.n - 1)
        g[idx, idx + 1] = half
        g[idx, idx - 1] = -half
        g[0, 0], g[0, 1] = -1.0 / self.dx, 1.0 / self.dx
        g[-1, -2], g[-1, -1] = -1.0 / self.dx, 1.0 / self.dx
        return g

    def stiffness_banded(self) -> np.ndarray:
        """Upper banded form (bandwidth 2) of ``S = G^T diag(g) G``.

        ``S`` is symmetric positive semidefinite with kernel the constants,
        and ``laplace_gamma = -diag(1/g) S``.  Returned in the layout used
        by ``scipy.linalg.solveh_banded`` (``ab[u + i - j, j]``).
        """
        G = self.grad_matrix()
        S = G.T @ (self.gamma_weights[:, None] * G)
        ab = np.zeros((3, self.n))
        ab[2] = np.diag(S)
        ab[1, 1:] = np.diag(S, k=1)
        ab[0, 2:] = np.diag(S, k=2)
        return ab


def build_grid(potential: Potential, half_width: float, n: int) -> GammaGrid:
    """Build the weighted grid for a potential.

    ``n`` must be an even integer >= 8 so the staggering used elsewhere is
    well defined; non-finite potential values abort with the offending node.
    """
    if n < 8 or n % 2 != 0:
        raise ValueError(f"node count must be an even integer >= 8, got {n}")
    if not half_width > 0:
        raise ValueError(f"half width must be positive, got {half_width}")
    dx = 2.0 * half_width / n
    x = -half_width + dx * (np.arange(n) + 0.5)
    v = potential.v(x)
    bad = np.flatnonzero(~np.isfinite(v))
    if bad.size:
        i = int(bad[0])
        raise ValueError(
            f"potential {potential.name!r} is not finite at node {i} "
            f"(x = {x[i]:.6g})")
    raw = np.exp(-v) * dx
    z = float(raw.sum())
    weights = raw / z
    # kill the last ulp of drift so the probability normalization is exact
    weights = weights / weights.sum()
    return GammaGrid(half_width=float(half_width), n=int(n), x=x, dx=dx,
                     gamma_weights=weights, potential=potential,
                     partition_sum=z)


@dataclass(frozen=True)
class DensityField:
    """Nonnegative density relative to the reference measure."""

    grid: GammaGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(
                f"density with shape {v.shape} on {self.grid.describe()}")
        if not np.all(np.isfinite(v)):
            raise ValueError("density values must be finite")
        if np.any(v < 0.0):
            raise ValueError("density values must be nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def mass(self) -> float:
        return self.grid.integrate(self.values)

    def lifted(self, kappa: float) -> "DensityField":
        return DensityField(self.grid, self.values + kappa)


@dataclass(frozen=True)
class VectorField:
    """Flux density relative to the reference measure (scalar in 1D)."""

    grid: GammaGrid
    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n,):
            raise GridMismatchError(
                f"vector field with shape {v.shape} on {self.grid.describe()}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector field values must be finite")
        object.__setattr__(self, "values", v)


def same_grid(a, b) -> GammaGrid:
    """Return the common grid of two fields, or raise naming both."""
    ga = a.grid if hasattr(a, "grid") else None
    gb = b.grid if hasattr(b, "grid") else None
    if ga is not None and gb is not None and ga is not gb:
        raise GridMismatchError(
            f"fields live on different grids: {ga.describe()} vs {gb.describe()}")
    grid = ga or gb
    if grid is None:
        raise GridMismatchError("neither argument carries a grid")
    return grid


def _as_values(obj, grid: GammaGrid) -> np.ndarray:
    if isinstance(obj, (DensityField, VectorField)):
        if obj.grid is not grid:
            raise GridMismatchError(
                f"field on {obj.grid.describe()} used with {grid.describe()}")
        return obj.values
    return np.asarray(obj, dtype=float)
