"""Named density families used by the CLI, the harness, and the tests.

All constructors return densities *relative to the reference measure*.
``from_lebesgue`` divides a Lebesgue probability density by the grid's
cell masses, so e.g. a unit-variance Gaussian bump against the harmonic
reference measure reproduces the exponential tilt exactly.
"""

from __future__ import annotations

import numpy as np

from .grid import DensityField, GammaGrid


def constant(grid: GammaGrid, value: float = 1.0) -> DensityField:
    if value < 0:
        raise ValueError("densities must be nonnegative")
    return DensityField(grid, np.full(grid.n, float(value)))


def tilted(grid: GammaGrid, a: float) -> DensityField:
    """Exponential tilt ``exp(a x - a^2 / 2)``.

    Against the standard Gaussian reference measure this is the density
    of a unit-variance Gaussian with mean ``a``, and has unit weighted
    mass up to truncation error.
    """
    return DensityField(grid, np.exp(a * grid.x - 0.5 * a * a))


def from_lebesgue(grid: GammaGrid, pdf, normalize: bool = True) -> DensityField:
    """Density of the measure ``pdf(x) dx`` relative to the grid measure."""
    mass_per_cell = np.asarray(pdf(grid.x), dtype=float) * grid.dx
    if np.any(mass_per_cell < 0):
        raise ValueError("the Lebesgue density must be nonnegative")
    rho = mass_per_cell / grid.gamma_weights
    field = DensityField(grid, rho)
    if normalize:
        field = DensityField(grid, rho / field.mass)
    return field


def gaussian(grid: GammaGrid, mean: float = 0.0, sigma: float = 1.0) -> DensityField:
    if not sigma > 0:
        raise ValueError("sigma must be positive")

    def pdf(x):
        return np.exp(-0.5 * ((x - mean) / sigma) ** 2) / (sigma * np.sqrt(2 * np.pi))

    return from_lebesgue(grid, pdf)


def bump(grid: GammaGrid, center: float = 0.0, width: float = 1.0,
         amplitude: float = 0.5) -> DensityField:
    """Constant background with a Gaussian bump, unit mass."""
    if amplitude <= -1.0:
        raise ValueError("amplitude must exceed -1 to keep positivity")
    rho = 1.0 + amplitude * np.exp(-0.5 * ((grid.x - center) / width) ** 2)
    field = DensityField(grid, rho)
    return DensityField(grid, rho / field.mass)


def band_limited(grid: GammaGrid, rng: np.random.Generator, modes: int = 4,
                 scale: float = 0.6) -> DensityField:
    """Random smooth positive density ``exp(trig polynomial)``, unit mass."""
    phase = np.pi * (grid.x + grid.half_width) / (2.0 * grid.half_width)
    s = np.zeros(grid.n)
    for k in range(1, modes + 1):
        a, b = rng.normal(size=2) * scale / k
        s += a * np.cos(k * phase) + b * np.sin(k * phase)
    rho = np.exp(s - s.max())
    field = DensityField(grid, rho)
    return DensityField(grid, rho / field.mass)


_FAMILIES = {
    "constant": constant,
    "tilted": tilted,
    "gaussian": gaussian,
    "bump": bump,
}


def make_density(grid: GammaGrid, family: str, **params) -> DensityField:
    try:
        factory = _FAMILIES[family]
    except KeyError:
        raise ValueError(
            f"unknown density family {family!r}; available: "
            f"{sorted(_FAMILIES)} (plus 'band_limited' with a seed)"
        ) from None
    return factory(grid, **params)


def battery(grid: GammaGrid, count: int, seed: int) -> list[DensityField]:
    """Deterministic mix of band-limited, tilted, and bump densities."""
    rng = np.random.default_rng(seed)
    out: list[DensityField] = []
    for i in range(count):
        kind = i % 3
        if kind == 0:
            out.append(band_limited(grid, rng, modes=int(rng.integers(2, 6))))
        elif kind == 1:
            out.append(tilted(grid, float(rng.uniform(-0.8, 0.8))))
        else:
            out.append(bump(grid,
                            center=float(rng.uniform(-1.5, 1.5)),
                            width=float(rng.uniform(0.5, 1.5)),
                            amplitude=float(rng.uniform(-0.4, 1.0))))
    return out
