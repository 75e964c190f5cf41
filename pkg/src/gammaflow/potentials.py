"""Convex confining potentials and their regularizations.

A potential carries its own convexity constant ``lam`` (the largest
``lam >= 0`` with ``V'' >= lam`` everywhere); it is supplied by the
constructor and only *validated* numerically, never estimated, because
every decay rate downstream depends on it.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable

import numpy as np


@dataclass(frozen=True)
class Potential:
    """Twice continuously differentiable convex potential on the line.

    ``offset`` is an additive constant (used to normalize the reference
    measure to unit mass); it shifts values but no derivative.
    """

    name: str
    raw_v: Callable[[np.ndarray], np.ndarray]
    raw_dv: Callable[[np.ndarray], np.ndarray]
    raw_d2v: Callable[[np.ndarray], np.ndarray]
    lam: float
    offset: float = 0.0

    def v(self, x):
        return np.asarray(self.raw_v(np.asarray(x, dtype=float))) + self.offset

    def dv(self, x):
        return np.asarray(self.raw_dv(np.asarray(x, dtype=float)))

    def d2v(self, x):
        return np.asarray(self.raw_d2v(np.asarray(x, dtype=float)))

    def partition_sum(self, half_width: float, n: int) -> float:
        """Midpoint quadrature of ``exp(-V)`` on the truncated domain."""
        dx = 2.0 * half_width / n
        x = -half_width + dx * (np.arange(n) + 0.5)
        return float(np.sum(np.exp(-self.v(x))) * dx)

    def normalized_on(self, half_width: float, n: int) -> "Potential":
        """Shift by ``log Z`` so the truncated measure has unit mass."""
        z = self.partition_sum(half_width, n)
        return replace(self, offset=self.offset + float(np.log(z)))


def harmonic() -> Potential:
    return Potential(
        name="harmonic",
        raw_v=lambda x: 0.5 * x**2,
        raw_dv=lambda x: x,
        raw_d2v=lambda x: np.ones_like(x),
        lam=1.0,
    )


def quartic_blend(c: float = 0.05) -> Potential:
    """``x^2/2 + c x^4``; convex with the harmonic certificate for c >= 0."""
    if c < 0:
        raise ValueError(f"quartic coefficient must be nonnegative, got {c}")
    return Potential(
        name=f"quartic_blend(c={c:g})",
        raw_v=lambda x: 0.5 * x**2 + c * x**4,
        raw_dv=lambda x: x + 4.0 * c * x**3,
        raw_d2v=lambda x: 1.0 + 12.0 * c * x**2,
        lam=1.0,
    )


def soft_abs(eps: float = 1.0) -> Potential:
    """Smoothed absolute value ``sqrt(x^2 + eps^2)``; convex with lam = 0."""
    if not eps > 0:
        raise ValueError(f"smoothing width must be positive, got {eps}")
    e2 = eps * eps
    return Potential(
        name=f"soft_abs(eps={eps:g})",
        raw_v=lambda x: np.sqrt(x**2 + e2),
        raw_dv=lambda x: x / np.sqrt(x**2 + e2),
        raw_d2v=lambda x: e2 / (x**2 + e2) ** 1.5,
        lam=0.0,
    )


_BUILTINS = {
    "harmonic": harmonic,
    "quartic_blend": quartic_blend,
    "soft_abs": soft_abs,
}


def builtin_potentials() -> dict:
    """Name -> factory map for the built-in potential families."""
    return dict(_BUILTINS)


def make_potential(name: str, **params) -> Potential:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(
            f"unknown potential {name!r}; available: {sorted(_BUILTINS)}"
        ) from None
    return factory(**params)


def validate_convexity(potential: Potential, x: np.ndarray,
                       slack: float = 1e-10) -> None:
    """Check ``V'' >= lam`` on the sample points."""
    d2 = potential.d2v(x)
    worst = float(np.min(d2 - potential.lam))
    if worst < -slack:
        i = int(np.argmin(d2 - potential.lam))
        raise ValueError(
            f"potential {potential.name!r} violates its convexity "
            f"certificate lam={potential.lam} at x={x[i]:.6g} "
            f"(V''={d2[i]:.6g})")


def yosida_approx(potential: Potential, n: float,
                  search_width: float = 40.0,
                  candidates: int = 801,
                  tol: float = 1e-10) -> Potential:
    """Inf-convolution smoothing of a convex potential from below.

    Evaluates ``V_n(x) = lam/2 x^2 + inf_y ( n/2 (x-y)^2 + V(y) - lam/2 y^2 )``
    by a coarse scan over ``candidates`` points in ``[x - w, x + w]``
    refined by ternary search, then polished by bisection on the sign of
    the inner derivative (value comparisons alone resolve the minimizer
    only to the square root of machine precision).  The approximant is
    below ``V``, increases with ``n``, and keeps the certificate ``lam``.

    Derivatives use the envelope identities: ``V_n'(x) = lam x + n (x - y*)``
    and ``V_n''(x) = lam + n W''(y*) / (n + W''(y*))`` for the shifted
    potential ``W = V - lam/2 |.|^2``.
    """
    if not n > 0:
        raise ValueError(f"smoothing parameter must be positive, got {n}")
    lam = potential.lam

    def core(y, x):
        return 0.5 * n * (x - y) ** 2 + potential.v(y) - 0.5 * lam * y**2

    def core_dy(y, x):
        return n * (y - x) + potential.dv(y) - lam * y

    def argmin_y(x: float) -> float:
        ys = np.linspace(x - search_width, x + search_width, candidates)
        vals = core(ys, x)
        # the inner objective is convex when the certificate is honest;
        # a strictly interior dip pattern with multiple local minima
        # signals an overstated lam
        k = int(np.argmin(vals))
        d2 = vals[:-2] - 2.0 * vals[1:-1] + vals[2:]
        if np.min(d2) < -1e-8 * max(1.0, float(np.max(np.abs(vals)))):
            raise ValueError(
                f"inner objective of the smoothing of {potential.name!r} "
                f"is not convex; the convexity constant lam={lam} is "
                f"overstated")
        lo = ys[max(k - 1, 0)]
        hi = ys[min(k + 1, len(ys) - 1)]
        while hi - lo > tol:
            m1 = lo + (hi - lo) / 3.0
            m2 = hi - (hi - lo) / 3.0
            if core(m1, x) <= core(m2, x):
                hi = m2
            else:
                lo = m1
        # sign-of-derivative polish: exact to roundoff on the derivative
        lo, hi = lo - tol, hi + tol
        if core_dy(lo, x) < 0.0 and core_dy(hi, x) > 0.0:
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                if core_dy(mid, x) <= 0.0:
                    lo = mid
                else:
                    hi = mid
                if hi - lo <= 1e-15 * max(1.0, abs(mid)):
                    break
        return 0.5 * (lo + hi)

    def v_n(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            ys = argmin_y(float(xi))
            out[i] = 0.5 * lam * xi**2 + core(ys, float(xi))
        return out

    def dv_n(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            ys = argmin_y(float(xi))
            out[i] = lam * xi + n * (xi - ys)
        return out

    def d2v_n(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        for i, xi in enumerate(x):
            ys = argmin_y(float(xi))
            wpp = max(float(potential.d2v(ys)) - lam, 0.0)
            out[i] = lam + n * wpp / (n + wpp)
        return out

    return Potential(
        name=f"yosida({potential.name}, n={n:g})",
        raw_v=v_n,
        raw_dv=dv_n,
        raw_d2v=d2v_n,
        lam=lam,
        offset=potential.offset,
    )


def certify_linear_bound(potential: Potential, x: np.ndarray,
                         lattice_step: float = 0.1,
                         lattice_max: float = 10.0):
    """Certify a linear lower bound ``V(x) >= A |x| - B`` with ``A > 0``.

    ``A`` is the largest lattice multiple of ``lattice_step`` not
    exceeding the boundary slopes (so convexity extends the certificate
    beyond the truncated domain), and ``B = max(0, -min_i(V_i - A|x_i|))``
    is verified node by node.
    """
    slopes = min(float(potential.dv(x[-1])), -float(potential.dv(x[0])))
    if slopes < lattice_step:
        raise ValueError(
            f"potential {potential.name!r} is not coercive on the grid: "
            f"boundary slope {slopes:.3g} below {lattice_step}")
    a = lattice_step * np.floor(min(slopes, lattice_max) / lattice_step)
    gap = potential.v(x) - a * np.abs(x)
    b = max(0.0, -float(np.min(gap)))
    assert np.all(potential.v(x) >= a * np.abs(x) - b - 1e-12)
    return float(a), float(b)
