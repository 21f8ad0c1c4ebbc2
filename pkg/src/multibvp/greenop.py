"""Green's kernel of -u'' under the problem's endpoint conditions, and the
fixed-point operator (Phi u)(x) = integral of G(x, .) f~(., u(.)).

Positive solutions of the BVP are exactly the nontrivial fixed points of
Phi, so ||u - Phi u||_inf over a verification grid is an independent check
of any candidate solution produced by shooting.  Phi is deliberately not
used as a Picard iteration: with superlinear hump nonlinearities the
iteration need not converge.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .numerics import Trajectory, quad
from .problem import BoundaryCoefficients, Problem

__all__ = ["GreenKernel", "green", "apply_phi", "phi_residual", "verification_grid"]

_GRID_POINTS = 512


@dataclass(frozen=True)
class GreenKernel:
    """G(x,s) = (beta + alpha*min(x,s)) * (delta + gamma*(L - max(x,s))) / D
    with D = alpha*gamma*L + alpha*delta + beta*gamma > 0; symmetric and
    non-negative on the square."""

    bc: BoundaryCoefficients
    L: float

    @property
    def denominator(self) -> float:
        bc = self.bc
        return bc.alpha * bc.gamma * self.L + bc.alpha * bc.delta + bc.beta * bc.gamma

    def __call__(self, x: float, s: float) -> float:
        if not (0.0 <= x <= self.L and 0.0 <= s <= self.L):
            raise ValueError(f"({x!r}, {s!r}) outside [0, {self.L!r}]^2")
        bc = self.bc
        lo, hi = (x, s) if x <= s else (s, x)
        return (bc.beta + bc.alpha * lo) * (bc.delta + bc.gamma * (self.L - hi)) / self.denominator


def green(kernel: GreenKernel, x: float, s: float) -> float:
    return kernel(x, s)


def _as_callable(u):
    if isinstance(u, Trajectory):
        return u.u
    return u


def verification_grid(p: Problem, n: int = _GRID_POINTS) -> list[float]:
    pts = {p.L * i / (n - 1) for i in range(n)}
    pts.update(p.breakpoints)
    return sorted(pts)


def apply_phi(p: Problem, u, quad_tol: float = 1e-9, grid=None):
    """Sample Phi u on the verification grid (junctions + uniform points).

    Each value is one adaptive quadrature over [0, L], split at the interval
    junctions and at the kernel kink s = x.
    """
    ufn = _as_callable(u)
    kernel = GreenKernel(p.bc, p.L)
    f = p.forcing
    if grid is None:
        grid = verification_grid(p)
    junctions = list(p.breakpoints)

    values = []
    for x in grid:
        def integrand(s, _x=x):
            return kernel(_x, s) * f(s, ufn(s))

        bps = junctions + [x]
        values.append(quad(integrand, 0.0, p.L, tol=quad_tol, breakpoints=bps))
    return grid, values


def phi_residual(p: Problem, u, quad_tol: float = 1e-9) -> float:
    """sup over the verification grid of |u(x) - (Phi u)(x)|."""
    ufn = _as_callable(u)
    grid, values = apply_phi(p, ufn, quad_tol=quad_tol)
    return max(abs(ufn(x) - v) for x, v in zip(grid, values))
