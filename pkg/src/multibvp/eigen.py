"""First eigenvalues of phi'' + lambda*w(x)*phi = 0 with separated endpoint
conditions alpha_c*phi(a) - beta_c*phi'(a) = 0, gamma_c*phi(b) + delta_c*phi'(b) = 0.

The eigenvalue search runs on the phase angle theta = atan2(phi, phi'),
which satisfies theta' = cos(theta)^2 + lambda*w(x)*sin(theta)^2.  With
w >= 0 the angle is non-decreasing in x and strictly increasing in lambda,
so the first eigenvalue is the unique lambda driving theta(b) from its
left-condition value onto the first right-condition branch; by monotonicity
the eigenfunction has no interior zeros (rotation count 0), which is the
firstness certificate.  The angle is robust where the weight vanishes on
subintervals (phi is linear there).
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass

from . import numerics as nm
from .numerics import Bracket, Trajectory, refine_root
from .problem import Problem

__all__ = [
    "PiecewiseWeight",
    "EigenProblem",
    "EigenResult",
    "NoEigenvalueFound",
    "first_eigenvalue",
    "lambda0",
    "lambda1",
]

_LAMBDA_MAX = 1e8
_ANGLE_TOL = (1e-12, 1e-11)
_FUN_TOL = (1e-12, 1e-10)


class NoEigenvalueFound(RuntimeError):
    """No eigenvalue below the search cap (weight too small on the domain)."""


def _zero(x: float) -> float:
    return 0.0


class PiecewiseWeight:
    """w(x) assembled from per-interval callables, zero elsewhere."""

    def __init__(self, pieces):
        # pieces: iterable of (lo, hi, callable); disjoint, ordered
        self.pieces = [(lo, hi, fn) for lo, hi, fn in pieces if hi > lo]
        self.his = [hi for _, hi, _ in self.pieces]

    @property
    def breakpoints(self):
        pts = []
        for lo, hi, _ in self.pieces:
            pts.append(lo)
            pts.append(hi)
        return sorted(set(pts))

    def _fn_at(self, x: float):
        i = bisect_left(self.his, x)
        if i < len(self.pieces):
            lo, hi, fn = self.pieces[i]
            if lo <= x <= hi:
                return fn
        return _zero

    def __call__(self, x: float) -> float:
        return self._fn_at(x)(x)

    def local(self, a: float, b: float):
        return self._fn_at(0.5 * (a + b))

    @staticmethod
    def constant(value: float, a: float, b: float) -> "PiecewiseWeight":
        c = float(value)
        return PiecewiseWeight([(a, b, lambda x, _c=c: _c)])

    @staticmethod
    def from_exprs(items) -> "PiecewiseWeight":
        return PiecewiseWeight([(lo, hi, e.fn) for lo, hi, e in items])


@dataclass(frozen=True)
class EigenProblem:
    a: float
    b: float
    weight: PiecewiseWeight
    left: tuple[float, float]  # (alpha_c, beta_c)
    right: tuple[float, float]  # (gamma_c, delta_c)

    def validate(self) -> None:
        if not self.b > self.a:
            raise ValueError("empty eigen domain")
        for name, (p, q) in (("left", self.left), ("right", self.right)):
            if p < 0 or q < 0 or (p == 0 and q == 0):
                raise ValueError(f"{name} condition coefficients must be non-negative, not both zero")


@dataclass(frozen=True)
class EigenResult:
    lam: float
    eigenfunction: Trajectory  # normalized to sup-norm 1, non-negative
    deriv_sup: float  # sup of |phi'| after normalization
    bc_residual: float
    interior_zeros: int = 0

    def phi(self, x: float) -> float:
        return self.eigenfunction.u(x)

    def dphi(self, x: float) -> float:
        return self.eigenfunction.up(x)


class _AngleField:
    def __init__(self, weight: PiecewiseWeight, lam: float):
        self.weight = weight
        self.lam = lam

    def local(self, a, b):
        w = self.weight.local(a, b)
        lam = self.lam

        def rhs(x, y):
            th = y[0]
            s = math.sin(th)
            c = math.cos(th)
            return (c * c + lam * w(x) * s * s,)

        return rhs


class _LinearField:
    """u'' = -lam * w(x) * u as a segment-resolved second-order field."""

    def __init__(self, weight: PiecewiseWeight, lam: float):
        self.weight = weight
        self.lam = lam

    def local(self, a, b):
        w = self.weight.local(a, b)
        lam = self.lam

        def f(x, u, up):
            return -lam * w(x) * u

        return f


def _angle_at_end(ep: EigenProblem, lam: float) -> float:
    theta0 = math.atan2(ep.left[1], ep.left[0])
    field = _AngleField(ep.weight, lam)
    path = nm._integrate_system(
        None,
        ep.a,
        ep.b,
        (theta0,),
        breakpoints=[p for p in ep.weight.breakpoints if ep.a < p < ep.b],
        atol=_ANGLE_TOL[0],
        rtol=_ANGLE_TOL[1],
        blow_cap=1e12,
        local_factory=field.local,
    )
    return path.y_end[0]


def first_eigenvalue(ep: EigenProblem, tol: float = 1e-10, lambda_max: float = _LAMBDA_MAX) -> EigenResult:
    """Smallest positive lambda meeting the right condition with rotation 0."""
    ep.validate()
    gamma_c, delta_c = ep.right
    theta_target = math.pi - math.atan2(delta_c, gamma_c)
    theta0 = math.atan2(ep.left[1], ep.left[0])

    def gap(lam: float) -> float:
        return _angle_at_end(ep, lam) - theta_target

    g0 = gap(0.0)
    if g0 >= 0.0:
        raise NoEigenvalueFound("the angle already passes the target at lambda = 0")
    lo, g_lo = 0.0, g0
    hi = 1.0
    while True:
        g_hi = gap(hi)
        if g_hi > 0.0:
            break
        lo, g_lo = hi, g_hi
        hi *= 2.0
        if hi > lambda_max:
            raise NoEigenvalueFound(f"no eigenvalue below lambda_max = {lambda_max:g}")
    lam = refine_root(gap, Bracket(lo, hi, g_lo, g_hi), tol=tol * max(1.0, hi) * 1e-2)

    # eigenfunction at the converged lambda
    scale = max(ep.left)
    y0 = (ep.left[1] / scale, ep.left[0] / scale)
    traj = nm.integrate(
        _LinearField(ep.weight, lam),
        y0,
        ep.b,
        x0=ep.a,
        breakpoints=[p for p in ep.weight.breakpoints if ep.a < p < ep.b],
        tol=_FUN_TOL,
        blow_cap=1e12,
    )
    sup = traj.max_on(ep.a, ep.b, 256)
    if sup <= 0:
        raise NoEigenvalueFound("eigenfunction not positive; search failed")
    phi = traj.rescaled(1.0 / sup)
    bc_res = abs(gamma_c * phi.u_end + delta_c * phi.up_end)
    deriv = _sup_abs_deriv(phi, ep.a, ep.b)
    return EigenResult(lam=lam, eigenfunction=phi, deriv_sup=deriv, bc_residual=bc_res)


def _sup_abs_deriv(traj: Trajectory, a: float, b: float, n: int = 2048) -> float:
    xs = [a + (b - a) * i / n for i in range(n + 1)]
    xs.extend(x for x, _, _ in traj.nodes if a < x < b)
    xs.sort()
    vals = [abs(traj.up(x)) for x in xs]
    best = max(range(len(xs)), key=lambda i: vals[i])
    lo = xs[max(0, best - 1)]
    hi = xs[min(len(xs) - 1, best + 1)]
    # golden polish of |phi'| around the sampled argmax
    inv = (math.sqrt(5) - 1) / 2
    c = hi - inv * (hi - lo)
    d = lo + inv * (hi - lo)
    fc, fd = abs(traj.up(c)), abs(traj.up(d))
    for _ in range(40):
        if fc > fd:
            hi, d, fd = d, c, fc
            c = hi - inv * (hi - lo)
            fc = abs(traj.up(c))
        else:
            lo, c, fc = c, d, fd
            d = lo + inv * (hi - lo)
            fd = abs(traj.up(d))
    return max(vals[best], fc, fd)


def _hump_weight(p: Problem) -> PiecewiseWeight:
    return PiecewiseWeight.from_exprs((iv.lo, iv.hi, iv.weight) for iv in p.humps)


def lambda0(p: Problem, tol: float = 1e-10) -> EigenResult:
    """First eigenvalue on [0, L] with the summed hump weights and the
    problem's own endpoint conditions."""
    ep = EigenProblem(
        a=0.0,
        b=p.L,
        weight=_hump_weight(p),
        left=(p.bc.alpha, p.bc.beta),
        right=(p.bc.gamma, p.bc.delta),
    )
    return first_eigenvalue(ep, tol=tol)


def lambda1(p: Problem, i: int, tol: float = 1e-10) -> EigenResult:
    """First eigenvalue on hump i (1-based), Dirichlet on the hump boundary
    except where the hump touches an endpoint of [0, L]: there the problem's
    own condition applies."""
    if not 1 <= i <= p.m:
        raise ValueError(f"hump index {i} out of range 1..{p.m}")
    hump = p.humps[i - 1]
    left = (1.0, 0.0)
    right = (1.0, 0.0)
    if i == 1 and hump.lo == 0.0:
        left = (p.bc.alpha, p.bc.beta)
    if i == p.m and hump.hi == p.L:
        right = (p.bc.gamma, p.bc.delta)
    ep = EigenProblem(
        a=hump.lo,
        b=hump.hi,
        weight=PiecewiseWeight.from_exprs([(hump.lo, hump.hi, hump.weight)]),
        left=left,
        right=right,
    )
    return first_eigenvalue(ep, tol=tol)
