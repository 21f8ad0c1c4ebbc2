"""Shooting search for positive solutions and their classification.

A candidate is an IVP trajectory u'' = -f~(x, u) from
(u, u')(0) = s0*(beta, alpha)/max(alpha, beta), which meets the left
condition for every s0 >= 0; the scalar residual is the right condition
B(s0) = gamma*u(L) + delta*u'(L).  Blow-up through +/- infinity is kept as
a signed residual so brackets across blow-up windows survive; trajectories
that dip below zero complete under the zero extension and report the
ordinary residual.  Each refined root is verified three ways (boundary
residual, fixed-point residual against the Green operator, integral-form
ODE residual), checked positive on the interior grid, classified by its
per-hump maxima against (r, R), deduplicated, and entered into the subset
coverage table.  A uniform scan can miss solutions; missing coverage is
reported, never fabricated, and up to ``refine_passes`` re-scans at doubled
density are attempted.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import greenop
from .numerics import Bracket, BracketLost, Status, Trajectory, integrate, quad, refine_root
from .problem import Problem, SolverSettings

__all__ = [
    "SetSpec",
    "Solution",
    "ClassifyResult",
    "MultiplicityReport",
    "shoot",
    "classify",
    "find_solutions",
    "auto_bound",
]


@dataclass(frozen=True)
class SetSpec:
    """Classification thresholds 0 < r < R: a solution belongs to subset I
    when its max over hump i lies in (r, R) exactly for i in I and below r
    for the others."""

    r: float
    R: float

    def __post_init__(self):
        if not 0 < self.r < self.R:
            raise ValueError(f"need 0 < r < R, got r={self.r!r}, R={self.R!r}")


@dataclass(frozen=True)
class ClassifyResult:
    subset: frozenset[int] | None  # None means REJECT
    reason: str  # "", "tie", or "exceeds_R"
    maxima: tuple[float, ...]

    @property
    def rejected(self) -> bool:
        return self.subset is None


@dataclass(frozen=True)
class Solution:
    s0: float
    trajectory: Trajectory
    maxima: tuple[float, ...]
    subset: frozenset[int]
    bc_residual: float
    phi_residual: float
    ode_residual: float
    positivity: float  # min of u over the interior verification grid
    sup_norm: float

    def subset_key(self) -> str:
        return ",".join(str(i) for i in sorted(self.subset))


@dataclass
class MultiplicityReport:
    m: int
    count: int
    solutions: list[Solution]
    coverage: dict[str, bool]
    spec: SetSpec
    scan_points: int
    s_max: float
    passes: int
    warnings: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return all(self.coverage.values())

    def to_json_dict(self) -> dict:
        return {
            "m": self.m,
            "count": self.count,
            "complete": self.complete,
            "coverage": self.coverage,
            "classification": {"r": self.spec.r, "R": self.spec.R},
            "scan": {"points": self.scan_points, "s_max": self.s_max, "passes": self.passes},
            "solutions": [
                {
                    "s0": s.s0,
                    "subset": s.subset_key(),
                    "maxima": list(s.maxima),
                    "sup_norm": s.sup_norm,
                    "positivity": s.positivity,
                    "residuals": {
                        "bc": s.bc_residual,
                        "phi": s.phi_residual,
                        "ode": s.ode_residual,
                    },
                }
                for s in self.solutions
            ],
            "warnings": self.warnings,
            "diagnostics": self.diagnostics,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _initial_state(p: Problem, s0: float) -> tuple[float, float]:
    scale = max(p.bc.alpha, p.bc.beta)
    return (s0 * p.bc.beta / scale, s0 * p.bc.alpha / scale)


class _ExtendedField:
    """u'' = -f~(x, u), resolved per junction segment."""

    def __init__(self, p: Problem):
        self.forcing = p.forcing

    def local(self, a, b):
        f_loc = self.forcing.local(a, b)

        def f(x, u, up):
            return -f_loc(x, u)

        return f


def shoot(p: Problem, s0: float):
    """Integrate the IVP at shooting parameter s0.

    Returns (trajectory, residual); the residual is +/- inf on blow-up
    (signed by the escape direction) and None on an integration failure.
    """
    if s0 < 0:
        raise ValueError("shooting parameter must be non-negative")
    try:
        traj = integrate(
            _ExtendedField(p),
            _initial_state(p, s0),
            p.L,
            breakpoints=p.breakpoints[1:-1],
            tol=(p.settings.tol_abs, p.settings.tol_rel),
            blow_cap=p.settings.blow_cap,
        )
    except (ArithmeticError, ValueError, ZeroDivisionError, OverflowError):
        return None, None
    if traj.status is Status.BLEW_UP:
        u, up = traj.u_end, traj.up_end
        leader = u if abs(u) >= abs(up) else up
        return traj, math.copysign(math.inf, leader)
    return traj, p.bc.gamma * traj.u_end + p.bc.delta * traj.up_end


def classify(traj: Trajectory, spec: SetSpec, p: Problem, tie_tol: float | None = None) -> ClassifyResult:
    """Per-hump maxima from dense output against the (r, R) thresholds."""
    if tie_tol is None:
        tie_tol = p.settings.tie_tol
    maxima = tuple(traj.max_on(h.lo, h.hi) for h in p.humps)
    for mx in maxima:
        if abs(mx - spec.r) <= tie_tol:
            return ClassifyResult(None, "tie", maxima)
        if mx >= spec.R:
            return ClassifyResult(None, "exceeds_R", maxima)
    subset = frozenset(i + 1 for i, mx in enumerate(maxima) if mx > spec.r)
    return ClassifyResult(subset, "", maxima)


def auto_bound(p: Problem, n: int = 128, lo: float = 1e-3, hi: float = 1e3) -> float:
    """Empirical a priori bound: twice the largest positive-part sup over a
    coarse log-spaced shooting scan among trajectories that do not blow up,
    with a floor of 10.  The positive part is what matters: candidate
    solutions are non-negative, while completed trajectories of the extended
    dynamics can carry long negative linear tails of no relevance."""
    if p.settings.R_override is not None:
        return p.settings.R_override
    best = 0.0
    for i in range(n):
        s0 = lo * (hi / lo) ** (i / (n - 1))
        traj, _ = shoot(p, s0)
        if traj is not None and traj.reached_end:
            best = max(best, traj.max_on(0.0, p.L, 256))
    return max(10.0, 2.0 * best)


def _ode_residual(p: Problem, traj: Trajectory, tol: float) -> float:
    """sup_x |u'(x) - u'(0) + integral_0^x f~(xi, u(xi)) d(xi)| on the nodes."""
    forcing = p.forcing
    nodes = traj.nodes
    up0 = nodes[0][2]
    acc = 0.0
    worst = 0.0
    budget = tol / (4.0 * max(1, len(nodes)))
    for (xa, _, _), (xb, _, upb) in zip(nodes, nodes[1:]):
        if xb > xa:
            def integrand(x):
                return forcing(x, traj.u(x))

            acc += quad(integrand, xa, xb, tol=budget)
        worst = max(worst, abs(upb - up0 + acc))
    return worst


def _interior_min(p: Problem, traj: Trajectory) -> float:
    grid = greenop.verification_grid(p)
    xs = [x for x in grid if 0.0 < x < p.L]
    xs.extend(x for x, _, _ in traj.nodes if 0.0 < x < p.L)
    best = min(xs, key=traj.u)
    lo = max(0.0, best - p.L / 512)
    hi = min(p.L, best + p.L / 512)
    return min(traj.u(best), traj.min_on(lo, hi, 8))


def _linf_distance(a: Trajectory, b: Trajectory, grid) -> float:
    return max(abs(a.u(x) - b.u(x)) for x in grid)


def default_setspec(p: Problem, warnings: list[str] | None = None) -> SetSpec:
    """r from the proof-constant ledger when available, R from the a priori
    scan; falls back to a scale-based r when the ledger is unavailable."""
    from . import analysis  # late import: analysis uses shoot() for its R policy

    R = auto_bound(p)
    r_val = p.settings.r_override
    if r_val is None:
        try:
            r_val = analysis.smallness_radius(p)
        except Exception as err:  # noqa: BLE001 - fall back, but tell the user
            if warnings is not None:
                warnings.append(f"proof-constant r unavailable ({err}); using R/1000")
            r_val = R / 1000.0
    if not r_val < R:
        r_val = R / 1000.0
    return SetSpec(r=r_val, R=R)


def find_solutions(p: Problem, spec: SetSpec | None = None, scan: tuple[float, int] | None = None) -> MultiplicityReport:
    """Scan, bracket, refine, verify, classify, and assemble coverage."""
    st = p.settings
    warnings = list(p.warnings)
    if spec is None:
        spec = default_setspec(p, warnings)
    if scan is None:
        s_max = st.scan_smax if st.scan_smax is not None else 10.0 * spec.R
        n_points = st.scan_points
    else:
        s_max, n_points = scan

    verify_grid = greenop.verification_grid(p)
    residual_cache: dict[float, float] = {}

    def residual(s0: float):
        if s0 in residual_cache:
            return residual_cache[s0]
        _, res = shoot(p, s0)
        residual_cache[s0] = res
        return res

    solutions: list[Solution] = []
    rejected: list[dict] = []
    seen_roots: list[float] = []

    def try_root(s0: float):
        for r0 in seen_roots:
            if abs(s0 - r0) <= 1e-10 * (1.0 + abs(r0)):
                return
        seen_roots.append(s0)
        traj, res = shoot(p, s0)
        if traj is None or not traj.reached_end or res is None or not math.isfinite(res):
            rejected.append({"s0": s0, "reason": "no_complete_trajectory"})
            return
        bc_res = abs(res)
        if bc_res > st.bc_tol:
            rejected.append({"s0": s0, "reason": "bc_residual", "value": bc_res})
            return
        positivity = _interior_min(p, traj)
        if positivity <= 0.0:
            rejected.append({"s0": s0, "reason": "not_positive", "value": positivity})
            return
        cls = classify(traj, spec, p)
        if cls.rejected:
            rejected.append({"s0": s0, "reason": cls.reason, "maxima": list(cls.maxima)})
            return
        phi_res = greenop.phi_residual(p, traj, quad_tol=st.quad_tol)
        if phi_res > st.verify_tol:
            rejected.append({"s0": s0, "reason": "phi_residual", "value": phi_res})
            return
        ode_res = _ode_residual(p, traj, st.ode_tol)
        if ode_res > st.ode_tol:
            rejected.append({"s0": s0, "reason": "ode_residual", "value": ode_res})
            return
        for existing in solutions:
            if _linf_distance(existing.trajectory, traj, verify_grid) < st.dedupe_tol:
                return
        solutions.append(
            Solution(
                s0=s0,
                trajectory=traj,
                maxima=cls.maxima,
                subset=cls.subset,
                bc_residual=bc_res,
                phi_residual=phi_res,
                ode_residual=ode_res,
                positivity=positivity,
                sup_norm=traj.sup_norm(),
            )
        )

    def covered() -> dict[str, bool]:
        keys = []
        for mask in range(1, 2 ** p.m):
            subset = frozenset(i + 1 for i in range(p.m) if mask & (1 << i))
            keys.append(",".join(str(i) for i in sorted(subset)))
        found = {s.subset_key() for s in solutions if s.subset}
        return {k: k in found for k in sorted(keys)}

    passes = 0
    n = n_points
    while True:
        passes += 1
        # the grid floor must sit well below the smallest shooting parameter
        # that can push any hump past the classification radius r
        s_min = min(s_max * 1e-6, 0.01 * spec.r / max(1.0, p.L))
        ratio = (s_max / s_min) ** (1.0 / (n - 1))
        log_grid = [s_min * ratio ** i for i in range(n)]

        brackets = []
        prev = None
        for s0 in log_grid:
            v = residual(s0)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                prev = None
                continue
            if prev is not None:
                pv = prev[1]
                if (pv > 0 > v) or (pv < 0 < v):
                    brackets.append(Bracket(prev[0], s0, pv, v))
            if v == 0.0 and s0 > 0.0:
                try_root(s0)
            prev = (s0, v)

        for br in brackets:
            try:
                root = refine_root(
                    residual,
                    br,
                    tol=4.0 * 2.220446049250313e-16 * max(1.0, abs(br.hi)),
                    ftol=0.5 * st.bc_tol,
                    max_iter=300,
                )
            except BracketLost:
                continue
            try_root(root)

        if all(covered().values()) or passes > st.refine_passes:
            break
        n *= 2

    solutions.sort(key=lambda s: s.s0)
    report = MultiplicityReport(
        m=p.m,
        count=len(solutions),
        solutions=solutions,
        coverage=covered(),
        spec=spec,
        scan_points=n_points,
        s_max=s_max,
        passes=passes,
        warnings=warnings,
        diagnostics={"rejected": rejected[:50], "rejected_count": len(rejected)},
    )
    return report
