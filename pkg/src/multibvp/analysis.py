"""Hypothesis verification and the explicit sufficient-threshold ledger.

For each hump the ledger carries the margin rho, the smallness radius r
(largest grid value below which every hump nonlinearity stays under the
eigenvalue margin in ratio), the derivative bound M, the boundary lower
bound constant c, the adjacent-trough minima nu, the push windows delta,
and the per-side trough thresholds beta; beta_star is their maximum.  When
every trough coefficient exceeds beta_star the problem has at least 2^m - 1
positive solutions, one per nonempty subset of humps.

Two ingredients of that guarantee are not constructive: the a priori
sup-norm bound exists but has no formula, so the default policy estimates
it from a coarse shooting scan (twice the largest non-blow-up sup-norm,
floor 10); the resulting beta_star is an empirical sufficient threshold,
not a certified one, and every report says so.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

from . import eigen
from .numerics import quad
from .problem import Problem

__all__ = [
    "AnalysisError",
    "HypothesisReport",
    "HumpConstants",
    "ProofConstants",
    "check_hypotheses",
    "smallness_radius",
    "proof_constants",
    "sweep",
]

_R_GRID_DECADE_STEPS = 8
_R_GRID_MAX_STEPS = 200
_R_SAMPLES = 256
_MIN_SCAN_SAMPLES = 1024
_MAX_G_SAMPLES = 1024
_EMPIRICAL_NOTE = (
    "R is an empirical a priori bound from a coarse shooting scan; "
    "beta_star is a sufficient threshold relative to that bound, not a certified constant"
)


class AnalysisError(RuntimeError):
    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


# ---------------------------------------------------------------------------
# hypothesis report


@dataclass
class HypothesisReport:
    statuses: dict  # name -> {"status": PASS|WARN|FAIL, "notes": [...]}
    lambda0: float | None
    lambda1: list
    cond_A: list  # per hump: {"i", "alpha_g0", "lambda0", "pass"}
    cond_B: list  # per hump: {"i", "alpha_ginf", "lambda1", "pass"}
    warnings: list

    @property
    def all_pass(self) -> bool:
        return all(v["status"] != "FAIL" for v in self.statuses.values())

    def to_json_dict(self) -> dict:
        return {
            "statuses": self.statuses,
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "cond_A": self.cond_A,
            "cond_B": self.cond_B,
            "warnings": self.warnings,
            "all_pass": self.all_pass,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _ratio_samples(fn, points):
    out = []
    for s in points:
        try:
            out.append(fn(s) / s)
        except ArithmeticError:
            out.append(math.nan)
    return out


def _spot_check_zero(name: str, ratios, notes):
    if not all(math.isfinite(v) or v == math.inf for v in ratios):
        notes.append(f"{name}: ratio samples not evaluable")
        return
    if not (ratios[0] >= ratios[1] >= ratios[2]):
        notes.append(f"{name}: declared limit 0 but sampled ratios {ratios} are not decreasing")


def _spot_check_infinite(name: str, ratios, notes):
    if not (ratios[2] >= ratios[1] >= ratios[0]):
        notes.append(f"{name}: declared limit inf but sampled ratios {ratios} are not increasing")


def _spot_check_finite(name: str, declared: float, ratio: float, notes):
    if declared > 0 and math.isfinite(ratio):
        q = ratio / declared
        if not 0.5 <= q <= 2.0:
            notes.append(
                f"{name}: declared limit {declared:g} is off by more than 2x from sampled ratio {ratio:g}"
            )
    elif declared == 0.0:
        pass
    elif not math.isfinite(ratio):
        notes.append(f"{name}: declared finite limit {declared:g} but sampled ratio diverges")


def check_hypotheses(p: Problem) -> HypothesisReport:
    """Evaluate the structural assumptions and the eigenvalue conditions."""
    statuses = {}
    warnings = list(p.warnings)

    notes_h1 = list(p.warnings)
    statuses["h1"] = {"status": "WARN" if notes_h1 else "PASS", "notes": notes_h1}
    statuses["h2"] = {"status": "PASS", "notes": ["sign structure sampled at load time"]}

    notes_h3 = []
    spot = []
    small = (1e-3, 1e-4, 1e-5)
    large = (1e3, 1e4, 1e5)
    for i, h in enumerate(p.humps, start=1):
        g0, ginf = h.limits.g0, h.limits.ginf
        if not math.isfinite(g0):
            notes_h3.append(f"hump {i}: declared g0 is not finite")
        if not ginf > 0:
            notes_h3.append(f"hump {i}: declared ginf is not positive")
        r_small = _ratio_samples(h.nonlinearity, small)
        r_large = _ratio_samples(h.nonlinearity, large)
        if g0 == 0.0:
            _spot_check_zero(f"hump {i} g0", r_small, spot)
        elif math.isfinite(g0):
            _spot_check_finite(f"hump {i} g0", g0, r_small[-1], spot)
        if ginf == math.inf:
            _spot_check_infinite(f"hump {i} ginf", r_large, spot)
        else:
            _spot_check_finite(f"hump {i} ginf", ginf, r_large[-1], spot)
    for j, t in enumerate(p.troughs):
        if t.empty:
            continue
        k0 = t.limits.k0
        if not math.isfinite(k0):
            notes_h3.append(f"trough {j}: declared k0 is not finite")
            continue
        r_small = _ratio_samples(t.nonlinearity, small)
        if k0 == 0.0:
            _spot_check_zero(f"trough {j} k0", r_small, spot)
        else:
            _spot_check_finite(f"trough {j} k0", k0, r_small[-1], spot)
    statuses["h3"] = {"status": "FAIL" if notes_h3 else "PASS", "notes": notes_h3}
    warnings.extend(spot)

    lam0 = None
    lam1: list = []
    cond_a: list = []
    cond_b: list = []
    if notes_h3:
        statuses["cond_A"] = {"status": "FAIL", "notes": ["not evaluated: h3 failed"]}
        statuses["cond_B"] = {"status": "FAIL", "notes": ["not evaluated: h3 failed"]}
    else:
        lam0 = eigen.lambda0(p).lam
        lam1 = [eigen.lambda1(p, i).lam for i in range(1, p.m + 1)]
        ok_a = True
        ok_b = True
        for i, h in enumerate(p.humps, start=1):
            a_g0 = h.coefficient * h.limits.g0
            passes = a_g0 < lam0
            ok_a &= passes
            cond_a.append({"i": i, "alpha_g0": a_g0, "lambda0": lam0, "pass": passes})
            a_ginf = h.coefficient * h.limits.ginf
            passes_b = a_ginf > lam1[i - 1]
            ok_b &= passes_b
            cond_b.append({"i": i, "alpha_ginf": a_ginf, "lambda1": lam1[i - 1], "pass": passes_b})
        statuses["cond_A"] = {"status": "PASS" if ok_a else "FAIL", "notes": []}
        statuses["cond_B"] = {"status": "PASS" if ok_b else "FAIL", "notes": []}
    if spot:
        statuses["h3"]["notes"] = statuses["h3"]["notes"] + spot
        if statuses["h3"]["status"] == "PASS":
            statuses["h3"]["status"] = "WARN"

    return HypothesisReport(
        statuses=statuses,
        lambda0=lam0,
        lambda1=lam1,
        cond_A=cond_a,
        cond_B=cond_b,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# proof constants


@dataclass(frozen=True)
class HumpConstants:
    index: int
    rho: float
    M: float
    c: float
    deriv_sup: float
    nu_left: float | None
    nu_right: float | None
    delta_plus: float | None
    delta_minus: float | None
    beta_plus: float | None
    beta_minus: float | None


@dataclass
class ProofConstants:
    lambda0: float
    lambda1: list
    r: float
    R: float
    beta_star: float
    humps: list  # HumpConstants
    notes: list = field(default_factory=list)

    def to_json_dict(self) -> dict:
        hump_dict = {}
        for h in self.humps:
            entry = {"rho_i": h.rho, "M_l": h.M, "c_l": h.c, "phi_deriv_sup": h.deriv_sup}
            if h.nu_right is not None:
                entry["nu_l_right"] = h.nu_right
                entry["delta_l_plus"] = h.delta_plus
                entry["beta_l_plus"] = h.beta_plus
            if h.nu_left is not None:
                entry["nu_l_left"] = h.nu_left
                entry["delta_l_minus"] = h.delta_minus
                entry["beta_l_minus"] = h.beta_minus
            hump_dict[str(h.index)] = entry
        return {
            "lambda0": self.lambda0,
            "lambda1": self.lambda1,
            "r": self.r,
            "R": self.R,
            "beta_star": self.beta_star,
            "humps": hump_dict,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)


def _rho_values(p: Problem, lam0: float) -> list[float]:
    rhos = []
    for i, h in enumerate(p.humps, start=1):
        margin = lam0 - h.coefficient * h.limits.g0
        if margin <= 0:
            raise AnalysisError(
                "HYPOTHESES", f"hump {i}: alpha*g0 = {h.coefficient * h.limits.g0:g} not below lambda0 = {lam0:g}"
            )
        rhos.append(0.5 * margin)
    return rhos


def _ratio_ceiling_ok(p: Problem, rhos, lam0: float, r: float) -> bool:
    for h, rho in zip(p.humps, rhos):
        bound = lam0 - rho
        alpha = h.coefficient
        gfn = h.nonlinearity.fn
        for j in range(_R_SAMPLES):
            s = r * 10.0 ** (-6.0 * (1.0 - j / (_R_SAMPLES - 1.0)))
            if alpha * gfn(s) / s >= bound:
                return False
    return True


def smallness_radius(p: Problem, lam0: float | None = None, r0: float = 1.0):
    """The radius r: largest value on a descending log grid from r0 such that
    every hump keeps alpha*g(s)/s strictly under lambda0 - rho on (0, r]."""
    if lam0 is None:
        lam0 = eigen.lambda0(p).lam
    rhos = _rho_values(p, lam0)
    for k in range(_R_GRID_MAX_STEPS + 1):
        r = r0 * 10.0 ** (-k / _R_GRID_DECADE_STEPS)
        if _ratio_ceiling_ok(p, rhos, lam0, r):
            return r
    raise AnalysisError("SMALLNESS", "no radius on the grid satisfies the ratio bound")


def _max_on_segment(fn, lo: float, hi: float, n: int) -> float:
    return max(fn(lo + (hi - lo) * j / n) for j in range(n + 1))


def _min_on_segment(fn, lo: float, hi: float, n: int) -> float:
    return min(fn(lo + (hi - lo) * j / n) for j in range(n + 1))


def _double_integral_right(bfn, tau: float, delta: float, tol: float = 1e-12) -> float:
    """integral_{tau}^{tau+delta} ( integral_{tau}^{s} b ) ds."""

    def inner(s):
        return quad(bfn, tau, s, tol=tol * 1e-2) if s > tau else 0.0

    return quad(inner, tau, tau + delta, tol=tol)


def _double_integral_left(bfn, sigma: float, delta: float, tol: float = 1e-12) -> float:
    """integral_{sigma-delta}^{sigma} ( integral_{s}^{sigma} b ) ds."""

    def inner(s):
        return quad(bfn, s, sigma, tol=tol * 1e-2) if s < sigma else 0.0

    return quad(inner, sigma - delta, sigma, tol=tol)


def proof_constants(p: Problem, R_policy="auto") -> ProofConstants:
    """Assemble the full constant ledger; R_policy is "auto" or a number."""
    lam0 = eigen.lambda0(p).lam
    rhos = _rho_values(p, lam0)
    r = smallness_radius(p, lam0)

    if R_policy == "auto":
        from . import solver  # late import: the R policy runs a coarse scan

        R = solver.auto_bound(p)
        notes = [_EMPIRICAL_NOTE]
    else:
        R = float(R_policy)
        notes = [f"R fixed by caller at {R:g}"]
    if R <= r:
        raise AnalysisError("BOUNDS", f"a priori bound R = {R:g} does not exceed r = {r:g}")

    lam1_results = [eigen.lambda1(p, i) for i in range(1, p.m + 1)]
    troughs = p.troughs
    humps = []
    betas = []
    for i, (h, rho, lam1_res) in enumerate(zip(p.humps, rhos, lam1_results), start=1):
        width = h.width
        alpha = h.coefficient
        g_max = _max_on_segment(h.nonlinearity.fn, 0.0, r, _MAX_G_SAMPLES)
        weight_mass = quad(h.weight.fn, h.lo, h.hi, tol=1e-12)
        M = r / width + alpha * g_max * weight_mass

        phi = lam1_res.eigenfunction
        mid = 0.5 * (h.lo + h.hi)

        def tent(x, _lo=h.lo, _hi=h.hi):
            return min(x - _lo, _hi - x)

        moment = quad(
            lambda x: tent(x) * h.weight.fn(x) * phi.u(x),
            h.lo,
            h.hi,
            tol=1e-12,
            breakpoints=[mid],
        )
        c = rho / (width * lam1_res.deriv_sup) * moment
        if not c > 0:
            raise AnalysisError("BOUNDS", f"hump {i}: boundary constant c is not positive")

        s_lo = c * r / 4.0
        left_trough = troughs[i - 1]
        right_trough = troughs[i]

        nu_left = nu_right = None
        delta_plus = delta_minus = None
        beta_plus = beta_minus = None
        if not right_trough.empty:
            nu_right = _min_on_segment(right_trough.nonlinearity.fn, s_lo, R, _MIN_SCAN_SAMPLES)
            delta_plus = min(right_trough.width, c * r / (4.0 * M))
            d_int = _double_integral_right(right_trough.weight.fn, h.hi, delta_plus)
            if d_int <= 0:
                raise AnalysisError(
                    "DEGENERATE_B_INTEGRAL",
                    f"trough weight after hump {i} integrates to zero over its push window",
                )
            beta_plus = (R + M * p.L) / (nu_right * d_int)
            betas.append(beta_plus)
        if not left_trough.empty:
            nu_left = _min_on_segment(left_trough.nonlinearity.fn, s_lo, R, _MIN_SCAN_SAMPLES)
            delta_minus = min(left_trough.width, c * r / (4.0 * M))
            d_int = _double_integral_left(left_trough.weight.fn, h.lo, delta_minus)
            if d_int <= 0:
                raise AnalysisError(
                    "DEGENERATE_B_INTEGRAL",
                    f"trough weight before hump {i} integrates to zero over its push window",
                )
            beta_minus = (R + M * p.L) / (nu_left * d_int)
            betas.append(beta_minus)

        humps.append(
            HumpConstants(
                index=i,
                rho=rho,
                M=M,
                c=c,
                deriv_sup=lam1_res.deriv_sup,
                nu_left=nu_left,
                nu_right=nu_right,
                delta_plus=delta_plus,
                delta_minus=delta_minus,
                beta_plus=beta_plus,
                beta_minus=beta_minus,
            )
        )

    beta_star = max(betas) if betas else 0.0
    if not betas:
        notes.append("no non-empty troughs: the threshold is vacuous and beta_star is reported as 0")
    return ProofConstants(
        lambda0=lam0,
        lambda1=[res.lam for res in lam1_results],
        r=r,
        R=R,
        beta_star=beta_star,
        humps=humps,
        notes=notes,
    )


# ---------------------------------------------------------------------------
# coefficient sweep


def sweep(p: Problem, selector: str, values) -> list[dict]:
    """Re-solve the problem at each coefficient value; one row per value."""
    from . import solver  # late import to keep module loading acyclic

    rows = []
    for value in values:
        row = {"value": float(value), "status": "OK", "count": 0, "covered_subsets": [], "complete": False}
        try:
            modified = p.with_coefficient(selector, float(value))
            report = solver.find_solutions(modified)
            row["count"] = report.count
            row["covered_subsets"] = [k for k, v in sorted(report.coverage.items()) if v]
            row["complete"] = report.complete
        except Exception as err:  # noqa: BLE001 - a row failure must not kill the sweep
            row["status"] = "FAILED"
            row["error"] = str(err)
        rows.append(row)
    return rows
