"""BVP description: interval partition, weights, nonlinearities, boundary data.

A problem lives on [0, L] and is tiled by an alternating sequence of
trough intervals (kind "J", where the forcing is -coef*b(x)*k(u) <= 0) and
hump intervals (kind "I", where it is +coef*a(x)*g(u) >= 0):

    J_0, I_1, J_1, I_2, ..., I_m, J_m

with J_0 and J_m possibly empty (zero length).  Configs may omit the empty
end troughs; the loader normalizes.  Weights must be non-negative on their
interval, nonlinearities must vanish at 0 and be positive for s > 0.
"""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

from . import expr as ex

__all__ = [
    "ConfigError",
    "BoundaryCoefficients",
    "DeclaredLimits",
    "IntervalSpec",
    "SolverSettings",
    "Problem",
    "load",
    "load_dict",
    "f_of",
    "f_extended",
]


class ConfigError(ValueError):
    """Config rejection; ``code`` names the violated rule."""

    def __init__(self, code: str, message: str):
        super().__init__(f"{code}: {message}")
        self.code = code


def _number(value, where: str) -> float:
    """A config number: a JSON number or a constant expression in pi."""
    if isinstance(value, bool):
        raise ConfigError("SCHEMA", f"{where}: expected a number, got {value!r}")
    if isinstance(value, (int, float)):
        v = float(value)
    elif isinstance(value, str):
        try:
            v = ex.parse(value, "_")(0.0)
        except (ex.ParseError, ex.EvalDomainError) as err:
            raise ConfigError("SCHEMA", f"{where}: bad number expression {value!r}: {err}") from err
    else:
        raise ConfigError("SCHEMA", f"{where}: expected a number, got {value!r}")
    if not math.isfinite(v):
        raise ConfigError("SCHEMA", f"{where}: non-finite value")
    return v


def _limit_number(value, where: str) -> float:
    if value == "inf":
        return math.inf
    v = _number(value, where)
    if v < 0:
        raise ConfigError("SCHEMA", f"{where}: limits must be non-negative")
    return v


@dataclass(frozen=True)
class BoundaryCoefficients:
    """Endpoint data: alpha*u(0) - beta*u'(0) = 0, gamma*u(L) + delta*u'(L) = 0."""

    alpha: float
    beta: float
    gamma: float
    delta: float

    def validate(self, L: float) -> None:
        for name in ("alpha", "beta", "gamma", "delta"):
            if getattr(self, name) < 0:
                raise ConfigError("SCHEMA", f"bc.{name} must be non-negative")
        if self.alpha * self.gamma * L + self.alpha * self.delta + self.beta * self.gamma <= 0:
            raise ConfigError(
                "DEGENERATE_BC",
                "alpha*gamma*L + alpha*delta + beta*gamma must be positive",
            )


@dataclass(frozen=True)
class DeclaredLimits:
    """User-declared limits of g(s)/s (humps) or k(s)/s (troughs).

    Limits of black-box expressions are not computable in general, so they
    are config metadata; the analysis module spot-checks them numerically.
    """

    g0: float | None = None
    ginf: float | None = None
    k0: float | None = None


@dataclass(frozen=True)
class IntervalSpec:
    kind: str  # "I" (hump) or "J" (trough)
    lo: float
    hi: float
    weight: ex.Expr  # in the space variable, >= 0 on [lo, hi]
    nonlinearity: ex.Expr  # in s, zero at 0 and positive for s > 0
    coefficient: float
    limits: DeclaredLimits

    @property
    def empty(self) -> bool:
        return self.lo == self.hi

    @property
    def width(self) -> float:
        return self.hi - self.lo


_SETTINGS_FIELDS = {
    "tol_abs": 1e-10,
    "tol_rel": 1e-8,
    "blow_cap": 1e8,
    "scan_points": 800,
    "scan_smax": None,
    "refine_passes": 2,
    "dedupe_tol": 1e-4,
    "tie_tol": 1e-9,
    "verify_tol": 1e-6,
    "bc_tol": 1e-8,
    "ode_tol": 1e-6,
    "quad_tol": 1e-9,
    "r_override": None,
    "R_override": None,
    "threads": 1,
    "seed": 0,
}


@dataclass(frozen=True)
class SolverSettings:
    """Tolerances and scan parameters; defaults match the module ledgers."""

    tol_abs: float = 1e-10
    tol_rel: float = 1e-8
    blow_cap: float = 1e8
    scan_points: int = 800
    scan_smax: float | None = None  # None: 10 * R from the a priori bound
    refine_passes: int = 2
    dedupe_tol: float = 1e-4
    tie_tol: float = 1e-9
    verify_tol: float = 1e-6
    bc_tol: float = 1e-8
    ode_tol: float = 1e-6
    quad_tol: float = 1e-9
    r_override: float | None = None
    R_override: float | None = None
    threads: int = 1
    seed: int = 0  # reserved; v1 has no randomness

    @staticmethod
    def from_dict(raw: dict) -> "SolverSettings":
        unknown = set(raw) - set(_SETTINGS_FIELDS)
        if unknown:
            raise ConfigError("SCHEMA", f"unknown solver settings: {sorted(unknown)}")
        kwargs = {}
        for key, value in raw.items():
            if key in ("scan_points", "refine_passes", "threads", "seed"):
                kwargs[key] = int(value)
            elif value is None:
                kwargs[key] = None
            else:
                kwargs[key] = _number(value, f"solver.{key}")
        return SolverSettings(**kwargs)


class _PiecewiseField:
    """Right-hand side forcing f(x, s) resolved per interval.

    ``local(a, b)`` returns the single-interval field owning the segment
    (a, b), which is what the integrator uses so that values at shared
    endpoints are one-sided; direct calls use the left-owner convention.
    """

    def __init__(self, intervals):
        self.pieces = [iv for iv in intervals if not iv.empty]
        self.his = [iv.hi for iv in self.pieces]
        self.lo = self.pieces[0].lo
        self.hi = self.pieces[-1].hi

    def piece_at(self, x: float) -> IntervalSpec:
        i = bisect.bisect_left(self.his, x)
        if i == len(self.pieces):
            i -= 1
        return self.pieces[i]

    def __call__(self, x: float, s: float) -> float:
        if s <= 0.0:
            return 0.0
        iv = self.piece_at(x)
        value = iv.coefficient * iv.weight.fn(x) * iv.nonlinearity.fn(s)
        return value if iv.kind == "I" else -value

    def local(self, a: float, b: float):
        iv = self.piece_at(0.5 * (a + b))
        sign = 1.0 if iv.kind == "I" else -1.0
        coef = sign * iv.coefficient
        wfn = iv.weight.fn
        gfn = iv.nonlinearity.fn

        def f_local(x: float, s: float) -> float:
            if s <= 0.0:
                return 0.0
            return coef * wfn(x) * gfn(s)

        return f_local


@dataclass(frozen=True)
class Problem:
    """A validated BVP; immutable, safe to share across threads."""

    L: float
    bc: BoundaryCoefficients
    intervals: tuple[IntervalSpec, ...]  # normalized alternating J,I,...,I,J
    settings: SolverSettings
    warnings: tuple[str, ...] = ()
    raw: dict = field(default=None, repr=False, compare=False)

    @property
    def m(self) -> int:
        return sum(1 for iv in self.intervals if iv.kind == "I")

    @property
    def humps(self) -> tuple[IntervalSpec, ...]:
        """Hump i (1-based) is humps[i-1]."""
        return tuple(iv for iv in self.intervals if iv.kind == "I")

    @property
    def troughs(self) -> tuple[IntervalSpec, ...]:
        """Trough j (0-based, j = 0..m) is troughs[j]."""
        return tuple(iv for iv in self.intervals if iv.kind == "J")

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = [self.intervals[0].lo]
        for iv in self.intervals:
            if iv.hi != pts[-1]:
                pts.append(iv.hi)
        return tuple(pts)

    @cached_property
    def forcing(self) -> _PiecewiseField:
        return _PiecewiseField(self.intervals)

    def to_config_dict(self) -> dict:
        return json.loads(json.dumps(self.raw)) if self.raw else None

    def with_coefficient(self, selector: str, value: float) -> "Problem":
        """A copy with hump/trough coefficients replaced.

        Selector: "alpha:<i>|*" (humps, 1-based), "beta:<j>|*" (troughs,
        0-based), or "mu" as an alias for every non-empty trough.
        """
        if selector == "mu":
            selector = "beta:*"
        try:
            family, which = selector.split(":")
        except ValueError as err:
            raise ConfigError("SCHEMA", f"bad coefficient selector {selector!r}") from err
        if family not in ("alpha", "beta"):
            raise ConfigError("SCHEMA", f"bad coefficient selector {selector!r}")
        kind = "I" if family == "alpha" else "J"
        counter = 1 if kind == "I" else 0
        new_intervals = []
        hits = 0
        for iv in self.intervals:
            if iv.kind == kind:
                index = counter
                counter += 1
                chosen = which == "*" or (which.isdigit() and int(which) == index)
                if chosen and not iv.empty:
                    iv = replace(iv, coefficient=float(value))
                    hits += 1
            new_intervals.append(iv)
        if hits == 0:
            raise ConfigError("SCHEMA", f"selector {selector!r} matched no interval")
        raw = self.to_config_dict()
        if raw is not None:
            # keep the serializable form in sync for reports; when the config
            # omits the empty leading trough, raw trough indices start at 1
            j0 = 1 if raw["intervals"][0]["kind"] == "I" else 0
            counter = {"I": 1, "J": j0}
            for item in raw["intervals"]:
                k = item["kind"]
                idx = counter[k]
                counter[k] += 1
                if k == kind and (which == "*" or int(which) == idx):
                    item["coefficient"] = float(value)
        return replace(self, intervals=tuple(new_intervals), raw=raw)


# ---------------------------------------------------------------------------
# loading and validation

_TOP_KEYS = {"L", "bc", "intervals", "solver"}
_INTERVAL_KEYS = {"kind", "lo", "hi", "weight", "nonlinearity", "coefficient", "limits"}

_WEIGHT_SAMPLES = 257
_NONLIN_SAMPLES = (1e-6, 1e-4, 1e-2, 1e-1, 0.5, 1.0, 2.0, 10.0, 100.0, 1e3)


def _parse_interval(item: dict, index: int, space_var: str) -> IntervalSpec:
    if not isinstance(item, dict):
        raise ConfigError("SCHEMA", f"intervals[{index}] must be an object")
    unknown = set(item) - _INTERVAL_KEYS
    if unknown:
        raise ConfigError("SCHEMA", f"intervals[{index}]: unknown keys {sorted(unknown)}")
    missing = _INTERVAL_KEYS - set(item) - {"limits"}
    if missing:
        raise ConfigError("SCHEMA", f"intervals[{index}]: missing keys {sorted(missing)}")
    kind = item["kind"]
    if kind not in ("I", "J"):
        raise ConfigError("SCHEMA", f"intervals[{index}].kind must be 'I' or 'J'")
    lo = _number(item["lo"], f"intervals[{index}].lo")
    hi = _number(item["hi"], f"intervals[{index}].hi")
    try:
        weight = ex.parse(str(item["weight"]), space_var)
        nonlin = ex.parse(str(item["nonlinearity"]), "s")
    except ex.ParseError as err:
        raise ConfigError("SCHEMA", f"intervals[{index}]: {err}") from err
    coefficient = _number(item["coefficient"], f"intervals[{index}].coefficient")
    if coefficient <= 0:
        raise ConfigError("SCHEMA", f"intervals[{index}].coefficient must be positive")
    raw_limits = item.get("limits", {})
    if kind == "I":
        unknown = set(raw_limits) - {"g0", "ginf"}
        if unknown:
            raise ConfigError("SCHEMA", f"intervals[{index}].limits: unknown keys {sorted(unknown)}")
        limits = DeclaredLimits(
            g0=_limit_number(raw_limits.get("g0", 0.0), f"intervals[{index}].limits.g0"),
            ginf=_limit_number(raw_limits.get("ginf", "inf"), f"intervals[{index}].limits.ginf"),
        )
        if limits.ginf <= 0:
            raise ConfigError("SCHEMA", f"intervals[{index}].limits.ginf must be positive")
    else:
        unknown = set(raw_limits) - {"k0"}
        if unknown:
            raise ConfigError("SCHEMA", f"intervals[{index}].limits: unknown keys {sorted(unknown)}")
        limits = DeclaredLimits(k0=_limit_number(raw_limits.get("k0", 0.0), f"intervals[{index}].limits.k0"))
    return IntervalSpec(kind, lo, hi, weight, nonlin, coefficient, limits)


def _empty_trough(at: float, space_var: str) -> IntervalSpec:
    return IntervalSpec(
        kind="J",
        lo=at,
        hi=at,
        weight=ex.parse("0", space_var),
        nonlinearity=ex.parse("s", "s"),
        coefficient=1.0,
        limits=DeclaredLimits(k0=1.0),
    )


def _check_interval_functions(iv: IntervalSpec, index: int) -> None:
    if not iv.empty:
        vmax = 0.0
        for j in range(_WEIGHT_SAMPLES):
            x = iv.lo + (iv.hi - iv.lo) * j / (_WEIGHT_SAMPLES - 1)
            try:
                w = iv.weight(x)
            except ex.EvalDomainError as err:
                raise ConfigError("SCHEMA", f"intervals[{index}].weight: {err}") from err
            if w < -1e-12:
                raise ConfigError(
                    "NEGATIVE_WEIGHT",
                    f"intervals[{index}].weight is negative at x={x:.6g} (value {w:.3g})",
                )
            vmax = max(vmax, w)
        if vmax <= 0.0:
            raise ConfigError(
                "ZERO_WEIGHT", f"intervals[{index}].weight is identically zero on a non-empty interval"
            )
    try:
        g0 = iv.nonlinearity(0.0)
    except ex.EvalDomainError as err:
        raise ConfigError("SCHEMA", f"intervals[{index}].nonlinearity: {err}") from err
    if abs(g0) > 1e-12:
        raise ConfigError(
            "NONLINEARITY_SIGN", f"intervals[{index}].nonlinearity must vanish at s=0 (got {g0:.3g})"
        )
    for s in _NONLIN_SAMPLES:
        try:
            g = iv.nonlinearity(s)
        except ex.EvalDomainError as err:
            raise ConfigError("SCHEMA", f"intervals[{index}].nonlinearity: {err}") from err
        if g <= 0.0:
            raise ConfigError(
                "NONLINEARITY_SIGN",
                f"intervals[{index}].nonlinearity must be positive for s>0 (value {g:.3g} at s={s:g})",
            )


def _normalize_intervals(parsed, lo0: float, hi0: float, space_var: str):
    """Tile/alternation checks; synthesize the possibly-omitted end troughs."""
    if not parsed:
        raise ConfigError("SCHEMA", "intervals must be non-empty")
    ivs = sorted(parsed, key=lambda iv: (iv.lo, iv.hi))
    for iv in ivs:
        if iv.lo > iv.hi:
            raise ConfigError("SCHEMA", f"interval [{iv.lo:g},{iv.hi:g}] has lo > hi")
        if iv.kind == "I" and iv.empty:
            raise ConfigError("NON_ALTERNATING", "hump intervals must have positive length")
    if ivs[0].kind == "I":
        ivs.insert(0, _empty_trough(ivs[0].lo, space_var))
    if ivs[-1].kind == "I":
        ivs.append(_empty_trough(ivs[-1].hi, space_var))
    # tiling
    if ivs[0].lo != lo0:
        raise ConfigError("NON_TILING", f"first interval starts at {ivs[0].lo:g}, expected {lo0:g}")
    if ivs[-1].hi != hi0:
        raise ConfigError("NON_TILING", f"last interval ends at {ivs[-1].hi:g}, expected {hi0:g}")
    for a, b in zip(ivs, ivs[1:]):
        if a.hi != b.lo:
            raise ConfigError(
                "NON_TILING", f"gap or overlap between [{a.lo:g},{a.hi:g}] and [{b.lo:g},{b.hi:g}]"
            )
    # alternation J,I,J,...,I,J with only the end troughs possibly empty
    for pos, iv in enumerate(ivs):
        want = "J" if pos % 2 == 0 else "I"
        if iv.kind != want:
            raise ConfigError(
                "NON_ALTERNATING",
                f"interval kinds must alternate J,I,J,...,I,J (position {pos} is {iv.kind!r})",
            )
        if iv.kind == "J" and iv.empty and 0 < pos < len(ivs) - 1:
            raise ConfigError("NON_ALTERNATING", f"interior trough at position {pos} is empty")
    if len(ivs) % 2 == 0 or len(ivs) < 3:
        raise ConfigError("NON_ALTERNATING", "expected troughs and humps alternating J,I,...,I,J")
    for index, iv in enumerate(ivs):
        _check_interval_functions(iv, index)
    return tuple(ivs)


def _trough_junction_warnings(ivs) -> list[str]:
    """The multiplicity argument needs each trough weight active next to its
    junctions; integral == 0 there is legal but worth flagging."""
    notes = []
    for pos, iv in enumerate(ivs):
        if iv.kind != "J" or iv.empty:
            continue
        width = 0.05 * iv.width
        sides = []
        if pos > 0:
            sides.append(("left", iv.lo, iv.lo + width))
        if pos < len(ivs) - 1:
            sides.append(("right", iv.hi - width, iv.hi))
        for side, a, b in sides:
            total = 0.0
            for j in range(64):
                total += iv.weight((a + (b - a) * (j + 0.5) / 64))
            if total * (b - a) / 64 <= 0.0:
                notes.append(
                    f"trough [{iv.lo:g},{iv.hi:g}]: weight vanishes near its {side} junction; "
                    "the large-coefficient multiplicity bound needs it active there"
                )
    return notes


def load_dict(cfg: dict) -> Problem:
    if not isinstance(cfg, dict):
        raise ConfigError("SCHEMA", "config must be a JSON object")
    unknown = set(cfg) - _TOP_KEYS
    if unknown:
        hint = ""
        if {"N", "R1", "R2", "radial_bc"} & unknown:
            hint = " (annulus configs go through the radial pipeline)"
        raise ConfigError("SCHEMA", f"unknown top-level keys {sorted(unknown)}{hint}")
    missing = {"L", "bc", "intervals"} - set(cfg)
    if missing:
        raise ConfigError("SCHEMA", f"missing top-level keys {sorted(missing)}")
    L = _number(cfg["L"], "L")
    if L <= 0:
        raise ConfigError("SCHEMA", "L must be positive")
    raw_bc = cfg["bc"]
    if not isinstance(raw_bc, dict) or set(raw_bc) != {"alpha", "beta", "gamma", "delta"}:
        raise ConfigError("SCHEMA", "bc must have exactly the keys alpha, beta, gamma, delta")
    bc = BoundaryCoefficients(**{k: _number(v, f"bc.{k}") for k, v in raw_bc.items()})
    bc.validate(L)
    if not isinstance(cfg["intervals"], list):
        raise ConfigError("SCHEMA", "intervals must be a list")
    parsed = [_parse_interval(item, i, "x") for i, item in enumerate(cfg["intervals"])]
    ivs = _normalize_intervals(parsed, 0.0, L, "x")
    settings = SolverSettings.from_dict(cfg.get("solver", {}))
    warnings = tuple(_trough_junction_warnings(ivs))
    return Problem(L=L, bc=bc, intervals=ivs, settings=settings, warnings=warnings, raw=cfg)


def load(config_text: str) -> Problem:
    """Parse and validate a JSON config; see the module docstring for rules."""
    try:
        cfg = json.loads(config_text)
    except json.JSONDecodeError as err:
        raise ConfigError("SCHEMA", f"invalid JSON: {err}") from err
    return load_dict(cfg)


def f_of(p: Problem, x: float, s: float) -> float:
    """The forcing f(x, s) for s >= 0; left interval owns shared endpoints."""
    if not 0.0 <= x <= p.L:
        raise ValueError(f"x={x!r} outside [0, {p.L!r}]")
    if s < 0.0:
        raise ValueError(f"s={s!r} must be non-negative")
    return p.forcing(x, s)


def f_extended(p: Problem, x: float, s: float) -> float:
    """The zero extension: f(x, s) for s >= 0 and 0 for s <= 0."""
    if not 0.0 <= x <= p.L:
        raise ValueError(f"x={x!r} outside [0, {p.L!r}]")
    if s <= 0.0:
        return 0.0
    return p.forcing(x, s)
