"""Shared numerical kernels.

* ``integrate``: an embedded Dormand-Prince 5(4) pair with proportional-
  integral step control, dense output by the pair's quartic interpolant,
  blow-up detection, and steps that never straddle a breakpoint (the
  right-hand sides here are non-smooth at interval junctions).
* ``quad``: adaptive Simpson with Richardson error estimation, panels split
  at breakpoints.
* ``scan_brackets`` / ``refine_root``: uniform sign-change scan and a
  Brent-style bisection/secant hybrid.

Everything is pure given its inputs; concurrent invocations share nothing.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass
from enum import Enum

__all__ = [
    "Status",
    "Trajectory",
    "Bracket",
    "BracketLost",
    "integrate",
    "quad",
    "scan_brackets",
    "refine_root",
]


class Status(Enum):
    COMPLETED = "COMPLETED"
    BLEW_UP = "BLEW_UP"
    WENT_NEGATIVE = "WENT_NEGATIVE"


class BracketLost(RuntimeError):
    """refine_root met an invalid function value inside the bracket."""


# Dormand-Prince 5(4) tableau
_C2, _C3, _C4, _C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
_A21 = 1 / 5
_A31, _A32 = 3 / 40, 9 / 40
_A41, _A42, _A43 = 44 / 45, -56 / 15, 32 / 9
_A51, _A52, _A53, _A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
_A61, _A62, _A63, _A64, _A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
_B1, _B3, _B4, _B5, _B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71 / 57600,
    -71 / 16695,
    71 / 1920,
    -17253 / 339200,
    22 / 525,
    -1 / 40,
)
# quartic dense-output polynomials (theta, theta^2, theta^3, theta^4 columns)
_D = (
    (1.0, -183 / 64, 37 / 12, -145 / 128),
    (0.0, 0.0, 0.0, 0.0),
    (0.0, 1500 / 371, -1000 / 159, 1000 / 371),
    (0.0, -125 / 32, 125 / 12, -375 / 64),
    (0.0, 9477 / 3392, -729 / 106, 25515 / 6784),
    (0.0, -11 / 7, 11 / 3, -55 / 28),
    (0.0, 3 / 2, -4.0, 5 / 2),
)

_SAFETY = 0.9
_MIN_FACTOR = 0.2
_MAX_FACTOR = 10.0
_MAX_STEPS = 500_000


@dataclass
class _Step:
    x0: float
    h: float
    y0: tuple
    k: tuple  # 7 stage-derivative tuples


class _SystemPath:
    """Dense solution of a first-order system on [x0, x_end]."""

    def __init__(self, n: int):
        self.n = n
        self.xs: list[float] = []
        self.ys: list[tuple] = []
        self.steps: list[_Step] = []
        self.status = Status.COMPLETED
        self.underflow = False

    @property
    def x_end(self) -> float:
        return self.xs[-1]

    @property
    def y_end(self) -> tuple:
        return self.ys[-1]

    def eval(self, x: float) -> tuple:
        if not self.steps:
            return self.ys[0]
        if x <= self.xs[0]:
            return self.ys[0]
        if x >= self.xs[-1]:
            return self.ys[-1]
        i = bisect_right(self.xs, x) - 1
        step = self.steps[i]
        t = (x - step.x0) / step.h
        t2 = t * t
        t3 = t2 * t
        t4 = t3 * t
        ws = [c1 * t + c2 * t2 + c3 * t3 + c4 * t4 for (c1, c2, c3, c4) in _D]
        out = []
        for comp in range(self.n):
            acc = step.y0[comp]
            h = step.h
            k = step.k
            acc += h * (
                ws[0] * k[0][comp]
                + ws[2] * k[2][comp]
                + ws[3] * k[3][comp]
                + ws[4] * k[4][comp]
                + ws[5] * k[5][comp]
                + ws[6] * k[6][comp]
            )
            out.append(acc)
        return tuple(out)


def _integrate_system(
    fun,
    x0: float,
    x_end: float,
    y0,
    *,
    breakpoints=(),
    atol: float = 1e-10,
    rtol: float = 1e-8,
    blow_cap: float = 1e8,
    local_factory=None,
) -> _SystemPath:
    """Integrate y' = fun(x, y) (vector form).

    ``local_factory(a, b)``, when given, supplies the right-hand side for the
    segment (a, b); this is how piecewise-defined fields get one-sided values
    at junctions.  Requested breakpoints appear among the nodes bit-exactly.
    """
    span = x_end - x0
    if span <= 0:
        raise ValueError("x_end must exceed x0")
    stops = sorted({float(b) for b in breakpoints if x0 < b < x_end})
    stops.append(x_end)

    n = len(y0)
    path = _SystemPath(n)
    x = x0
    y = tuple(float(v) for v in y0)
    path.xs.append(x)
    path.ys.append(y)

    seg_lo = x0
    stop_i = 0
    next_stop = stops[0]
    f = local_factory(seg_lo, next_stop) if local_factory is not None else fun
    k1 = f(x, y)
    h = min(span / 100.0, next_stop - x)
    err_prev = 1.0
    h_min_floor = 1e-14 * max(1.0, abs(span))

    for _ in range(_MAX_STEPS):
        hit = x + h >= next_stop - 1e-13 * span
        h_exec = (next_stop - x) if hit else h

        if h_exec < h_min_floor:
            path.status = Status.BLEW_UP
            path.underflow = True
            return path

        # seven stages
        k2 = f(x + _C2 * h_exec, tuple(y[i] + h_exec * _A21 * k1[i] for i in range(n)))
        k3 = f(
            x + _C3 * h_exec,
            tuple(y[i] + h_exec * (_A31 * k1[i] + _A32 * k2[i]) for i in range(n)),
        )
        k4 = f(
            x + _C4 * h_exec,
            tuple(y[i] + h_exec * (_A41 * k1[i] + _A42 * k2[i] + _A43 * k3[i]) for i in range(n)),
        )
        k5 = f(
            x + _C5 * h_exec,
            tuple(
                y[i] + h_exec * (_A51 * k1[i] + _A52 * k2[i] + _A53 * k3[i] + _A54 * k4[i])
                for i in range(n)
            ),
        )
        k6 = f(
            x + h_exec,
            tuple(
                y[i]
                + h_exec * (_A61 * k1[i] + _A62 * k2[i] + _A63 * k3[i] + _A64 * k4[i] + _A65 * k5[i])
                for i in range(n)
            ),
        )
        x_new = next_stop if hit else x + h_exec
        y_new = tuple(
            y[i] + h_exec * (_B1 * k1[i] + _B3 * k3[i] + _B4 * k4[i] + _B5 * k5[i] + _B6 * k6[i])
            for i in range(n)
        )
        k7 = f(x_new, y_new)

        # embedded error estimate, mixed absolute/relative norm
        err = 0.0
        finite = True
        for i in range(n):
            e = h_exec * (
                _E1 * k1[i] + _E3 * k3[i] + _E4 * k4[i] + _E5 * k5[i] + _E6 * k6[i] + _E7 * k7[i]
            )
            if not math.isfinite(e) or not math.isfinite(y_new[i]):
                finite = False
                break
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            err += (e / sc) ** 2
        err = math.sqrt(err / n) if finite else math.inf

        if err <= 1.0:
            path.steps.append(_Step(x, h_exec, y, (k1, k2, k3, k4, k5, k6, k7)))
            path.xs.append(x_new)
            path.ys.append(y_new)
            x, y, k1 = x_new, y_new, k7
            if any(abs(v) > blow_cap for v in y):
                path.status = Status.BLEW_UP
                return path
            safe_err = max(err, 1e-10)
            factor = _SAFETY * safe_err ** -0.14 * err_prev ** 0.08
            factor = min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
            err_prev = safe_err
            if hit:
                stop_i += 1
                if stop_i == len(stops):
                    return path
                seg_lo = next_stop
                next_stop = stops[stop_i]
                if local_factory is not None:
                    f = local_factory(seg_lo, next_stop)
                k1 = f(x, y)  # re-evaluate: piecewise fields change across a stop
                h = max(h, h_exec * factor)
            else:
                h = h_exec * factor
            h = min(h, next_stop - x)
        else:
            if math.isinf(err):
                factor = _MIN_FACTOR
            else:
                factor = max(0.1, _SAFETY * err ** -0.2)
            h = h_exec * factor

    raise RuntimeError("integrator exceeded the step budget")


class Trajectory:
    """A dense (u, u') solution of a second-order IVP.

    ``status`` is COMPLETED when the trajectory reached the end of its span
    with u >= 0 throughout, WENT_NEGATIVE when it reached the end after
    dipping below zero (``x_neg`` marks the first crossing, ``neg_depth``
    the deepest excursion), and BLEW_UP when |u| or |u'| exceeded the cap
    at ``x_blow`` (``underflow`` flags a step-size collapse).  Interval
    junction breakpoints appear among the nodes bit-exactly.
    """

    def __init__(self, path: _SystemPath, scale: float = 1.0):
        self._path = path
        self._scale = scale
        self.status = path.status
        self.underflow = path.underflow
        self.x_blow = path.x_end if path.status is Status.BLEW_UP else None
        self.x_neg = None
        self.neg_depth = 0.0
        if path.status is not Status.BLEW_UP:
            self._detect_negativity()

    def _detect_negativity(self):
        first_x = None
        depth = 0.0
        prev_x, prev_u = None, None
        for x, y in zip(self._path.xs, self._path.ys):
            u = y[0] * self._scale
            if u < 0.0:
                if first_x is None:
                    if prev_u is not None and prev_u > 0.0:
                        # linear estimate of the crossing inside the step
                        first_x = prev_x + (x - prev_x) * prev_u / (prev_u - u)
                    else:
                        first_x = x
                depth = max(depth, -u)
            prev_x, prev_u = x, u
        if first_x is not None:
            self.status = Status.WENT_NEGATIVE
            self.x_neg = first_x
            self.neg_depth = depth

    # -- accessors ---------------------------------------------------------

    @property
    def x0(self) -> float:
        return self._path.xs[0]

    @property
    def x_end(self) -> float:
        return self._path.x_end

    @property
    def nodes(self):
        s = self._scale
        return [(x, y[0] * s, y[1] * s) for x, y in zip(self._path.xs, self._path.ys)]

    @property
    def reached_end(self) -> bool:
        return self.status in (Status.COMPLETED, Status.WENT_NEGATIVE)

    def eval(self, x: float) -> tuple[float, float]:
        u, up = self._path.eval(x)[:2]
        return u * self._scale, up * self._scale

    def u(self, x: float) -> float:
        return self.eval(x)[0]

    def up(self, x: float) -> float:
        return self.eval(x)[1]

    @property
    def u_end(self) -> float:
        return self._path.y_end[0] * self._scale

    @property
    def up_end(self) -> float:
        return self._path.y_end[1] * self._scale

    def rescaled(self, factor: float) -> "Trajectory":
        return Trajectory(self._path, self._scale * factor)

    # -- dense extrema -----------------------------------------------------

    def _samples_on(self, a: float, b: float, n: int):
        xs = [a + (b - a) * i / n for i in range(n + 1)]
        xs.extend(x for x in self._path.xs if a < x < b)
        xs.sort()
        return xs

    def _refine_extremum(self, lo: float, hi: float, want_max: bool, iters: int = 40):
        # golden-section polish of a sampled extremum
        inv = (math.sqrt(5) - 1) / 2
        a, b = lo, hi
        c = b - inv * (b - a)
        d = a + inv * (b - a)
        fc, fd = self.u(c), self.u(d)
        for _ in range(iters):
            if (fc > fd) == want_max:
                b, d, fd = d, c, fc
                c = b - inv * (b - a)
                fc = self.u(c)
            else:
                a, c, fc = c, d, fd
                d = a + inv * (b - a)
                fd = self.u(d)
            if b - a < 1e-13 * max(1.0, abs(b)):
                break
        x = 0.5 * (a + b)
        return self.u(x)

    def max_on(self, a: float, b: float, n: int = 64) -> float:
        """max of u over [a, b] from dense output (>= n samples plus nodes),
        polished so classification does not depend on the sampling grid."""
        xs = self._samples_on(a, b, n)
        vals = [self.u(x) for x in xs]
        best = max(range(len(xs)), key=lambda i: vals[i])
        lo = xs[max(0, best - 1)]
        hi = xs[min(len(xs) - 1, best + 1)]
        if hi > lo:
            return max(vals[best], self._refine_extremum(lo, hi, want_max=True))
        return vals[best]

    def min_on(self, a: float, b: float, n: int = 64) -> float:
        xs = self._samples_on(a, b, n)
        vals = [self.u(x) for x in xs]
        best = min(range(len(xs)), key=lambda i: vals[i])
        lo = xs[max(0, best - 1)]
        hi = xs[min(len(xs) - 1, best + 1)]
        if hi > lo:
            return min(vals[best], self._refine_extremum(lo, hi, want_max=False))
        return vals[best]

    def sup_norm(self) -> float:
        return max(abs(self.max_on(self.x0, self.x_end, 256)), abs(self.min_on(self.x0, self.x_end, 256)))


def integrate(
    field,
    y0,
    x_end: float,
    *,
    x0: float = 0.0,
    breakpoints=(),
    tol: tuple[float, float] = (1e-10, 1e-8),
    blow_cap: float = 1e8,
) -> Trajectory:
    """Integrate u'' = field(x, u, u') from (u, u')(x0) = y0 up to x_end.

    ``field`` is a callable; if it has a ``local(a, b)`` method the
    integrator resolves it once per breakpoint segment so that values at
    junctions are one-sided.
    """
    atol, rtol = tol

    if hasattr(field, "local"):
        def factory(a, b):
            f_loc = field.local(a, b)

            def rhs(x, y):
                return (y[1], f_loc(x, y[0], y[1]))

            return rhs

        path = _integrate_system(
            None,
            x0,
            x_end,
            y0,
            breakpoints=breakpoints,
            atol=atol,
            rtol=rtol,
            blow_cap=blow_cap,
            local_factory=factory,
        )
    else:
        def rhs(x, y):
            return (y[1], field(x, y[0], y[1]))

        path = _integrate_system(
            rhs,
            x0,
            x_end,
            y0,
            breakpoints=breakpoints,
            atol=atol,
            rtol=rtol,
            blow_cap=blow_cap,
        )
    return Trajectory(path)


# ---------------------------------------------------------------------------
# quadrature


def _simpson(f, a, fa, m, fm, b, fb):
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb)


def _adaptive(f, a, fa, m, fm, b, fb, whole, tol, depth):
    lm = 0.5 * (a + m)
    rm = 0.5 * (m + b)
    flm = f(lm)
    frm = f(rm)
    if not (math.isfinite(flm) and math.isfinite(frm)):
        raise ValueError(f"non-finite integrand sample at {lm!r} or {rm!r}")
    left = _simpson(f, a, fa, lm, flm, m, fm)
    right = _simpson(f, m, fm, rm, frm, b, fb)
    delta = left + right - whole
    if depth <= 0 or abs(delta) <= 15.0 * tol:
        return left + right + delta / 15.0  # Richardson extrapolation
    return _adaptive(f, a, fa, lm, flm, m, fm, left, tol / 2.0, depth - 1) + _adaptive(
        f, m, fm, rm, frm, b, fb, right, tol / 2.0, depth - 1
    )


def quad(f, a: float, b: float, *, tol: float = 1e-10, breakpoints=()) -> float:
    """Adaptive Simpson integral of f over [a, b] split at breakpoints.

    Panel endpoint samples are nudged one ulp-scale inward so integrands with
    one-sided values at junctions are integrated with the correct side.
    """
    if a > b:
        raise ValueError("quad requires a <= b")
    if a == b:
        return 0.0
    edges = [a] + sorted({float(p) for p in breakpoints if a < p < b}) + [b]
    total = 0.0
    for lo, hi in zip(edges, edges[1:]):
        width = hi - lo
        nudge = 1e-12 * width
        flo = f(lo + nudge)
        fhi = f(hi - nudge)
        mid = 0.5 * (lo + hi)
        fmid = f(mid)
        if not (math.isfinite(flo) and math.isfinite(fmid) and math.isfinite(fhi)):
            raise ValueError("non-finite integrand sample")
        whole = _simpson(f, lo, flo, mid, fmid, hi, fhi)
        total += _adaptive(f, lo, flo, mid, fmid, hi, fhi, whole, tol * width / (b - a), 48)
    return total


# ---------------------------------------------------------------------------
# root machinery


@dataclass(frozen=True)
class Bracket:
    lo: float
    hi: float
    f_lo: float
    f_hi: float


def _sign(v: float) -> int:
    if v > 0:
        return 1
    if v < 0:
        return -1
    return 0


def scan_brackets(f, lo: float, hi: float, n: int):
    """Evaluate f on n uniform points and return adjacent sign-change pairs.

    Values of +-inf are signed and participate in bracketing; None or NaN
    marks an invalid point and breaks adjacency.  A sample hitting zero
    exactly yields a degenerate bracket.
    """
    if n < 2:
        raise ValueError("scan needs at least two points")
    xs = [lo + (hi - lo) * i / (n - 1) for i in range(n)]
    out = []
    prev_x = None
    prev_v = None
    for x in xs:
        v = f(x)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            prev_x, prev_v = None, None
            continue
        if v == 0.0:
            out.append(Bracket(x, x, 0.0, 0.0))
            prev_x, prev_v = x, v
            continue
        if prev_v is not None and _sign(prev_v) * _sign(v) < 0:
            out.append(Bracket(prev_x, x, prev_v, v))
        prev_x, prev_v = x, v
    return out


def refine_root(f, bracket: Bracket, tol: float, *, ftol: float | None = None, max_iter: int = 200) -> float:
    """Brent-style root refinement inside a sign-change bracket.

    Stops when the bracket width is below tol and |f| is below ftol (when
    given), or at float resolution.  Infinite endpoint values fall back to
    bisection; an invalid (None/NaN) interior value raises BracketLost.
    """
    a, b = bracket.lo, bracket.hi
    fa, fb = bracket.f_lo, bracket.f_hi
    if a == b:
        return a

    def call(x):
        v = f(x)
        if v is None or (isinstance(v, float) and math.isnan(v)):
            raise BracketLost(f"invalid value inside bracket at {x!r}")
        return v

    if _sign(fa) * _sign(fb) > 0:
        raise ValueError("not a sign-change bracket")

    # shrink by bisection until both endpoint values are finite
    while not (math.isfinite(fa) and math.isfinite(fb)):
        m = 0.5 * (a + b)
        if m == a or m == b:
            return a if abs(fa) <= abs(fb) else b
        fm = call(m)
        if fm == 0.0:
            return m
        if _sign(fa) * _sign(fm) < 0:
            b, fb = m, fm
        else:
            a, fa = m, fm

    c, fc = a, fa
    d = e = b - a
    for _ in range(max_iter):
        if abs(fc) < abs(fb):
            a, b, c = b, c, b
            fa, fb, fc = fb, fc, fb
        eps2 = 2.0 * 2.220446049250313e-16 * abs(b)
        m = 0.5 * (c - b)
        width_ok = abs(m) <= max(0.5 * tol, eps2)
        f_ok = ftol is None or abs(fb) <= ftol
        if fb == 0.0 or (width_ok and f_ok) or abs(m) <= eps2:
            break
        if abs(e) < eps2 or abs(fa) <= abs(fb) or not math.isfinite(fa):
            d = e = m
        else:
            s = fb / fa
            if a == c:
                p = 2.0 * m * s
                q = 1.0 - s
            else:
                q = fa / fc
                r = fb / fc
                p = s * (2.0 * m * q * (q - r) - (b - a) * (r - 1.0))
                q = (q - 1.0) * (r - 1.0) * (s - 1.0)
            if p > 0:
                q = -q
            else:
                p = -p
            s2 = e
            e = d
            if 2.0 * p < 3.0 * m * q - abs(max(0.5 * tol, eps2) * q) and p < abs(0.5 * s2 * q):
                d = p / q
            else:
                d = e = m
        a, fa = b, fb
        if abs(d) > max(0.5 * tol, eps2):
            b += d
        elif m > 0:
            b += max(0.5 * tol, eps2)
        else:
            b -= max(0.5 * tol, eps2)
        fb = call(b)
        if _sign(fb) * _sign(fc) > 0:
            c, fc = a, fa
            d = e = b - a
    return b if abs(fb) <= abs(fc) else c
