"""Fixed points, periodic orbits and period-three certificates for maps of [0, 1].

The two-agent, two-bin games with symmetric starts reduce to scalar maps of
the form

    F(x) = x / (x + (1 - x) exp(slope * x - offset)),

which is what :func:`map_h` and :func:`map_g` evaluate.  Root finding is a
uniform grid scan followed by bisection, so iterated maps never need to be
differentiated.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .dynamics import _UPDATES, check_rates, normalize_variant
from .exceptions import AsymmetricGame, CollapsedOrbit, DegenerateMap, NoSignChange
from .game import CongestionGame, evaluate

GRID = 100_001
ROOT_FTOL = 1e-12
DEDUP_TOL = 1e-9
FD_STEP = 1e-7
RESIDUAL_TOL = 1e-10
SEPARATION_TOL = 1e-6


@dataclass(frozen=True)
class IntervalMap:
    """A continuous self-map of [lo, hi] with an optional closed-form derivative.

    ``fn`` must accept numpy arrays.  Without ``dfn`` the derivative is a
    central difference with step ``FD_STEP``.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    dfn: Callable[[np.ndarray], np.ndarray] | None = None
    lo: float = 0.0
    hi: float = 1.0
    name: str = ""

    def __call__(self, x):
        return self.fn(x)

    def derivative(self, x):
        if self.dfn is not None:
            return self.dfn(x)
        x = np.asarray(x, dtype=float)
        a = np.clip(x - FD_STEP, self.lo, self.hi)
        b = np.clip(x + FD_STEP, self.lo, self.hi)
        return (self.fn(b) - self.fn(a)) / (b - a)

    def check_invariant(self, n: int = 10_001, tol: float = 1e-12) -> bool:
        """Whether a grid of [lo, hi] is mapped into [lo, hi] (within tol)."""
        y = np.asarray(self.fn(np.linspace(self.lo, self.hi, n)))
        return bool(np.all(y >= self.lo - tol) and np.all(y <= self.hi + tol))


def _ratio_map(slope: float, offset: float, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1) or np.any(np.isnan(x)):
        raise ValueError("map argument outside [0, 1]")
    with np.errstate(over="ignore"):
        e = np.exp(slope * x - offset)
        out = x / (x + (1.0 - x) * e)
    out = np.where(np.isinf(e), np.where(x == 1.0, 1.0, 0.0), out)
    return out if out.ndim else float(out)


def _ratio_map_derivative(slope: float, offset: float, x):
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore", invalid="ignore"):
        e = np.exp(slope * x - offset)
        d = x + (1.0 - x) * e
        out = e * (1.0 - slope * x * (1.0 - x)) / (d * d)
    out = np.where(np.isfinite(out), out, 0.0)
    return out if out.ndim else float(out)


def ratio_map(slope: float, offset: float, name: str = "") -> IntervalMap:
    """F(x) = x / (x + (1 - x) exp(slope x - offset)) with its exact derivative."""
    return IntervalMap(
        lambda x: _ratio_map(slope, offset, x),
        lambda x: _ratio_map_derivative(slope, offset, x),
        name=name,
    )


def map_h(x):
    """The game1 reduction at eps = 1 - e^-10."""
    return _ratio_map(10.0, 5.0, x)


def map_g(x):
    """The game2 reduction at eps = 1 - e^-40."""
    return _ratio_map(24.0, 18.0, x)


H = ratio_map(10.0, 5.0, name="H")
G = ratio_map(24.0, 18.0, name="G")


def iterate(fmap: Callable, x, k: int):
    """F^k(x); k = 0 returns x unchanged."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    for _ in range(k):
        x = fmap(x)
    return x


def iterate_derivative(fmap: IntervalMap, x, k: int):
    """d/dx F^k(x) by the chain rule."""
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    for _ in range(k):
        out = out * fmap.derivative(x)
        x = fmap(x)
    return out


# -- certificates -------------------------------------------------------------


@dataclass(frozen=True)
class OrbitCertificate:
    """A numerically certified fixed point, periodic orbit, or Li-Yorke point.

    Attributes:
        kind: ``"fixed"``, ``"periodic-<k>"`` or ``"li-yorke"``.
        points: The orbit, starting from the root that was found.  Scalars
            for interval maps, tuples for flattened mixed profiles.
        residual: max |F^k(z) - z| over the orbit.
        separation: Smallest pairwise distance between orbit points
            (``inf`` for a single point).
        brackets: Intervals that bisection started from.
    """

    kind: str
    points: tuple
    residual: float
    separation: float
    brackets: tuple[tuple[float, float], ...] = ()

    @property
    def period(self) -> int:
        if self.kind == "fixed":
            return 1
        if self.kind.startswith("periodic-"):
            return int(self.kind.split("-")[1])
        return len(self.points)

    @property
    def valid(self) -> bool:
        ok = self.residual <= RESIDUAL_TOL
        if self.period > 1:
            ok = ok and self.separation > SEPARATION_TOL
        return ok

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "points": [list(p) if isinstance(p, tuple) else p for p in self.points],
            "residual": self.residual,
            "separation": None if math.isinf(self.separation) else self.separation,
            "brackets": [list(b) for b in self.brackets],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


def _orbit(fmap: Callable, z, k: int) -> list:
    pts = [z]
    for _ in range(k - 1):
        pts.append(fmap(pts[-1]))
    return [float(p) if np.ndim(p) == 0 else np.asarray(p, dtype=float) for p in pts]


def _gap(a, b) -> float:
    return float(np.max(np.abs(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))))


def _separation(points: Sequence) -> float:
    """Smallest pairwise sup-norm distance; points may be scalars or vectors."""
    if len(points) < 2:
        return math.inf
    arr = [np.atleast_1d(np.asarray(p, dtype=float)) for p in points]
    return min(float(np.max(np.abs(a - b))) for i, a in enumerate(arr) for b in arr[i + 1 :])


def make_certificate(
    fmap: Callable, z: float, period: int, brackets: Sequence[tuple[float, float]] = (), kind: str | None = None
) -> OrbitCertificate:
    pts = _orbit(fmap, z, period)
    residual = max(_gap(iterate(fmap, p, period), p) for p in pts)
    if kind is None:
        kind = "fixed" if period == 1 else f"periodic-{period}"
    return OrbitCertificate(kind, tuple(pts), residual, _separation(pts), tuple(brackets))


# -- root finding ---------------------------------------------------------------


def bisect(f: Callable[[float], float], a: float, b: float, ftol: float = ROOT_FTOL) -> float:
    """Root of f in [a, b] with f(a), f(b) of opposite signs.

    Stops once |f(mid)| <= ftol or the bracket cannot be split further.
    """
    fa, fb = f(a), f(b)
    if fa == 0:
        return a
    if fb == 0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise NoSignChange(f"f({a}) = {fa} and f({b}) = {fb} have the same sign")
    best, best_val = (a, abs(fa)) if abs(fa) < abs(fb) else (b, abs(fb))
    for _ in range(200):
        m = 0.5 * (a + b)
        if m <= a or m >= b:
            break
        fm = f(m)
        if abs(fm) < best_val:
            best, best_val = m, abs(fm)
        if fm == 0 or abs(fm) <= ftol and (b - a) < 1e-9:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b = m
    return best


def _scan_roots(phi: Callable, lo: float, hi: float, grid: int, ftol: float):
    xs = np.linspace(lo, hi, grid)
    vals = np.asarray(phi(xs), dtype=float)
    zero = np.abs(vals) <= ftol
    if zero.mean() > 0.5:
        raise DegenerateMap("F^k(x) - x vanishes on more than half of the grid")
    roots: list[tuple[float, tuple[float, float]]] = []
    for idx in np.nonzero(zero)[0]:
        roots.append((float(xs[idx]), (float(xs[idx]), float(xs[idx]))))
    s = np.sign(vals)
    change = np.nonzero((s[:-1] * s[1:] < 0))[0]
    scalar = lambda x: float(phi(np.asarray(x)))  # noqa: E731
    for idx in change:
        a, b = float(xs[idx]), float(xs[idx + 1])
        roots.append((bisect(scalar, a, b, ftol), (a, b)))
    roots.sort()
    merged: list[tuple[float, tuple[float, float]]] = []
    for z, br in roots:
        if merged and abs(z - merged[-1][0]) <= DEDUP_TOL:
            continue
        merged.append((z, br))
    return merged


def _divisors(k: int) -> list[int]:
    return [d for d in range(1, k) if k % d == 0]


def find_fixed_points(
    fmap: Callable, k: int = 1, grid: int = GRID, lo: float = 0.0, hi: float = 1.0
) -> list[OrbitCertificate]:
    """All roots of F^k(x) - x found by a grid scan, each with its true period.

    A root counts as period k only if no root of F^d(x) - x, for a proper
    divisor d of k, lies within ``DEDUP_TOL``; otherwise it is certified at the
    smallest such d.

    Raises:
        DegenerateMap: F^k(x) - x is numerically zero on most of the grid.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    roots = {
        d: _scan_roots(lambda x, d=d: iterate(fmap, x, d) - x, lo, hi, grid, ROOT_FTOL)
        for d in _divisors(k) + [k]
    }
    out = []
    for z, br in roots[k]:
        period = k
        for d in _divisors(k):
            if any(abs(z - r) <= DEDUP_TOL for r, _ in roots[d]):
                period = d
                break
        out.append(make_certificate(fmap, z, period, [br]))
    return out


def periodic_orbits(fmap: Callable, k: int, grid: int = GRID) -> list[OrbitCertificate]:
    """Roots of F^k - x whose true period is exactly k."""
    return [c for c in find_fixed_points(fmap, k, grid) if c.period == k]


def derivative_sign_intervals(
    fmap: IntervalMap, k: int = 1, grid: int = GRID, xtol: float = 1e-10
) -> list[tuple[tuple[float, float], int]]:
    """Partition [lo, hi] into maximal intervals where (F^k)' keeps one sign."""
    if k not in (1, 2):
        raise ValueError("k must be 1 or 2")
    xs = np.linspace(fmap.lo, fmap.hi, grid)
    s = np.sign(iterate_derivative(fmap, xs, k))
    # Isolated zeros on the grid take the sign of their right neighbour.
    for idx in range(len(s) - 2, -1, -1):
        if s[idx] == 0:
            s[idx] = s[idx + 1]
    breaks = []
    for idx in np.nonzero(s[:-1] * s[1:] < 0)[0]:
        a, b = float(xs[idx]), float(xs[idx + 1])
        sa = s[idx]
        while b - a > xtol:
            m = 0.5 * (a + b)
            sm = np.sign(float(iterate_derivative(fmap, np.asarray(m), k)))
            if sm == sa:
                a = m
            else:
                b = m
        breaks.append(0.5 * (a + b))
    edges = [fmap.lo, *breaks, fmap.hi]
    signs = [int(s[0])] + [int(s[idx + 1]) for idx in np.nonzero(s[:-1] * s[1:] < 0)[0]]
    return [((edges[j], edges[j + 1]), signs[j]) for j in range(len(signs))]


def find_period3(fmap: Callable, bracket_lo: float, bracket_hi: float) -> OrbitCertificate:
    """Certify a period-three orbit from a bracket where F^3(x) - x changes sign.

    Raises:
        NoSignChange: the bracket does not straddle a root.
        CollapsedOrbit: the root is really a fixed point or period-two point.
    """
    phi = lambda x: float(iterate(fmap, x, 3)) - x  # noqa: E731
    fa, fb = phi(bracket_lo), phi(bracket_hi)
    if not np.sign(fa) * np.sign(fb) < 0:
        raise NoSignChange(f"F^3(x) - x is {fa} at {bracket_lo} and {fb} at {bracket_hi}")
    y = bisect(phi, bracket_lo, bracket_hi)
    cert = make_certificate(fmap, y, 3, [(bracket_lo, bracket_hi)])
    if cert.separation <= SEPARATION_TOL:
        raise CollapsedOrbit(f"orbit points {cert.points} are not distinct")
    return cert


@dataclass(frozen=True)
class LiYorkeReport:
    a: float
    b: float
    c: float
    d: float
    holds: bool
    orientation: str

    def to_dict(self) -> dict:
        return {
            "a": self.a, "b": self.b, "c": self.c, "d": self.d,
            "holds": self.holds, "orientation": self.orientation,
            "d_minus_a": self.d - self.a,
        }


def li_yorke_certificate(fmap: Callable, a: float, tol: float = RESIDUAL_TOL) -> LiYorkeReport:
    """Check d <= a < b < c or d >= a > b > c for b, c, d = F(a), F^2(a), F^3(a).

    ``tol`` relaxes only the non-strict comparison with d, which a
    period-three point meets with equality.
    """
    b = float(fmap(a))
    c = float(fmap(b))
    d = float(fmap(c))
    if d <= a + tol and a < b < c:
        return LiYorkeReport(a, b, c, d, True, "increasing")
    if d >= a - tol and a > b > c:
        return LiYorkeReport(a, b, c, d, True, "decreasing")
    return LiYorkeReport(a, b, c, d, False, "none")


def li_yorke_from_orbit(fmap: Callable, cert: OrbitCertificate) -> tuple[float, LiYorkeReport]:
    """The orbit point at which the Li-Yorke chain holds, if any (first one tried otherwise)."""
    reports = [(p, li_yorke_certificate(fmap, p)) for p in cert.points]
    for p, rep in reports:
        if rep.holds:
            return p, rep
    return reports[0]


def scrambled_pair_evidence(fmap: Callable, x: float, y: float, horizon: int) -> tuple[float, float]:
    """min and max of |F^n(x) - F^n(y)| for n = 0..horizon.

    Finite-horizon evidence only; it cannot prove a pair is scrambled.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    lo = hi = abs(x - y)
    for _ in range(horizon):
        x, y = float(fmap(x)), float(fmap(y))
        gap = abs(x - y)
        lo, hi = min(lo, gap), max(hi, gap)
    return lo, hi


def gap_series(fmap: Callable, x: float, y: float, horizon: int) -> np.ndarray:
    out = np.empty(horizon + 1)
    out[0] = abs(x - y)
    for n in range(1, horizon + 1):
        x, y = float(fmap(x)), float(fmap(y))
        out[n] = abs(x - y)
    return out


# -- reductions of symmetric games -------------------------------------------


def symmetric_reduction(game: CongestionGame, rates, variant: str = "exp") -> IntervalMap:
    """The scalar map x -> x' obtained by running both agents from (x, 1 - x).

    Raises:
        AsymmetricGame: not two agents with the same two strategies and rate.
    """
    variant = normalize_variant(variant)
    if not game.is_symmetric_pair() or game.n_strategies != (2, 2):
        raise AsymmetricGame("need two agents sharing the same two strategies")
    rates = check_rates(game, rates, variant)
    if rates.eps[0] != rates.eps[1] or rates.decay[0] != rates.decay[1]:
        raise AsymmetricGame("both agents must use the same learning rate")
    update = _UPDATES[variant]

    def one(x: float) -> float:
        if x <= 0.0 or x >= 1.0:
            return float(x)
        blocks = [np.array([x, 1.0 - x])] * 2
        costs, _ = evaluate(game, blocks)
        return float(update(blocks, costs, rates)[0][0])

    def fn(x):
        x = np.asarray(x, dtype=float)
        if np.any(x < 0) or np.any(x > 1):
            raise ValueError("map argument outside [0, 1]")
        if x.ndim == 0:
            return one(float(x))
        return np.array([one(float(v)) for v in x.ravel()]).reshape(x.shape)

    return IntervalMap(fn, name=f"{game.name or 'game'}:{variant}")


# -- constants of H -------------------------------------------------------------


@dataclass(frozen=True)
class HConstants:
    """Landmarks of H: critical points x0 < x1, their preimages y0, y1, and the 2-cycle."""

    x0: float
    x1: float
    y0: float
    y1: float
    rho1: float
    rho2: float

    def ordered(self) -> bool:
        return (
            0 < self.y0 < self.x0 < 0.5 < self.x1 < self.y1 < 1
            and self.x0 < self.rho1 < 0.25
            and 0.75 < self.rho2 < self.x1
        )

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("x0", "x1", "y0", "y1", "rho1", "rho2")}


def h_constants() -> HConstants:
    x0 = (5 - math.sqrt(15)) / 10
    x1 = (5 + math.sqrt(15)) / 10
    y0 = bisect(lambda y: map_h(y) - x0, 0.0, x0)
    y1 = bisect(lambda y: map_h(y) - x1, x1, 1.0)
    rho1 = bisect(lambda x: map_h(map_h(x)) - x, x0, 0.25)
    return HConstants(x0, x1, y0, y1, rho1, 1.0 - rho1)


# -- tables ---------------------------------------------------------------------


def iterate_table(fmap: Callable, ks: Sequence[int] = (1, 2, 3, 10), n: int = 1001) -> str:
    """CSV with columns x, F^k(x) for each k, on a uniform grid of [0, 1]."""
    xs = np.linspace(0.0, 1.0, n)
    cols = [np.asarray(iterate(fmap, xs, k)) for k in ks]
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", *(f"F{k}" for k in ks)])
    for row in zip(xs, *cols):
        w.writerow([repr(float(v)) for v in row])
    return buf.getvalue()
