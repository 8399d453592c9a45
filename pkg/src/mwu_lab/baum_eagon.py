"""Polynomials on a product of simplices and the Baum-Eagon growth map.

The growth map sends x to the point whose (i, j) coordinate is
``x_ij dP/dx_ij`` normalised within block i.  For a polynomial with
nonnegative coefficients it strictly increases P unless x is fixed.  The
polynomial does not need to be homogeneous: padding each monomial with a
dummy variable pinned at one leaves the map unchanged, so no such variable is
stored here.

:func:`build_q` writes the MWU_l potential as such a polynomial, which makes
one Baum-Eagon step on it the same thing as one MWU_l step.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .dynamics import LearningRates, check_rates
from .exceptions import DegenerateDenominator, NegativeCoefficient, PolynomialTooLarge
from .game import CongestionGame, MixedProfile, expected_potential, expected_strategy_costs

#: Coefficients in [-COEF_TOL, 0) are rounding noise and are dropped.
COEF_TOL = 1e-12
MAX_MONOMIALS = 10**6

Variable = int | tuple[int, int]


class SimplexPolynomial:
    """Sparse polynomial with nonnegative coefficients over blocks of simplex variables.

    Args:
        blocks: Number of variables in each block.
        terms: Pairs ``(coefficient, exponents)`` where ``exponents`` maps a
            variable (flat index or ``(block, j)``) to its power.  Duplicate
            exponent patterns are merged and zero coefficients dropped.
    """

    def __init__(
        self,
        blocks: Sequence[int],
        terms: Iterable[tuple[float, Mapping[Variable, int]]],
        tol: float = 0.0,
    ) -> None:
        self.blocks = tuple(int(b) for b in blocks)
        if any(b < 1 for b in self.blocks):
            raise ValueError("every block needs at least one variable")
        self._offsets = np.concatenate([[0], np.cumsum(self.blocks)])
        merged: dict[tuple[tuple[int, int], ...], float] = {}
        for coef, exps in terms:
            key = tuple(sorted((self.var_index(v), int(a)) for v, a in exps.items() if a))
            if any(a < 0 for _, a in key):
                raise ValueError("exponents must be nonnegative")
            merged[key] = merged.get(key, 0.0) + float(coef)
        for key, coef in merged.items():
            if not math.isfinite(coef) or coef < -tol:
                raise NegativeCoefficient(f"coefficient {coef!r} on monomial {key} is negative")
        items = [(k, c) for k, c in sorted(merged.items()) if c > 0]
        self.coefficients = np.array([c for _, c in items], dtype=float)
        self.exponents = np.zeros((len(items), self.n_vars), dtype=np.int64)
        for row, (key, _) in enumerate(items):
            for v, a in key:
                self.exponents[row, v] = a
        self.coefficients.setflags(write=False)
        self.exponents.setflags(write=False)

    @property
    def n_vars(self) -> int:
        return int(self._offsets[-1])

    @property
    def n_terms(self) -> int:
        return self.coefficients.size

    @property
    def degree(self) -> int:
        return int(self.exponents.sum(axis=1).max()) if self.n_terms else 0

    def var_index(self, v: Variable) -> int:
        if isinstance(v, tuple):
            i, j = v
            if not (0 <= i < len(self.blocks) and 0 <= j < self.blocks[i]):
                raise IndexError(f"variable {v} out of range")
            return int(self._offsets[i] + j)
        v = int(v)
        if not 0 <= v < self.n_vars:
            raise IndexError(f"variable {v} out of range")
        return v

    def _point(self, x) -> np.ndarray:
        x = x.flat if isinstance(x, MixedProfile) else np.asarray(x, dtype=float).reshape(-1)
        if x.size != self.n_vars:
            raise ValueError(f"point has {x.size} coordinates, polynomial has {self.n_vars}")
        return x

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def derivative(self, v: Variable) -> SimplexPolynomial:
        """The partial derivative polynomial (coefficients stay nonnegative)."""
        v = self.var_index(v)
        terms = []
        for c, row in zip(self.coefficients, self.exponents):
            if row[v]:
                exps = {u: int(a) for u, a in enumerate(row) if a}
                exps[v] -= 1
                terms.append((c * row[v], exps))
        return SimplexPolynomial(self.blocks, terms)

    def terms(self) -> list[tuple[float, dict[int, int]]]:
        return [
            (float(c), {int(u): int(a) for u, a in enumerate(row) if a})
            for c, row in zip(self.coefficients, self.exponents)
        ]

    def to_dict(self) -> dict[str, Any]:
        return {
            "blocks": list(self.blocks),
            "variables": [[i, j] for i, b in enumerate(self.blocks) for j in range(b)],
            "terms": [
                {"coefficient": c, "exponents": [[u, a] for u, a in sorted(e.items())]}
                for c, e in self.terms()
            ],
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> SimplexPolynomial:
        return cls(
            data["blocks"],
            ((t["coefficient"], {int(u): int(a) for u, a in t["exponents"]}) for t in data["terms"]),
        )

    @classmethod
    def from_json(cls, text: str) -> SimplexPolynomial:
        return cls.from_dict(json.loads(text))

    def __repr__(self) -> str:
        return f"SimplexPolynomial(blocks={self.blocks}, n_terms={self.n_terms}, degree={self.degree})"


def evaluate(poly: SimplexPolynomial, x) -> float:
    x = poly._point(x)
    if not poly.n_terms:
        return 0.0
    return float(np.prod(x ** poly.exponents, axis=1) @ poly.coefficients)


def gradient(poly: SimplexPolynomial, x) -> np.ndarray:
    """All partial derivatives at x."""
    x = poly._point(x)
    out = np.zeros(poly.n_vars)
    if not poly.n_terms:
        return out
    for v in range(poly.n_vars):
        a = poly.exponents[:, v]
        live = a > 0
        if not live.any():
            continue
        e = poly.exponents[live].copy()
        e[:, v] -= 1
        out[v] = float((poly.coefficients[live] * a[live]) @ np.prod(x ** e, axis=1))
    return out


def partial(poly: SimplexPolynomial, v: Variable, x) -> float:
    """dP/dx_v evaluated at x."""
    v = poly.var_index(v)
    x = poly._point(x)
    a = poly.exponents[:, v]
    live = a > 0
    if not live.any():
        return 0.0
    e = poly.exponents[live].copy()
    e[:, v] -= 1
    return float((poly.coefficients[live] * a[live]) @ np.prod(x ** e, axis=1))


def baum_eagon_step(poly: SimplexPolynomial, x) -> np.ndarray:
    """One growth-map step; returns the new point as a flat array."""
    x = poly._point(x)
    g = x * gradient(poly, x)
    out = np.empty_like(x)
    for i, (lo, hi) in enumerate(zip(poly._offsets[:-1], poly._offsets[1:])):
        denom = g[lo:hi].sum()
        if not denom > 0:
            raise DegenerateDenominator(f"block {i}: denominator {denom!r} is not positive")
        out[lo:hi] = g[lo:hi] / denom
    return out


# -- the MWU_l potential ----------------------------------------------------


@dataclass(frozen=True)
class _QShifts:
    """Constants that lift negative monomials of Q without changing its gradient on the simplices."""

    full: float
    leave_one_out: tuple[float, ...]


def _partial_potential(game: CongestionGame, agents: Sequence[int], choice: Sequence[int]) -> float:
    loads = np.zeros(len(game.edges), dtype=int)
    for i, s in zip(agents, choice):
        loads += game.incidence[i][s].astype(int)
    return float(game.cumulative_cost[np.arange(len(game.edges)), loads].sum())


def _profiles(game: CongestionGame, agents: Sequence[int]):
    return itertools.product(*(range(game.n_strategies[i]) for i in agents))


def _shifts(game: CongestionGame) -> tuple[_QShifts, dict, dict]:
    n = game.n_agents
    everyone = list(range(n))
    phi = {s: _partial_potential(game, everyone, s) for s in _profiles(game, everyone)}
    phi_minus: dict[int, dict] = {}
    for i in everyone:
        others = [j for j in everyone if j != i]
        phi_minus[i] = {s: _partial_potential(game, others, s) for s in _profiles(game, others)}
    full = 0.0
    if n >= 2:
        for s, value in phi.items():
            rest = sum(phi_minus[i][s[:i] + s[i + 1 :]] for i in everyone)
            full = max(full, value - rest)
    loo = tuple(max(phi_minus[i].values()) if n >= 3 else 0.0 for i in everyone)
    return _QShifts(full, loo), phi, phi_minus


def q_inverse_rate_bounds(game: CongestionGame) -> np.ndarray:
    """Per-agent lower bound on 1/eps_i for which :func:`build_q` has nonnegative coefficients.

    The bound is at least the largest strategy cost of that agent; with more
    than one agent it is usually strictly larger than 1/beta.
    """
    shifts, phi, phi_minus = _shifts(game)
    n = game.n_agents
    bounds = np.zeros(n)
    for j in range(n):
        if n == 1:
            need = max(phi[(g,)] for g in range(game.n_strategies[0]))
        elif n == 2:
            i = 1 - j
            need = shifts.full + max(phi_minus[i][(g,)] for g in range(game.n_strategies[j]))
        else:
            need = shifts.full + sum(shifts.leave_one_out[i] for i in range(n) if i != j)
        bounds[j] = need
    return bounds


def build_q(
    game: CongestionGame, rates, max_monomials: int = MAX_MONOMIALS
) -> SimplexPolynomial:
    """The MWU_l potential Q as a nonnegative-coefficient polynomial.

    With u_i the sum of agent i's variables and A_i the expected potential of
    the game without agent i,

        Q = sum_i u_i / eps_i - Psi + sum_i (u_i - 1) A_i + lifts,

    where each lift is K_T (prod_{i in T} u_i - sum_{i in T} u_i + |T| - 1)
    for T = all agents, and for T = all but one agent when N >= 3.  Every
    added piece vanishes with its gradient on the product of simplices, so
    there Q = sum_i 1/eps_i - Psi and dQ/dp_ig = 1/eps_i - c_ig.  The
    correction terms cancel the extra A_i that the raw derivative of Psi
    carries, and the lifts absorb the negative monomials it leaves behind.

    Raises:
        NegativeCoefficient: some rate is too large for this representation
            (see :func:`q_inverse_rate_bounds`).
        PolynomialTooLarge: more than ``max_monomials`` terms would be built.
    """
    rates = check_rates(game, rates, "linear")
    n = game.n_agents
    sizes = game.n_strategies
    estimate = math.prod(sizes) + sum(math.prod(sizes) // k for k in sizes) + sum(sizes) + 1
    if estimate > max_monomials:
        raise PolynomialTooLarge(
            f"Q would have about {estimate} monomials (cap {max_monomials})"
        )
    shifts, phi, phi_minus = _shifts(game)
    everyone = list(range(n))
    terms: list[tuple[float, dict[tuple[int, int], int]]] = []

    def mono(agents, choice):
        return {(i, g): 1 for i, g in zip(agents, choice)}

    for i in everyone:
        for g in range(sizes[i]):
            terms.append((1.0 / rates.eps[i], {(i, g): 1}))
    # -Psi + sum_i u_i A_i + K_full prod_i u_i: the degree-N monomials
    for s, value in phi.items():
        coef = -value + shifts.full
        if n >= 2:
            coef += sum(phi_minus[i][s[:i] + s[i + 1 :]] for i in everyone)
        terms.append((coef, mono(everyone, s)))
    if n >= 2:
        for i in everyone:
            others = [j for j in everyone if j != i]
            # -A_i, plus the leave-one-out lift on the same monomials
            for s, value in phi_minus[i].items():
                terms.append((shifts.leave_one_out[i] - value, mono(others, s)))
            for j in others:
                for g in range(sizes[j]):
                    terms.append((-shifts.leave_one_out[i], {(j, g): 1}))
            terms.append(((n - 2) * shifts.leave_one_out[i], {}))
        for i in everyone:
            for g in range(sizes[i]):
                terms.append((-shifts.full, {(i, g): 1}))
        terms.append(((n - 1) * shifts.full, {}))
    merged: dict[tuple, float] = {}
    for c, e in terms:
        key = tuple(sorted(e.items()))
        merged[key] = merged.get(key, 0.0) + c
    for key, c in merged.items():
        if c < -COEF_TOL:
            raise NegativeCoefficient(
                f"Q coefficient {c!r} on {dict(key)} is negative; rates "
                f"{rates.eps} exceed the bounds 1/{q_inverse_rate_bounds(game).tolist()}"
            )
    return SimplexPolynomial(
        sizes, ((max(c, 0.0), dict(k)) for k, c in merged.items()), tol=COEF_TOL
    )


def q_rate_limits(game: CongestionGame) -> np.ndarray:
    """Largest per-agent rates (exclusive) admissible both for MWU_l and for :func:`build_q`."""
    inv = np.maximum(q_inverse_rate_bounds(game), game.max_strategy_cost)
    with np.errstate(divide="ignore"):
        return np.where(inv > 0, 1.0 / inv, np.inf)


def q_value(game: CongestionGame, rates, p: MixedProfile) -> float:
    """Q at a point of the simplices, without building the polynomial."""
    rates = LearningRates.coerce(rates, game.n_agents)
    return sum(1.0 / e for e in rates.eps) - expected_potential(game, p)
