"""Atomic congestion games: pure costs, Rosenthal potential, exact mixed expectations.

Expected quantities under a mixed profile are computed exactly.  Agents
randomize independently, so the number of agents on an edge is a sum of
independent Bernoulli variables whose law follows from convolving them one
agent at a time.  Enumerating pure profiles is only used by the tests.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .exceptions import GameValidationError, ProfileError

PureProfile = tuple[int, ...]

#: Tolerance for per-agent probability sums on user-supplied profiles.
SUM_TOL = 1e-9


@dataclass(frozen=True)
class CongestionGame:
    """An atomic congestion game with tabulated edge costs.

    Attributes:
        n_agents: Number of agents N.
        edges: Edge identifiers.
        strategies: For each agent, its strategies, each a tuple of edge ids.
        costs: For each edge, costs at loads 1..N.
        name: Optional label, not part of the game's identity.
    """

    n_agents: int
    edges: tuple[str, ...]
    strategies: tuple[tuple[tuple[str, ...], ...], ...]
    costs: Mapping[str, tuple[float, ...]]
    name: str = field(default="", compare=False)

    def __post_init__(self) -> None:
        # Normalise containers so equal games compare and hash equally.
        object.__setattr__(self, "edges", tuple(str(e) for e in self.edges))
        object.__setattr__(
            self,
            "strategies",
            tuple(tuple(tuple(str(e) for e in s) for s in agent) for agent in self.strategies),
        )
        object.__setattr__(
            self, "costs", {str(e): tuple(float(c) for c in tab) for e, tab in self.costs.items()}
        )
        _validate(self)

    # -- derived arrays -------------------------------------------------

    @cached_property
    def n_strategies(self) -> tuple[int, ...]:
        return tuple(len(s) for s in self.strategies)

    @cached_property
    def edge_index(self) -> dict[str, int]:
        return {e: k for k, e in enumerate(self.edges)}

    @cached_property
    def incidence(self) -> tuple[np.ndarray, ...]:
        """Per agent, a 0/1 matrix of shape (|S_i|, |E|)."""
        out = []
        for agent in self.strategies:
            m = np.zeros((len(agent), len(self.edges)))
            for g, strat in enumerate(agent):
                for e in strat:
                    m[g, self.edge_index[e]] = 1.0
            m.setflags(write=False)
            out.append(m)
        return tuple(out)

    @cached_property
    def cost_table(self) -> np.ndarray:
        """Array of shape (|E|, N); column k holds c_e(k + 1)."""
        t = np.array([self.costs[e] for e in self.edges], dtype=float).reshape(
            len(self.edges), self.n_agents
        )
        t.setflags(write=False)
        return t

    @cached_property
    def cumulative_cost(self) -> np.ndarray:
        """Array of shape (|E|, N + 1); column k holds sum_{j<=k} c_e(j)."""
        t = np.zeros((len(self.edges), self.n_agents + 1))
        t[:, 1:] = np.cumsum(self.cost_table, axis=1)
        t.setflags(write=False)
        return t

    @cached_property
    def max_strategy_cost(self) -> float:
        """Upper bound 1/beta on every expected strategy cost c_{i,gamma}.

        Each edge contributes its largest tabulated cost, which is c_e(N)
        whenever the table is nondecreasing.
        """
        edge_max = self.cost_table.max(axis=1)
        return float(max((m @ edge_max).max() for m in self.incidence))

    @cached_property
    def rate_bound(self) -> float:
        """The admissibility bound beta; MWU_l needs every rate below it."""
        if self.max_strategy_cost == 0.0:
            return math.inf
        return 1.0 / self.max_strategy_cost

    @cached_property
    def n_pure_profiles(self) -> int:
        return math.prod(self.n_strategies)

    def to_dict(self) -> dict[str, Any]:
        return {
            "n_agents": self.n_agents,
            "edges": list(self.edges),
            "strategies": [[list(s) for s in agent] for agent in self.strategies],
            "costs": {e: list(self.costs[e]) for e in self.edges},
        }

    def to_json(self, **kwargs: Any) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    def digest(self) -> str:
        """SHA-256 of the canonical JSON encoding."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def is_symmetric_pair(self) -> bool:
        """True for two agents sharing an identical strategy list."""
        return self.n_agents == 2 and self.strategies[0] == self.strategies[1]


def _validate(game: CongestionGame) -> None:
    if not isinstance(game.n_agents, (int, np.integer)) or isinstance(game.n_agents, bool):
        raise GameValidationError(f"n_agents: expected an integer, got {game.n_agents!r}")
    if game.n_agents < 1:
        raise GameValidationError(f"n_agents: must be positive, got {game.n_agents}")
    if len(game.edges) == 0:
        raise GameValidationError("edges: at least one edge is required")
    if len(set(game.edges)) != len(game.edges):
        raise GameValidationError("edges: identifiers must be unique")
    if len(game.strategies) != game.n_agents:
        raise GameValidationError(
            f"strategies: expected {game.n_agents} agents, got {len(game.strategies)}"
        )
    declared = set(game.edges)
    for i, agent in enumerate(game.strategies):
        if len(agent) == 0:
            raise GameValidationError(f"strategies[{i}]: agent has no strategies")
        for g, strat in enumerate(agent):
            if len(strat) == 0:
                raise GameValidationError(f"strategies[{i}][{g}]: strategy is empty")
            if len(set(strat)) != len(strat):
                raise GameValidationError(f"strategies[{i}][{g}]: repeated edge")
            for e in strat:
                if e not in declared:
                    raise GameValidationError(f"strategies[{i}][{g}]: unknown edge {e!r}")
    missing = declared - set(game.costs)
    if missing:
        raise GameValidationError(f"costs: missing table for edge {sorted(missing)[0]!r}")
    extra = set(game.costs) - declared
    if extra:
        raise GameValidationError(f"costs: table for undeclared edge {sorted(extra)[0]!r}")
    for e in game.edges:
        tab = game.costs[e]
        if len(tab) != game.n_agents:
            raise GameValidationError(
                f"costs[{e!r}]: expected {game.n_agents} entries (loads 1..N), got {len(tab)}"
            )
        for k, c in enumerate(tab):
            if not math.isfinite(c) or c < 0:
                raise GameValidationError(
                    f"costs[{e!r}][{k}]: cost must be finite and nonnegative, got {c}"
                )


# -- construction helpers --------------------------------------------------


def game_from_dict(data: Mapping[str, Any], name: str = "") -> CongestionGame:
    """Build a game from its JSON-shaped dict, with field-specific errors."""
    if not isinstance(data, Mapping):
        raise GameValidationError("top level: expected a JSON object")
    for key in ("n_agents", "edges", "strategies", "costs"):
        if key not in data:
            raise GameValidationError(f"{key}: missing field")
    n = data["n_agents"]
    if not isinstance(n, int) or isinstance(n, bool):
        raise GameValidationError(f"n_agents: expected an integer, got {n!r}")
    if not isinstance(data["edges"], list):
        raise GameValidationError("edges: expected a list")
    strategies = data["strategies"]
    if not isinstance(strategies, list):
        raise GameValidationError("strategies: expected a list")
    for i, agent in enumerate(strategies):
        if not isinstance(agent, list):
            raise GameValidationError(f"strategies[{i}]: expected a list of strategies")
        for g, strat in enumerate(agent):
            if not isinstance(strat, list):
                raise GameValidationError(f"strategies[{i}][{g}]: expected a list of edges")
    costs = data["costs"]
    if not isinstance(costs, Mapping):
        raise GameValidationError("costs: expected an object keyed by edge")
    for e, tab in costs.items():
        if not isinstance(tab, list):
            raise GameValidationError(f"costs[{e!r}]: expected a list of numbers")
        for k, c in enumerate(tab):
            if not isinstance(c, (int, float)) or isinstance(c, bool):
                raise GameValidationError(f"costs[{e!r}][{k}]: expected a number, got {c!r}")
    return CongestionGame(n, tuple(data["edges"]), strategies, costs, name=name)


def loads_game(text: str, name: str = "") -> CongestionGame:
    """Parse a game from JSON text."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GameValidationError(
            f"line {exc.lineno}, column {exc.colno}: invalid JSON ({exc.msg})"
        ) from exc
    return game_from_dict(data, name=name)


def load_game(path: str) -> CongestionGame:
    with open(path, encoding="utf-8") as fh:
        return loads_game(fh.read(), name=str(path))


def linear_cost_game(slopes: Sequence[float], n_agents: int = 2, name: str = "") -> CongestionGame:
    """Parallel-links game: every agent picks one edge, c_e(l) = slope_e * l."""
    edges = tuple(f"e{k + 1}" for k in range(len(slopes)))
    strategies = [[[e] for e in edges] for _ in range(n_agents)]
    costs = {e: [a * load for load in range(1, n_agents + 1)] for e, a in zip(edges, slopes)}
    return CongestionGame(n_agents, edges, strategies, costs, name=name)


def game1() -> CongestionGame:
    """Two agents, two bins, c(l) = l/2 on both bins."""
    return linear_cost_game([0.5, 0.5], name="game1")


def game2() -> CongestionGame:
    """Two agents, two bins, c_1(l) = l/4 and c_2(l) = 1.4 l/4."""
    return linear_cost_game([0.25, 1.4 / 4], name="game2")


BUILTIN_GAMES = {"game1": game1, "game2": game2}


def resolve_game(name_or_path: str) -> CongestionGame:
    """Return a builtin game by name or load one from a JSON path."""
    if name_or_path in BUILTIN_GAMES:
        return BUILTIN_GAMES[name_or_path]()
    return load_game(name_or_path)


# -- profiles ---------------------------------------------------------------


class MixedProfile:
    """One probability vector per agent; read-only once built.

    Blocks are renormalised on construction, so callers can pass weights that
    sum to one only up to rounding.
    """

    __slots__ = ("_blocks",)

    def __init__(self, blocks: Iterable[Sequence[float] | np.ndarray]) -> None:
        out = []
        for i, b in enumerate(blocks):
            arr = np.array(b, dtype=float).reshape(-1)
            if arr.size == 0:
                raise ProfileError(f"agent {i}: empty probability vector")
            if not np.all(np.isfinite(arr)) or np.any(arr < 0):
                raise ProfileError(f"agent {i}: probabilities must be finite and nonnegative")
            total = arr.sum()
            if total <= 0:
                raise ProfileError(f"agent {i}: probabilities sum to zero")
            arr = arr / total
            arr.setflags(write=False)
            out.append(arr)
        self._blocks = tuple(out)

    @classmethod
    def _trusted(cls, blocks: Sequence[np.ndarray]) -> MixedProfile:
        # Internal fast path: blocks are already valid, normalised, and unshared.
        obj = cls.__new__(cls)
        for b in blocks:
            b.setflags(write=False)
        obj._blocks = tuple(blocks)
        return obj

    @classmethod
    def uniform(cls, game: CongestionGame) -> MixedProfile:
        return cls(np.full(k, 1.0 / k) for k in game.n_strategies)

    @classmethod
    def from_pure(cls, game: CongestionGame, pure: Sequence[int]) -> MixedProfile:
        pure = check_pure(game, pure)
        blocks = []
        for k, s in zip(game.n_strategies, pure):
            b = np.zeros(k)
            b[s] = 1.0
            blocks.append(b)
        return cls(blocks)

    @classmethod
    def from_flat(cls, game: CongestionGame, flat: Sequence[float] | np.ndarray) -> MixedProfile:
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != sum(game.n_strategies):
            raise ProfileError(
                f"expected {sum(game.n_strategies)} coordinates, got {flat.size}"
            )
        splits = np.cumsum(game.n_strategies)[:-1]
        return cls(np.split(flat, splits))

    @classmethod
    def symmetric(cls, game: CongestionGame, x: float) -> MixedProfile:
        """Every agent plays its first strategy w.p. x, its second w.p. 1 - x."""
        if any(k != 2 for k in game.n_strategies):
            raise ProfileError("symmetric scalar profiles need exactly two strategies per agent")
        return cls([x, 1.0 - x] for _ in range(game.n_agents))

    @property
    def blocks(self) -> tuple[np.ndarray, ...]:
        return self._blocks

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(b.size for b in self._blocks)

    @property
    def flat(self) -> np.ndarray:
        return np.concatenate(self._blocks)

    def __len__(self) -> int:
        return len(self._blocks)

    def __getitem__(self, i: int) -> np.ndarray:
        return self._blocks[i]

    def __iter__(self):
        return iter(self._blocks)

    def distance(self, other: MixedProfile) -> float:
        """L-infinity distance between two profiles of the same shape."""
        return float(np.max(np.abs(self.flat - other.flat)))

    def tolist(self) -> list[list[float]]:
        return [b.tolist() for b in self._blocks]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, MixedProfile):
            return NotImplemented
        return self.sizes == other.sizes and all(
            np.array_equal(a, b) for a, b in zip(self._blocks, other._blocks)
        )

    def __hash__(self) -> int:
        return hash(self.flat.tobytes())

    def __repr__(self) -> str:
        return f"MixedProfile({self.tolist()})"


def check_pure(game: CongestionGame, pure: Sequence[int]) -> PureProfile:
    pure = tuple(int(s) for s in pure)
    if len(pure) != game.n_agents:
        raise ProfileError(f"expected {game.n_agents} strategy indices, got {len(pure)}")
    for i, (s, k) in enumerate(zip(pure, game.n_strategies)):
        if not 0 <= s < k:
            raise ProfileError(f"agent {i}: strategy index {s} out of range [0, {k})")
    return pure


def check_profile(game: CongestionGame, p: MixedProfile | Sequence[Sequence[float]]) -> MixedProfile:
    """Coerce ``p`` to a MixedProfile of the game's shape.

    Raw nested sequences must sum to one per agent within ``SUM_TOL``.
    """
    if not isinstance(p, MixedProfile):
        blocks = [np.asarray(b, dtype=float).reshape(-1) for b in p]
        for i, b in enumerate(blocks):
            if b.size and abs(b.sum() - 1.0) > SUM_TOL:
                raise ProfileError(f"agent {i}: probabilities sum to {b.sum()!r}, not 1")
        p = MixedProfile(blocks)
    if p.sizes != game.n_strategies:
        raise ProfileError(f"profile shape {p.sizes} does not match game {game.n_strategies}")
    return p


def check_agent(game: CongestionGame, agent: int) -> int:
    if not 0 <= agent < game.n_agents:
        raise ProfileError(f"agent index {agent} out of range [0, {game.n_agents})")
    return int(agent)


# -- pure-profile quantities ------------------------------------------------


def edge_loads(game: CongestionGame, profile: Sequence[int]) -> np.ndarray:
    """Number of agents on each edge under a pure profile."""
    profile = check_pure(game, profile)
    loads = np.zeros(len(game.edges), dtype=int)
    for i, s in enumerate(profile):
        loads += game.incidence[i][s].astype(int)
    return loads


def pure_cost(game: CongestionGame, profile: Sequence[int], agent: int) -> float:
    """Cost of ``agent`` under a pure profile: sum over its edges of c_e(load)."""
    agent = check_agent(game, agent)
    loads = edge_loads(game, profile)
    used = game.incidence[agent][profile[agent]] > 0
    idx = np.nonzero(used)[0]
    return float(game.cost_table[idx, loads[idx] - 1].sum())


def potential(game: CongestionGame, profile: Sequence[int]) -> float:
    """Rosenthal potential: for every edge, the sum of c_e(1..load)."""
    loads = edge_loads(game, profile)
    return float(game.cumulative_cost[np.arange(len(game.edges)), loads].sum())


# -- mixed-profile quantities -----------------------------------------------


def edge_usage(game: CongestionGame, p: MixedProfile) -> np.ndarray:
    """Array (N, |E|) of probabilities that agent j's strategy contains edge e."""
    return np.stack([b @ m for b, m in zip(p.blocks, game.incidence)])


def _convolve_loads(usage: np.ndarray, n_loads: int) -> np.ndarray:
    n_edges = usage.shape[1]
    dist = np.zeros((n_edges, n_loads))
    dist[:, 0] = 1.0
    for q in usage:
        q = q[:, None]
        shifted = np.zeros_like(dist)
        shifted[:, 1:] = dist[:, :-1]
        dist = dist * (1.0 - q) + shifted * q
    return dist


def load_distributions(
    game: CongestionGame, p: MixedProfile, exclude: int | None = None
) -> np.ndarray:
    """Exact law of each edge's load, optionally leaving one agent out.

    Returns:
        Array of shape (|E|, N + 1); row e is P(load_e = 0..N).
    """
    p = check_profile(game, p)
    usage = edge_usage(game, p)
    if exclude is not None:
        exclude = check_agent(game, exclude)
        usage = np.delete(usage, exclude, axis=0)
    return _convolve_loads(usage, game.n_agents + 1)


def _strategy_costs_from_usage(game: CongestionGame, usage: np.ndarray, agent: int) -> np.ndarray:
    others = np.delete(usage, agent, axis=0)
    dist = _convolve_loads(others, game.n_agents)  # loads 0..N-1 from the others
    edge_cost = np.einsum("ek,ek->e", dist, game.cost_table)  # E[c_e(1 + k)]
    return game.incidence[agent] @ edge_cost


def evaluate(game: CongestionGame, blocks: Sequence[np.ndarray]) -> tuple[list[np.ndarray], float]:
    """Every c_{i,gamma} and Psi from one batched convolution.

    Leaving agent i out is the same as giving it zero usage, so row i of the
    batch zeroes agent i and the last row keeps everyone (for Psi).
    """
    n = game.n_agents
    usage = np.stack([b @ m for b, m in zip(blocks, game.incidence)])  # (N, E)
    batch = np.repeat(usage[None], n + 1, axis=0)
    batch[np.arange(n), np.arange(n)] = 0.0
    dist = np.zeros((n + 1, usage.shape[1], n + 1))
    dist[:, :, 0] = 1.0
    for j in range(n):
        q = batch[:, j, :, None]
        nxt = dist * (1.0 - q)
        nxt[:, :, 1:] += dist[:, :, :-1] * q
        dist = nxt
    edge_cost = (dist[:n, :, :n] * game.cost_table).sum(axis=-1)
    costs = [m @ edge_cost[i] for i, m in enumerate(game.incidence)]
    psi = float((dist[n] * game.cumulative_cost).sum())
    return costs, psi


def expected_strategy_costs(game: CongestionGame, p: MixedProfile) -> tuple[np.ndarray, ...]:
    """All c_{i,gamma} at once, one array per agent."""
    p = check_profile(game, p)
    usage = edge_usage(game, p)
    return tuple(_strategy_costs_from_usage(game, usage, i) for i in range(game.n_agents))


def expected_strategy_cost(game: CongestionGame, p: MixedProfile, agent: int, strategy: int) -> float:
    """Expected cost of ``agent`` committing to ``strategy`` while the others mix."""
    p = check_profile(game, p)
    agent = check_agent(game, agent)
    if not 0 <= strategy < game.n_strategies[agent]:
        raise ProfileError(f"strategy index {strategy} out of range for agent {agent}")
    usage = edge_usage(game, p)
    return float(_strategy_costs_from_usage(game, usage, agent)[strategy])


def expected_cost(game: CongestionGame, p: MixedProfile, agent: int) -> float:
    p = check_profile(game, p)
    agent = check_agent(game, agent)
    usage = edge_usage(game, p)
    return float(p[agent] @ _strategy_costs_from_usage(game, usage, agent))


def expected_potential(game: CongestionGame, p: MixedProfile) -> float:
    """Psi(p): expectation of the Rosenthal potential when every agent samples from p."""
    dist = load_distributions(game, p)
    return float(np.einsum("ek,ek->", dist, game.cumulative_cost))


def nash_residual(game: CongestionGame, p: MixedProfile) -> float:
    """Largest gain any agent gets by switching to a pure strategy.

    Zero exactly at Nash equilibria; never negative.
    """
    p = check_profile(game, p)
    worst = 0.0
    for b, c in zip(p.blocks, expected_strategy_costs(game, p)):
        worst = max(worst, float(b @ c - c.min()))
    return worst
