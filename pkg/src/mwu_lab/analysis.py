"""Experiment campaigns: random games, Lyapunov checks, rate sweeps, basins.

Work items are independent, so campaigns fan out over a thread pool whose
size is capped by the ``MWU_LAB_THREADS`` environment variable.  Results are
always collected in submission order, which keeps reports bit-identical for
a fixed configuration.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .dynamics import (
    CYCLE_TOL,
    FP_TOL,
    LearningRates,
    Trajectory,
    _UPDATES,
    check_rates,
    normalize_variant,
    run,
)
from .game import CongestionGame, MixedProfile, check_profile, evaluate, nash_residual, resolve_game
from .onedim import H, OrbitCertificate, h_constants, make_certificate

MAX_AGENTS = 4
MAX_EDGES = 5
MAX_STRATEGIES = 4
PSI_SLACK = 1e-13
CERT_RESIDUAL = 1e-10
CERT_SEPARATION = 1e-6


def worker_count() -> int:
    """Thread cap from ``MWU_LAB_THREADS`` (defaults to the CPU count)."""
    raw = os.environ.get("MWU_LAB_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            raise ValueError(f"MWU_LAB_THREADS must be an integer, got {raw!r}") from None
        return max(1, n)
    return os.cpu_count() or 1


def parallel_map(fn: Callable, items: Iterable) -> list:
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# -- random instances -------------------------------------------------------


def random_game(
    seed: int,
    max_agents: int = MAX_AGENTS,
    max_edges: int = MAX_EDGES,
    max_strategies: int = MAX_STRATEGIES,
) -> CongestionGame:
    """A reproducible congestion game with nondecreasing costs in (0, 1].

    Sizes are drawn uniformly with at least two agents, two edges and (where
    possible) two strategies per agent; strategies are distinct nonempty
    edge subsets.
    """
    if not (1 <= max_agents <= MAX_AGENTS and 1 <= max_edges <= MAX_EDGES and 1 <= max_strategies <= MAX_STRATEGIES):
        raise ValueError(
            f"size bounds must satisfy agents <= {MAX_AGENTS}, edges <= {MAX_EDGES}, strategies <= {MAX_STRATEGIES}"
        )
    rng = np.random.default_rng(seed)
    n_agents = int(rng.integers(min(2, max_agents), max_agents + 1))
    n_edges = int(rng.integers(min(2, max_edges), max_edges + 1))
    edges = [f"e{j}" for j in range(n_edges)]
    subsets = [
        c for r in range(1, n_edges + 1) for c in itertools.combinations(range(n_edges), r)
    ]
    cap = min(max_strategies, len(subsets))
    strategies = []
    for _ in range(n_agents):
        k = int(rng.integers(min(2, cap), cap + 1))
        chosen = sorted(rng.choice(len(subsets), size=k, replace=False))
        strategies.append([[edges[j] for j in subsets[c]] for c in chosen])
    costs = {}
    for e in edges:
        row = np.sort(np.round(rng.uniform(0.05, 1.0, size=n_agents), 4))
        costs[e] = [float(v) for v in row]
    return CongestionGame(n_agents, edges, strategies, costs, name=f"random-{seed}")


def random_interior_profile(game: CongestionGame, rng: np.random.Generator, margin: float = 0.01) -> MixedProfile:
    """Dirichlet draw squeezed so every probability is at least ``margin``."""
    widest = max(game.n_strategies)
    if not 0 < margin < 1.0 / widest:
        raise ValueError(f"margin must lie in (0, 1/{widest})")
    blocks = []
    for k in game.n_strategies:
        blocks.append(margin + (1.0 - k * margin) * rng.dirichlet(np.ones(k)))
    return MixedProfile(blocks)


def random_rates(game: CongestionGame, rng: np.random.Generator, lo: float, hi: float) -> LearningRates:
    """Per-agent eps_i = u_i * beta_hat with u_i uniform in [lo, hi]."""
    return LearningRates.from_eps([game.rate_bound * u for u in rng.uniform(lo, hi, game.n_agents)])


# -- Lyapunov campaigns -------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """Settings for :func:`verify_lyapunov`.

    ``games`` lists game files or builtin names; when empty, ``n_games``
    random games are generated from ``seed, seed + 1, ...``.  ``eps`` fixes
    the rate of every agent; otherwise each agent draws a fraction of the
    game's admissibility bound from ``eps_fraction``.  Scalar ``starts``
    replace the random interior starts with symmetric profiles (x, 1 - x).
    """

    seed: int = 0
    n_games: int = 100
    max_agents: int = MAX_AGENTS
    max_edges: int = MAX_EDGES
    max_strategies: int = MAX_STRATEGIES
    games: tuple[str, ...] = ()
    variant: str = "linear"
    eps: tuple[float, ...] | float | None = None
    eps_fraction: tuple[float, float] = (0.1, 0.99)
    n_starts: int = 5
    starts: tuple[float, ...] = ()
    margin: float = 0.01
    max_iters: int = 500
    fp_tol: float = FP_TOL
    slack: float = PSI_SLACK
    output: str | None = None

    def __post_init__(self) -> None:
        if not (self.max_agents <= MAX_AGENTS and self.max_edges <= MAX_EDGES and self.max_strategies <= MAX_STRATEGIES):
            raise ValueError("size bounds exceed the desk-scale caps (4 agents, 5 edges, 4 strategies)")
        if not 0 < self.margin < 1.0 / self.max_strategies:
            raise ValueError(f"margin must lie in (0, 1/{self.max_strategies})")
        lo, hi = self.eps_fraction
        if not 0 < lo <= hi < 1:
            raise ValueError("eps_fraction must satisfy 0 < lo <= hi < 1")
        if self.n_starts < 1 or self.max_iters < 1:
            raise ValueError("n_starts and max_iters must be positive")
        normalize_variant(self.variant)

    def load_games(self) -> list[CongestionGame]:
        if self.games:
            return [resolve_game(g) for g in self.games]
        return [
            random_game(self.seed + i, self.max_agents, self.max_edges, self.max_strategies)
            for i in range(self.n_games)
        ]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["games"] = list(self.games)
        d["eps_fraction"] = list(self.eps_fraction)
        d["starts"] = list(self.starts)
        if isinstance(self.eps, tuple):
            d["eps"] = list(self.eps)
        return d


def psi_violations(traj: Trajectory, fp_tol: float = FP_TOL, slack: float = PSI_SLACK) -> tuple[int, int, float]:
    """(checked steps, violations, largest increase) for the potential along ``traj``.

    A step is checked when it moves the profile by more than ``fp_tol`` in
    sup norm; it violates when the potential rises by more than ``slack``.
    """
    psi = traj.psi
    norms = np.array([s.step_norm for s in traj.steps])
    if norms.size == 0:
        return 0, 0, 0.0
    rise = np.diff(psi)
    checked = norms > fp_tol
    bad = checked & (rise > slack)
    worst = float(rise[checked].max()) if checked.any() else 0.0
    return int(checked.sum()), int(bad.sum()), max(worst, 0.0)


@dataclass(frozen=True)
class TrajectoryRecord:
    game: str
    game_sha256: str
    start: int
    eps: tuple[float, ...]
    n_iters: int
    checked_steps: int
    violations: int
    max_violation: float
    termination: str
    nash_residual: float

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["eps"] = list(self.eps)
        return d


@dataclass
class LyapunovReport:
    config: ExperimentConfig
    records: list[TrajectoryRecord] = field(default_factory=list)

    @property
    def n_trajectories(self) -> int:
        return len(self.records)

    @property
    def violations(self) -> int:
        return sum(r.violations for r in self.records)

    @property
    def max_violation(self) -> float:
        return max((r.max_violation for r in self.records), default=0.0)

    @property
    def ok(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "n_trajectories": self.n_trajectories,
            "violations": self.violations,
            "max_violation": self.max_violation,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _lyapunov_task(args) -> list[TrajectoryRecord]:
    index, game, config = args
    rng = np.random.default_rng([config.seed, index])
    if config.eps is None:
        rates = random_rates(game, rng, *config.eps_fraction)
    else:
        rates = LearningRates.coerce(config.eps, game.n_agents)
    if config.starts:
        starts = [MixedProfile.symmetric(game, x) for x in config.starts]
    else:
        starts = [random_interior_profile(game, rng, config.margin) for _ in range(config.n_starts)]
    out = []
    for s, p0 in enumerate(starts):
        traj = run(game, p0, rates, config.variant, max_iters=config.max_iters, fp_tol=config.fp_tol)
        checked, bad, worst = psi_violations(traj, config.fp_tol, config.slack)
        out.append(
            TrajectoryRecord(
                game.name, game.digest(), s, rates.eps, traj.n_steps, checked, bad, worst,
                traj.termination, nash_residual(game, traj.final),
            )
        )
    return out


def verify_lyapunov(config: ExperimentConfig) -> LyapunovReport:
    """Run every (game, start) pair and count rises of the expected potential.

    The potential is guaranteed to fall only under the linear update; other
    variants are accepted so the checker can demonstrate the contrast.
    """
    games = config.load_games()
    chunks = parallel_map(_lyapunov_task, [(i, g, config) for i, g in enumerate(games)])
    report = LyapunovReport(config, [r for chunk in chunks for r in chunk])
    if config.output:
        with open(config.output, "w") as fh:
            fh.write(report.to_json() + "\n")
    return report


# -- learning-rate sweeps -------------------------------------------------------


def cycle_certificate(
    game: CongestionGame, rates, variant: str, cycle: Sequence[MixedProfile], refine_periods: int = 50
) -> OrbitCertificate:
    """Certify a cycle found by :func:`run` after iterating it a little longer."""
    variant = normalize_variant(variant)
    rates = check_rates(game, rates, variant)
    update = _UPDATES[variant]
    k = len(cycle)

    def step(x: np.ndarray) -> np.ndarray:
        blocks = MixedProfile.from_flat(game, x).blocks
        costs, _ = evaluate(game, blocks)
        return np.concatenate(update(blocks, costs, rates))

    x = cycle[-1].flat
    for _ in range(k * refine_periods):
        x = step(x)
    cert = make_certificate(step, x, k, kind=f"periodic-{k}")
    return OrbitCertificate(
        cert.kind,
        tuple(tuple(float(v) for v in np.atleast_1d(p)) for p in cert.points),
        cert.residual,
        cert.separation,
    )


@dataclass(frozen=True)
class SweepRecord:
    eps: float
    decay: float
    start: int
    outcome: str
    n_steps: int
    samples: tuple[float, ...]
    certificate: OrbitCertificate | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "eps": self.eps,
            "decay": self.decay,
            "start": self.start,
            "outcome": self.outcome,
            "n_steps": self.n_steps,
            "samples": list(self.samples),
            "certificate": None if self.certificate is None else self.certificate.to_dict(),
        }


@dataclass
class SweepReport:
    game: str
    variant: str
    records: list[SweepRecord] = field(default_factory=list)

    def outcomes(self) -> dict[float, str]:
        """Outcome per rate; disagreeing starts are joined with ``|``."""
        seen: dict[float, list[str]] = {}
        for r in self.records:
            seen.setdefault(r.eps, [])
            if r.outcome not in seen[r.eps]:
                seen[r.eps].append(r.outcome)
        return {eps: "|".join(sorted(v)) for eps, v in seen.items()}

    def to_dict(self) -> dict[str, Any]:
        return {
            "game": self.game,
            "variant": self.variant,
            "records": [r.to_dict() for r in self.records],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def bifurcation_csv(self) -> str:
        """Rows (eps, decay, start, outcome, x) with x = p[0][0] at attractor samples."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "decay", "start", "outcome", "x"])
        for r in self.records:
            for x in r.samples:
                w.writerow([repr(r.eps), repr(r.decay), r.start, r.outcome, repr(x)])
        return buf.getvalue()


def _coerce_start(game: CongestionGame, start) -> MixedProfile:
    if isinstance(start, (int, float)):
        return MixedProfile.symmetric(game, float(start))
    return check_profile(game, start)


def classify(traj: Trajectory, cert: OrbitCertificate | None) -> str:
    if traj.termination == "converged":
        return "converged"
    if traj.termination == "cycle_detected" and cert is not None:
        if cert.residual <= CERT_RESIDUAL and cert.separation > CERT_SEPARATION:
            return f"periodic-{traj.period}"
    return "non-classified"


def _sweep_task(args) -> SweepRecord:
    game, variant, rates, s, p0, max_iters, fp_tol, cycle_tol, tail = args
    traj = run(game, p0, rates, variant, max_iters=max_iters, fp_tol=fp_tol, cycle_tol=cycle_tol)
    cert = None
    if traj.termination == "cycle_detected":
        cert = cycle_certificate(game, rates, variant, traj.cycle())
    outcome = classify(traj, cert)
    if outcome == "converged":
        samples = (float(traj.final.flat[0]),)
    elif cert is not None and outcome.startswith("periodic"):
        samples = tuple(p[0] for p in cert.points)
    else:
        samples = tuple(float(p.flat[0]) for p in traj.profiles[-tail:])
    return SweepRecord(rates.eps[0], rates.decay[0], s, outcome, traj.n_steps, samples, cert)


def rate_sweep(
    game: CongestionGame,
    variant: str,
    eps_grid: Sequence,
    starts: Sequence,
    max_iters: int = 20_000,
    fp_tol: float = FP_TOL,
    cycle_tol: float = CYCLE_TOL,
    tail: int = 64,
) -> SweepReport:
    """Classify the long-run behaviour for each (rate, start) pair.

    ``eps_grid`` entries may be floats, per-agent vectors, rate expressions
    such as ``"1-exp(-10)"`` or :class:`LearningRates`.  ``starts`` may be
    profiles or scalars x (meaning the symmetric profile (x, 1 - x)).
    """
    variant = normalize_variant(variant)
    rate_list = [check_rates(game, eps, variant) for eps in eps_grid]
    start_list = [_coerce_start(game, s) for s in starts]
    tasks = [
        (game, variant, rates, s, p0, max_iters, fp_tol, cycle_tol, tail)
        for rates in rate_list
        for s, p0 in enumerate(start_list)
    ]
    return SweepReport(game.name, variant, parallel_map(_sweep_task, tasks))


# -- basin sampling for the even iterates of H -------------------------------


@dataclass
class BasinReport:
    starts: np.ndarray
    limits: np.ndarray
    labels: list[str]
    targets: tuple[float, ...]

    @property
    def flagged_fraction(self) -> float:
        return self.labels.count("equilibrium") / len(self.labels)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for lab in self.labels:
            out[lab] = out.get(lab, 0) + 1
        return dict(sorted(out.items()))

    def to_dict(self) -> dict[str, Any]:
        return {"targets": list(self.targets), "counts": self.counts(), "flagged_fraction": self.flagged_fraction}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["start", "limit", "label"])
        for x, y, lab in zip(self.starts, self.limits, self.labels):
            w.writerow([repr(float(x)), repr(float(y)), lab])
        return buf.getvalue()


def sample_basin(
    fmap: Callable = H,
    n: int = 1000,
    seed: int = 0,
    steps: int = 2000,
    targets: Sequence[float] | None = None,
    tol: float = 1e-8,
    trap: float = 0.5,
    trap_tol: float = 1e-9,
) -> BasinReport:
    """Where the even iterates F^{2t}(x) end up for uniform random starts.

    Starts whose orbit passes within ``trap_tol`` of ``trap`` are labelled
    ``equilibrium``; the rest are matched against ``targets`` (the two points
    of the 2-cycle of H by default) or labelled ``unresolved``.
    """
    if targets is None:
        hc = h_constants()
        targets = (hc.rho1, hc.rho2)
    rng = np.random.default_rng(seed)
    starts = rng.uniform(0.0, 1.0, n)
    x = starts.copy()
    hit = np.abs(x - trap) <= trap_tol
    for _ in range(steps):
        for _ in range(2):
            x = np.asarray(fmap(x))
            hit |= np.abs(x - trap) <= trap_tol
    labels = []
    for xi, h in zip(x, hit):
        if h:
            labels.append("equilibrium")
            continue
        near = [j for j, t in enumerate(targets) if abs(xi - t) <= tol]
        labels.append(f"target{near[0]}" if near else "unresolved")
    return BasinReport(starts, x, labels, tuple(float(t) for t in targets))
