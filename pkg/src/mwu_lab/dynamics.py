"""Linear and exponential multiplicative-weights dynamics on congestion games."""

from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .exceptions import InadmissibleRate
from .game import (
    CongestionGame,
    MixedProfile,
    check_profile,
    evaluate,
)

Variant = Literal["linear", "exp"]

FP_TOL = 1e-12
CYCLE_TOL = 1e-10
SUPPORT_TOL = 1e-14
SEPARATION_TOL = 1e-6
WINDOW = 64
#: Largest tolerated drift of a block sum before renormalisation.
DRIFT_TOL = 1e-9

_VARIANT_ALIASES = {"linear": "linear", "lin": "linear", "exp": "exp", "exponential": "exp"}


def normalize_variant(variant: str) -> Variant:
    try:
        return _VARIANT_ALIASES[variant.lower()]  # type: ignore[return-value]
    except KeyError:
        raise ValueError(f"unknown variant {variant!r}; use 'linear' or 'exp'") from None


@dataclass(frozen=True)
class LearningRates:
    """Per-agent learning rates.

    ``decay`` holds -log(1 - eps) exactly.  The exponential update only needs
    the decay, so rates like 1 - e^-40 (which round to 1.0 as a float) stay
    usable.
    """

    eps: tuple[float, ...]
    decay: tuple[float, ...]

    @classmethod
    def from_eps(cls, eps: float | Sequence[float], n_agents: int | None = None) -> LearningRates:
        values = _broadcast(eps, n_agents)
        decay = tuple(-math.log1p(-e) if e < 1 else math.inf for e in values)
        return cls(values, decay)

    @classmethod
    def from_decay(cls, decay: float | Sequence[float], n_agents: int | None = None) -> LearningRates:
        """Rates eps_i = 1 - exp(-decay_i)."""
        values = _broadcast(decay, n_agents)
        return cls(tuple(-math.expm1(-d) for d in values), values)

    @classmethod
    def coerce(cls, rates: LearningRates | float | Sequence[float], n_agents: int) -> LearningRates:
        if isinstance(rates, LearningRates):
            if len(rates.eps) == 1 and n_agents > 1:
                return cls(rates.eps * n_agents, rates.decay * n_agents)
            if len(rates.eps) != n_agents:
                raise InadmissibleRate(f"expected {n_agents} rates, got {len(rates.eps)}")
            return rates
        if isinstance(rates, str):
            return parse_rate(rates, n_agents)
        return cls.from_eps(rates, n_agents)

    def __len__(self) -> int:
        return len(self.eps)

    def to_dict(self) -> dict[str, list[float]]:
        return {"eps": list(self.eps), "decay": list(self.decay)}


def _broadcast(values: float | Sequence[float], n_agents: int | None) -> tuple[float, ...]:
    if np.ndim(values) == 0:
        out = (float(values),) * (n_agents or 1)  # type: ignore[arg-type]
    else:
        out = tuple(float(v) for v in values)  # type: ignore[union-attr]
        if n_agents is not None and len(out) != n_agents:
            raise InadmissibleRate(f"expected {n_agents} rates, got {len(out)}")
    for v in out:
        if not v > 0 or math.isnan(v):
            raise InadmissibleRate(f"learning rates must be positive, got {v}")
    return out


_EXPR = re.compile(r"^\s*1\s*-\s*(?:exp\(\s*-\s*([0-9.eE+]+)\s*\)|e\^?\s*\(?-\s*([0-9.eE+]+)\)?)\s*$")


def parse_rate(text: str, n_agents: int | None = None) -> LearningRates:
    """Parse ``0.3``, ``1-exp(-10)`` or ``1-e^-40``; the latter two keep the decay exact."""
    m = _EXPR.match(text)
    if m:
        return LearningRates.from_decay(float(m.group(1) or m.group(2)), n_agents)
    return LearningRates.from_eps(float(text), n_agents)


def check_rates(game: CongestionGame, rates, variant: str) -> LearningRates:
    """Validate rates against the variant's admissibility condition."""
    variant = normalize_variant(variant)
    rates = LearningRates.coerce(rates, game.n_agents)
    if variant == "exp":
        for i, d in enumerate(rates.decay):
            if not (d > 0 and math.isfinite(d)):
                raise InadmissibleRate(f"agent {i}: exponential update needs 0 < eps < 1")
    else:
        for i, e in enumerate(rates.eps):
            if not e * game.max_strategy_cost < 1.0:
                raise InadmissibleRate(
                    f"agent {i}: eps={e} is not below the admissibility bound {game.rate_bound}"
                )
    return rates


# -- single steps -----------------------------------------------------------


def _renormalize(block: np.ndarray) -> np.ndarray:
    total = block.sum()
    if abs(total - 1.0) > DRIFT_TOL:
        raise FloatingPointError(f"probability drift {abs(total - 1.0):.3e} before renormalisation")
    return block / total


def _linear_blocks(blocks, costs, rates: LearningRates) -> list[np.ndarray]:
    out = []
    for i, (b, c) in enumerate(zip(blocks, costs)):
        factor = 1.0 - rates.eps[i] * c
        if np.any(factor <= 0):
            raise InadmissibleRate(
                f"agent {i}: 1 - eps*c <= 0 (eps={rates.eps[i]}, max cost {c.max()})"
            )
        out.append(_renormalize(b * factor / (b @ factor)))
    return out


def _exponential_blocks(blocks, costs, rates: LearningRates) -> list[np.ndarray]:
    out = []
    for i, (b, c) in enumerate(zip(blocks, costs)):
        d = rates.decay[i]
        if not (d > 0 and math.isfinite(d)):
            raise InadmissibleRate(f"agent {i}: exponential update needs 0 < eps < 1")
        logits = -d * c
        support = b > 0
        w = np.where(support, b * np.exp(logits - logits[support].max()), 0.0)
        out.append(_renormalize(w / w.sum()))
    return out


_UPDATES = {"linear": _linear_blocks, "exp": _exponential_blocks}


def step_linear(game: CongestionGame, p: MixedProfile, rates) -> MixedProfile:
    """One MWU_l update: p_ig * (1 - eps_i c_ig) / (1 - eps_i c_hat_i)."""
    p = check_profile(game, p)
    rates = LearningRates.coerce(rates, game.n_agents)
    costs, _ = evaluate(game, p.blocks)
    return MixedProfile._trusted(_linear_blocks(p.blocks, costs, rates))


def step_exponential(game: CongestionGame, p: MixedProfile, rates) -> MixedProfile:
    """One MWU_e update: p_ig (1 - eps_i)^c_ig, normalised per agent in log space."""
    p = check_profile(game, p)
    rates = LearningRates.coerce(rates, game.n_agents)
    costs, _ = evaluate(game, p.blocks)
    return MixedProfile._trusted(_exponential_blocks(p.blocks, costs, rates))


def stepper(variant: str):
    return step_linear if normalize_variant(variant) == "linear" else step_exponential


def is_fixed_point(
    game: CongestionGame, p: MixedProfile, tol: float = 1e-10, support_tol: float = SUPPORT_TOL
) -> bool:
    """True when every supported strategy costs its agent exactly the agent's average."""
    p = check_profile(game, p)
    costs, _ = evaluate(game, p.blocks)
    for b, c in zip(p.blocks, costs):
        avg = b @ c
        supported = b > support_tol
        if np.max(np.abs(c[supported] - avg)) > tol:
            return False
    return True


# -- trajectories -----------------------------------------------------------


@dataclass(frozen=True)
class Step:
    profile: MixedProfile
    psi: float
    q: float | None
    step_norm: float


@dataclass
class Trajectory:
    """An orbit p(0), p(1), ... with per-step diagnostics.

    ``period`` is set only when ``termination == "cycle_detected"``.
    """

    game: CongestionGame
    variant: Variant
    rates: LearningRates
    initial: MixedProfile
    initial_psi: float
    steps: list[Step] = field(default_factory=list)
    termination: str = "max_iters"
    period: int | None = None
    fp_tol: float = FP_TOL
    cycle_tol: float = CYCLE_TOL

    @property
    def final(self) -> MixedProfile:
        return self.steps[-1].profile if self.steps else self.initial

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    @property
    def psi(self) -> np.ndarray:
        return np.array([self.initial_psi] + [s.psi for s in self.steps])

    @property
    def profiles(self) -> list[MixedProfile]:
        return [self.initial] + [s.profile for s in self.steps]

    def cycle(self) -> list[MixedProfile]:
        """The last ``period`` iterates when a cycle was detected."""
        if self.period is None:
            return []
        return [s.profile for s in self.steps[-self.period :]]

    def metadata(self) -> dict:
        return {
            "game_sha256": self.game.digest(),
            "game_name": self.game.name,
            "variant": self.variant,
            "rates": self.rates.to_dict(),
            "fp_tol": self.fp_tol,
            "cycle_tol": self.cycle_tol,
            "termination": self.termination,
            "period": self.period,
            "n_steps": self.n_steps,
        }

    def to_csv(self) -> str:
        """CSV rows t, psi, q, step_norm, p[i][g]... after a ``# {json}`` metadata line."""
        buf = io.StringIO()
        buf.write("# " + json.dumps(self.metadata(), sort_keys=True) + "\n")
        writer = csv.writer(buf, lineterminator="\n")
        cols = [f"p[{i}][{g}]" for i, k in enumerate(self.game.n_strategies) for g in range(k)]
        writer.writerow(["t", "psi", "q", "step_norm", *cols])
        q0 = _q_value(self.rates, self.initial_psi) if self.variant == "linear" else None
        writer.writerow(_row(0, self.initial_psi, q0, 0.0, self.initial))
        for t, s in enumerate(self.steps, start=1):
            writer.writerow(_row(t, s.psi, s.q, s.step_norm, s.profile))
        return buf.getvalue()


def _row(t: int, psi: float, q: float | None, norm: float, p: MixedProfile) -> list:
    return [t, repr(float(psi)), "" if q is None else repr(float(q)), repr(float(norm)), *(repr(float(v)) for v in p.flat)]


def read_trajectory_csv(text: str) -> tuple[dict, list[dict[str, str]]]:
    """Parse :meth:`Trajectory.to_csv` output back into metadata and rows."""
    first, _, rest = text.partition("\n")
    if not first.startswith("# "):
        raise ValueError("missing metadata header line")
    return json.loads(first[2:]), list(csv.DictReader(io.StringIO(rest)))


def _q_value(rates: LearningRates, psi: float) -> float:
    # On the product of simplices Q equals sum_i 1/eps_i - Psi.
    return sum(1.0 / e for e in rates.eps) - psi


def _separated(points: Iterable[np.ndarray], tol: float) -> bool:
    pts = list(points)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            if np.max(np.abs(pts[a] - pts[b])) <= tol:
                return False
    return True


def run(
    game: CongestionGame,
    p0: MixedProfile,
    rates,
    variant: str = "linear",
    max_iters: int = 10_000,
    fp_tol: float = FP_TOL,
    cycle_tol: float = CYCLE_TOL,
    window: int = WINDOW,
    separation_tol: float = SEPARATION_TOL,
) -> Trajectory:
    """Iterate one of the two updates until it settles, cycles, or runs out of steps.

    A cycle of period k >= 2 is reported when the newest iterate is within
    ``cycle_tol`` of the one k steps earlier and the k iterates in between
    are pairwise more than ``separation_tol`` apart.
    """
    if fp_tol <= 0:
        raise ValueError("fp_tol must be positive")
    variant = normalize_variant(variant)
    p = check_profile(game, p0)
    rates = check_rates(game, rates, variant)
    update = _UPDATES[variant]
    costs, psi = evaluate(game, p.blocks)
    traj = Trajectory(game, variant, rates, p, psi, fp_tol=fp_tol, cycle_tol=cycle_tol)
    x = p.flat
    ring = np.empty((window, x.size))  # ring[t % window] holds iterate t
    for t in range(max_iters):
        blocks = update(p.blocks, costs, rates)
        p_next = MixedProfile._trusted(blocks)
        x_next = np.concatenate(blocks)
        norm = float(np.max(np.abs(x_next - x)))
        costs, psi = evaluate(game, blocks)
        q = _q_value(rates, psi) if variant == "linear" else None
        traj.steps.append(Step(p_next, psi, q, norm))
        if norm < fp_tol:
            traj.termination = "converged"
            return traj
        ring[t % window] = x
        period = _detect_cycle(ring, t, x_next, cycle_tol, separation_tol)
        if period:
            traj.termination = "cycle_detected"
            traj.period = period
            return traj
        p, x = p_next, x_next
    return traj


def _detect_cycle(ring: np.ndarray, t: int, x_next: np.ndarray, tol: float, sep: float) -> int:
    """Smallest lag k >= 2 with iterate t+1-k equal to x_next (0 if none).

    Iterates t+1-k .. t must also be pairwise separated, otherwise a slow
    approach to a fixed point would masquerade as a cycle.
    """
    window = ring.shape[0]
    filled = min(t + 1, window)
    lags = np.arange(2, filled + 1)
    if lags.size == 0:
        return 0
    rows = (t + 1 - lags) % window
    close = np.max(np.abs(ring[rows] - x_next), axis=1) < tol
    if not close.any():
        return 0
    k = int(lags[np.argmax(close)])
    orbit = [ring[(t + 1 - j) % window] for j in range(1, k + 1)]
    return k if _separated(orbit, sep) else 0
