"""Multiplicative-weights dynamics in congestion games.

The core is functional: build a :class:`CongestionGame`, pick a
:class:`MixedProfile` and call :func:`run` with either update variant.
"""

from .baum_eagon import SimplexPolynomial, baum_eagon_step, build_q, q_rate_limits, q_value
from .dynamics import LearningRates, Trajectory, is_fixed_point, parse_rate, run, step_exponential, step_linear
from .estimator import MWUDynamics
from .exceptions import (
    AsymmetricGame,
    CollapsedOrbit,
    DegenerateDenominator,
    DegenerateMap,
    GameValidationError,
    InadmissibleRate,
    MWULabError,
    NegativeCoefficient,
    NoSignChange,
    PolynomialTooLarge,
    ProfileError,
)
from .game import (
    CongestionGame,
    MixedProfile,
    expected_cost,
    expected_potential,
    expected_strategy_costs,
    game1,
    game2,
    load_game,
    nash_residual,
    potential,
    resolve_game,
)

__version__ = "0.1.0"

__all__ = [
    "AsymmetricGame",
    "CollapsedOrbit",
    "CongestionGame",
    "DegenerateDenominator",
    "DegenerateMap",
    "GameValidationError",
    "InadmissibleRate",
    "LearningRates",
    "MWUDynamics",
    "MWULabError",
    "MixedProfile",
    "NegativeCoefficient",
    "NoSignChange",
    "PolynomialTooLarge",
    "ProfileError",
    "SimplexPolynomial",
    "Trajectory",
    "baum_eagon_step",
    "build_q",
    "expected_cost",
    "expected_potential",
    "expected_strategy_costs",
    "game1",
    "game2",
    "is_fixed_point",
    "load_game",
    "nash_residual",
    "parse_rate",
    "potential",
    "q_rate_limits",
    "q_value",
    "resolve_game",
    "run",
    "step_exponential",
    "step_linear",
]
