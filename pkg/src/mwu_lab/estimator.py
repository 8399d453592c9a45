"""scikit-learn style wrapper around :func:`mwu_lab.dynamics.run`."""

from __future__ import annotations

from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .dynamics import CYCLE_TOL, FP_TOL, check_rates, normalize_variant, run, stepper
from .game import CongestionGame, MixedProfile, check_profile, nash_residual


class MWUDynamics(BaseEstimator):
    """Fit = run the dynamics on a game; transform = apply one update.

    ``eps=None`` picks half of the admissible range, which is safe for both
    variants.
    """

    def __init__(
        self,
        variant: str = "linear",
        eps=None,
        max_iter: int = 10_000,
        fp_tol: float = FP_TOL,
        cycle_tol: float = CYCLE_TOL,
    ) -> None:
        self.variant = variant
        self.eps = eps
        self.max_iter = max_iter
        self.fp_tol = fp_tol
        self.cycle_tol = cycle_tol

    def _rates(self, game: CongestionGame):
        variant = normalize_variant(self.variant)
        eps = self.eps if self.eps is not None else 0.5 * min(1.0, game.rate_bound)
        return check_rates(game, eps, variant)

    def fit(self, game: CongestionGame, p0=None) -> MWUDynamics:
        if not isinstance(game, CongestionGame):
            raise TypeError(f"expected a CongestionGame, got {type(game).__name__}")
        start = MixedProfile.uniform(game) if p0 is None else check_profile(game, p0)
        self.game_ = game
        self.rates_ = self._rates(game)
        self.trajectory_ = run(
            game, start, self.rates_, self.variant,
            max_iters=self.max_iter, fp_tol=self.fp_tol, cycle_tol=self.cycle_tol,
        )
        self.profile_ = self.trajectory_.final
        self.termination_ = self.trajectory_.termination
        self.period_ = self.trajectory_.period
        self.n_iter_ = self.trajectory_.n_steps
        return self

    def transform(self, p) -> MixedProfile:
        check_is_fitted(self, "profile_")
        return stepper(self.variant)(self.game_, check_profile(self.game_, p), self.rates_)

    def predict(self, p=None) -> MixedProfile:
        """Where the dynamics end up from ``p`` (the fitted limit if omitted)."""
        check_is_fitted(self, "profile_")
        if p is None:
            return self.profile_
        traj = run(
            self.game_, check_profile(self.game_, p), self.rates_, self.variant,
            max_iters=self.max_iter, fp_tol=self.fp_tol, cycle_tol=self.cycle_tol,
        )
        return traj.final

    def score(self, p=None) -> float:
        """Negative Nash residual, so larger is better."""
        check_is_fitted(self, "profile_")
        target = self.profile_ if p is None else check_profile(self.game_, p)
        return -nash_residual(self.game_, target)
