import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from strategies import game_and_profile, profile_for

from mwu_lab.analysis import random_game
from mwu_lab.dynamics import (
    LearningRates,
    check_rates,
    is_fixed_point,
    normalize_variant,
    parse_rate,
    read_trajectory_csv,
    run,
    step_exponential,
    step_linear,
    stepper,
)
from mwu_lab.exceptions import InadmissibleRate
from mwu_lab.game import MixedProfile, expected_potential, game1, game2


class TestRates:
    def test_exact_decay_from_expression(self) -> None:
        r = parse_rate("1-exp(-40)", 2)
        assert r.decay == (40.0, 40.0)
        assert r.eps == (1.0, 1.0)  # rounds to one in double precision
        assert parse_rate("1 - e^-10").decay == (10.0,)
        assert parse_rate("0.25", 3).eps == (0.25,) * 3

    def test_from_eps_inverts(self) -> None:
        r = LearningRates.from_eps([0.1, 0.5])
        assert r.decay[1] == pytest.approx(math.log(2))

    def test_coerce(self) -> None:
        assert LearningRates.coerce("1-exp(-10)", 2).decay == (10.0, 10.0)
        assert len(LearningRates.coerce(LearningRates.from_eps(0.3), 3)) == 3
        with pytest.raises(InadmissibleRate):
            LearningRates.coerce([0.1, 0.2], 3)
        with pytest.raises(InadmissibleRate):
            LearningRates.from_eps(-0.1)

    def test_admissibility(self) -> None:
        g = game1()  # beta = 1
        check_rates(g, 0.999, "linear")
        with pytest.raises(InadmissibleRate, match="admissibility bound"):
            check_rates(g, 1.0, "linear")
        check_rates(g, "1-exp(-40)", "exp")
        with pytest.raises(InadmissibleRate):
            check_rates(g, 1.5, "exp")

    def test_variant_names(self) -> None:
        assert normalize_variant("exponential") == "exp"
        assert normalize_variant("LIN") == "linear"
        with pytest.raises(ValueError):
            normalize_variant("quadratic")


class TestSteps:
    @settings(max_examples=40, deadline=None)
    @given(game_and_profile(), st.floats(0.05, 0.99))
    def test_linear_matches_enumeration(self, gp, frac) -> None:
        game, p = gp
        eps = [frac * game.rate_bound] * game.n_agents
        got = step_linear(game, p, eps)
        for a, b in zip(got.blocks, oracles.linear_step(game, p.blocks, eps)):
            np.testing.assert_allclose(a, b, atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(game_and_profile(), st.floats(0.1, 60.0))
    def test_exponential_matches_enumeration(self, gp, decay) -> None:
        game, p = gp
        rates = LearningRates.from_decay(decay, game.n_agents)
        got = step_exponential(game, p, rates)
        for a, b in zip(got.blocks, oracles.exp_step(game, p.blocks, rates.decay)):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_huge_decay_stays_finite(self) -> None:
        g = game2()
        p = step_exponential(g, MixedProfile.symmetric(g, 0.3), LearningRates.from_decay(700.0, 2))
        assert np.all(np.isfinite(p.flat))

    def test_support_is_preserved(self) -> None:
        g = random_game(4)
        blocks = [np.r_[0.0, np.full(k - 1, 1.0 / (k - 1))] for k in g.n_strategies]
        p = MixedProfile(blocks)
        for step in (step_linear, step_exponential):
            q = step(g, p, 0.5 * g.rate_bound)
            assert all(b[0] == 0.0 for b in q.blocks)

    def test_inadmissible_linear_step_raises(self) -> None:
        with pytest.raises(InadmissibleRate):
            step_linear(game1(), MixedProfile.symmetric(game1(), 0.3), 1.2)

    def test_pure_profiles_are_fixed(self) -> None:
        g = random_game(9)
        p = MixedProfile.from_pure(g, [0] * g.n_agents)
        assert is_fixed_point(g, p)
        assert step_linear(g, p, 0.5 * g.rate_bound) == p

    def test_stepper(self) -> None:
        assert stepper("linear") is step_linear
        assert stepper("exp") is step_exponential


class TestRun:
    def test_game1_linear_converges_to_half(self) -> None:
        g = game1()
        traj = run(g, MixedProfile.symmetric(g, 0.3), "1-exp(-10)", "linear")
        assert traj.termination == "converged"
        assert abs(traj.final[0][0] - 0.5) < 1e-8

    def test_game1_exp_cycles(self) -> None:
        g = game1()
        traj = run(g, MixedProfile.symmetric(g, 0.3), "1-exp(-10)", "exp")
        assert traj.termination == "cycle_detected" and traj.period == 2
        pts = sorted(p[0][0] for p in traj.cycle())
        assert pts == pytest.approx([0.14479410825606, 0.85520589174394], abs=1e-9)

    def test_starting_at_fixed_point(self) -> None:
        g = game1()
        traj = run(g, MixedProfile.symmetric(g, 0.5), 0.5)
        assert traj.termination == "converged" and traj.n_steps == 1
        assert traj.steps[0].step_norm == 0.0

    def test_slow_convergence_is_not_a_cycle(self) -> None:
        g = game1()
        traj = run(g, MixedProfile.symmetric(g, 0.3), 0.01, "exp", max_iters=20_000)
        assert traj.termination == "converged"

    def test_max_iters(self) -> None:
        g = game2()
        traj = run(g, MixedProfile.symmetric(g, 0.3), "1-exp(-40)", "exp", max_iters=300)
        assert traj.termination == "max_iters" and traj.n_steps == 300

    def test_psi_never_rises_for_linear(self) -> None:
        for seed in range(10):
            g = random_game(seed)
            traj = run(g, profile_for(g, seed), 0.9 * g.rate_bound, max_iters=300)
            assert np.all(np.diff(traj.psi) <= 1e-13)
            assert traj.psi[0] == pytest.approx(expected_potential(g, traj.initial))

    def test_q_recorded_for_linear_only(self) -> None:
        g = game1()
        lin = run(g, MixedProfile.symmetric(g, 0.3), 0.5, max_iters=5)
        assert lin.steps[0].q == pytest.approx(4.0 - lin.steps[0].psi)
        ex = run(g, MixedProfile.symmetric(g, 0.3), 0.5, "exp", max_iters=5)
        assert ex.steps[0].q is None

    def test_csv_roundtrip(self) -> None:
        g = game1()
        traj = run(g, MixedProfile.symmetric(g, 0.3), 0.5, max_iters=10)
        meta, rows = read_trajectory_csv(traj.to_csv())
        assert meta["termination"] == traj.termination
        assert meta["game_sha256"] == g.digest()
        assert len(rows) == traj.n_steps + 1
        assert float(rows[-1]["p[0][0]"]) == traj.final[0][0]
        assert float(rows[0]["psi"]) == traj.psi[0]

    def test_invalid_arguments(self) -> None:
        g = game1()
        with pytest.raises(ValueError):
            run(g, MixedProfile.symmetric(g, 0.3), 0.5, fp_tol=0.0)
        with pytest.raises(InadmissibleRate):
            run(g, MixedProfile.symmetric(g, 0.3), 1.0)
