import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings

import oracles
from strategies import game_and_profile, profile_for, small_games

from mwu_lab.analysis import random_game
from mwu_lab.exceptions import GameValidationError, ProfileError
from mwu_lab.game import (
    CongestionGame,
    MixedProfile,
    check_profile,
    edge_loads,
    evaluate,
    expected_cost,
    expected_potential,
    expected_strategy_cost,
    expected_strategy_costs,
    game1,
    game2,
    game_from_dict,
    load_distributions,
    load_game,
    loads_game,
    nash_residual,
    potential,
    pure_cost,
    resolve_game,
)


def _valid_dict():
    return {
        "n_agents": 2,
        "edges": ["a", "b"],
        "strategies": [[["a"], ["b"]], [["a"], ["a", "b"]]],
        "costs": {"a": [1.0, 2.0], "b": [0.5, 0.75]},
    }


class TestValidation:
    def test_roundtrip_json(self) -> None:
        g = game_from_dict(_valid_dict())
        assert loads_game(g.to_json()) == g
        assert g.digest() == loads_game(g.to_json(indent=2)).digest()

    def test_load_from_file(self, tmp_path) -> None:
        path = tmp_path / "g.json"
        path.write_text(json.dumps(_valid_dict()))
        assert load_game(str(path)) == game_from_dict(_valid_dict())
        assert resolve_game(str(path)).n_agents == 2

    @pytest.mark.parametrize(
        "mutate, message",
        [
            (lambda d: d.pop("edges"), "edges: missing field"),
            (lambda d: d.update(n_agents=0), "n_agents"),
            (lambda d: d.update(n_agents="2"), "n_agents: expected an integer"),
            (lambda d: d["strategies"][1].append(["c"]), "strategies[1][2]: unknown edge 'c'"),
            (lambda d: d["strategies"][0].append([]), "strategies[0][2]: strategy is empty"),
            (lambda d: d["costs"].update(a=[1.0]), "costs['a']: expected 2 entries"),
            (lambda d: d["costs"].update(b=[1.0, -1.0]), "costs['b'][1]"),
            (lambda d: d["costs"].pop("b"), "costs: missing table for edge 'b'"),
            (lambda d: d.update(strategies=[[["a"]]]), "strategies: expected 2 agents"),
            (lambda d: d["costs"].update(a=[1.0, "x"]), "costs['a'][1]: expected a number"),
        ],
    )
    def test_field_specific_errors(self, mutate, message) -> None:
        d = _valid_dict()
        mutate(d)
        with pytest.raises(GameValidationError, match=__import__("re").escape(message)):
            game_from_dict(d)

    def test_bad_json_reports_position(self) -> None:
        with pytest.raises(GameValidationError, match=r"line 2, column"):
            loads_game('{"n_agents": 2,\n "edges": [,]}')

    def test_name_not_part_of_identity(self) -> None:
        assert game_from_dict(_valid_dict(), name="x") == game_from_dict(_valid_dict(), name="y")

    def test_builtin_games(self) -> None:
        g1, g2 = game1(), game2()
        assert g1.costs == {"e1": (0.5, 1.0), "e2": (0.5, 1.0)}
        assert g2.costs == {"e1": (0.25, 0.5), "e2": (1.4 / 4, 2 * 1.4 / 4)}
        assert g1.is_symmetric_pair() and g2.is_symmetric_pair()
        assert g1.rate_bound == 1.0
        assert g2.max_strategy_cost == pytest.approx(0.7)


class TestPureQuantities:
    def test_loads_and_costs(self) -> None:
        g = game_from_dict(_valid_dict())
        assert edge_loads(g, (0, 1)).tolist() == [2, 1]
        assert pure_cost(g, (0, 1), 0) == 2.0
        assert pure_cost(g, (0, 1), 1) == 2.5
        assert potential(g, (0, 1)) == 1.0 + 2.0 + 0.5

    @settings(max_examples=30, deadline=None)
    @given(small_games())
    def test_potential_tracks_unilateral_deviations(self, game) -> None:
        for pure in itertools.islice(itertools.product(*map(range, game.n_strategies)), 50):
            for i in range(game.n_agents):
                for alt in range(game.n_strategies[i]):
                    other = list(pure)
                    other[i] = alt
                    d_cost = pure_cost(game, other, i) - pure_cost(game, pure, i)
                    d_phi = potential(game, other) - potential(game, pure)
                    assert d_cost == pytest.approx(d_phi, abs=1e-12)

    def test_bad_pure_profile(self) -> None:
        with pytest.raises(ProfileError, match="agent 1: strategy index 5"):
            pure_cost(game1(), (0, 5), 0)


class TestMixedQuantities:
    @settings(max_examples=40, deadline=None)
    @given(game_and_profile())
    def test_costs_match_enumeration(self, gp) -> None:
        game, p = gp
        ref = oracles.strategy_costs(game, p.blocks)
        for got, want in zip(expected_strategy_costs(game, p), ref):
            np.testing.assert_allclose(got, want, atol=1e-12)
        assert expected_potential(game, p) == pytest.approx(oracles.psi(game, p.blocks), abs=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(game_and_profile())
    def test_batched_evaluation_agrees(self, gp) -> None:
        game, p = gp
        costs, psi = evaluate(game, p.blocks)
        for got, want in zip(costs, expected_strategy_costs(game, p)):
            np.testing.assert_allclose(got, want, atol=1e-13)
        assert psi == pytest.approx(expected_potential(game, p), abs=1e-13)

    def test_monte_carlo(self) -> None:
        game = random_game(7, 3, 4, 3)
        p = profile_for(game, 1)
        mc = oracles.monte_carlo_costs(game, p.blocks, 20_000, seed=3)
        for got, want in zip(expected_strategy_costs(game, p), mc):
            np.testing.assert_allclose(got, want, atol=0.02)

    @settings(max_examples=25, deadline=None)
    @given(game_and_profile())
    def test_cost_differences_are_potential_gradient(self, gp) -> None:
        # c_ig - c_ih equals the difference of partial derivatives of the
        # multilinear potential; check it with central finite differences.
        game, p = gp
        h = 1e-6
        costs = expected_strategy_costs(game, p)
        for i, k in enumerate(game.n_strategies):
            grad = []
            for g in range(k):
                up = [b.copy() for b in p.blocks]
                dn = [b.copy() for b in p.blocks]
                up[i][g] += h
                dn[i][g] -= h
                grad.append((oracles.psi(game, up) - oracles.psi(game, dn)) / (2 * h))
            grad = np.array(grad)
            np.testing.assert_allclose(grad - grad[0], costs[i] - costs[i][0], atol=1e-7)

    def test_load_distribution_sums_and_exclusion(self) -> None:
        game = random_game(3)
        p = profile_for(game, 0)
        dist = load_distributions(game, p)
        np.testing.assert_allclose(dist.sum(axis=1), 1.0)
        loo = load_distributions(game, p, exclude=0)
        assert np.all(loo[:, -1] == 0.0)

    def test_expected_cost_and_single_strategy(self) -> None:
        game = random_game(11)
        p = profile_for(game, 2)
        c = expected_strategy_costs(game, p)
        assert expected_cost(game, p, 0) == pytest.approx(p[0] @ c[0])
        assert expected_strategy_cost(game, p, 1, 0) == pytest.approx(c[1][0])
        with pytest.raises(ProfileError):
            expected_strategy_cost(game, p, 0, 99)

    def test_nash_residual(self) -> None:
        g = game1()
        assert nash_residual(g, MixedProfile.from_pure(g, (0, 1))) == 0.0
        assert nash_residual(g, MixedProfile.symmetric(g, 0.5)) == pytest.approx(0.0, abs=1e-15)
        assert nash_residual(g, MixedProfile.from_pure(g, (0, 0))) == pytest.approx(0.5)
        g2 = game2()
        assert nash_residual(g2, MixedProfile.symmetric(g2, 0.75)) == pytest.approx(0.0, abs=1e-15)

    def test_rate_bound_dominates_sampled_costs(self) -> None:
        rng = np.random.default_rng(0)
        for seed in range(20):
            game = random_game(seed)
            top = 0.0
            for _ in range(50):
                p = MixedProfile([rng.dirichlet(np.ones(k)) for k in game.n_strategies])
                top = max(top, max(c.max() for c in expected_strategy_costs(game, p)))
            assert top <= game.max_strategy_cost + 1e-12


class TestMixedProfile:
    def test_read_only_and_normalised(self) -> None:
        p = MixedProfile([[1, 3], [2, 2]])
        np.testing.assert_allclose(p.flat, [0.25, 0.75, 0.5, 0.5])
        with pytest.raises(ValueError):
            p[0][0] = 1.0

    def test_equality_and_hash(self) -> None:
        a = MixedProfile([[0.5, 0.5]])
        assert a == MixedProfile([[0.5, 0.5]]) and hash(a) == hash(MixedProfile([[0.5, 0.5]]))
        assert a.distance(MixedProfile([[0.25, 0.75]])) == 0.25

    @pytest.mark.parametrize("blocks", [[[0.5, -0.5]], [[0.0, 0.0]], [[]], [[np.nan, 1.0]]])
    def test_rejects_invalid(self, blocks) -> None:
        with pytest.raises(ProfileError):
            MixedProfile(blocks)

    def test_check_profile(self) -> None:
        g = game1()
        with pytest.raises(ProfileError, match="sum to"):
            check_profile(g, [[0.5, 0.6], [0.5, 0.5]])
        with pytest.raises(ProfileError, match="shape"):
            check_profile(g, MixedProfile([[1.0], [1.0]]))
        assert check_profile(g, [[0.5, 0.5], [1.0, 0.0]]).sizes == (2, 2)

    def test_constructors(self) -> None:
        g = game1()
        assert MixedProfile.symmetric(g, 0.3).tolist() == [[0.3, 0.7], [0.3, 0.7]]
        assert MixedProfile.from_flat(g, [1, 0, 0, 1]) == MixedProfile.from_pure(g, (0, 1))
        assert MixedProfile.uniform(g).tolist() == [[0.5, 0.5], [0.5, 0.5]]
        with pytest.raises(ProfileError):
            MixedProfile.from_flat(g, [1, 0, 0])


def test_direct_constructor_normalises_containers() -> None:
    g = CongestionGame(1, ["x"], [[["x"]]], {"x": [1]})
    assert g.strategies == ((("x",),),)
    assert g.costs["x"] == (1.0,)
