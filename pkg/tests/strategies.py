"""Hypothesis strategies shared by the test modules."""

import numpy as np
from hypothesis import strategies as st

from mwu_lab.analysis import random_game, random_interior_profile
from mwu_lab.game import MixedProfile

seeds = st.integers(min_value=0, max_value=2**31 - 1)


@st.composite
def small_games(draw, max_agents=3, max_edges=4, max_strategies=3):
    return random_game(draw(seeds), max_agents, max_edges, max_strategies)


@st.composite
def game_and_profile(draw, **kw):
    game = draw(small_games(**kw))
    rng = np.random.default_rng(draw(seeds))
    return game, random_interior_profile(game, rng, 0.01)


def profile_for(game, seed, margin=0.01) -> MixedProfile:
    return random_interior_profile(game, np.random.default_rng(seed), margin)
