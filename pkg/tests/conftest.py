import math

import numpy as np
import pytest

from dgcris import bdris as bd
from dgcris.channel import make_channel_set
from dgcris.grouping import uniform_adjacent
from dgcris.manifold import retract


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_stiefel(rng, n):
    return retract(np.zeros((2 * n, n), dtype=complex), crandn(rng, 2 * n, n))


def random_pair(rng, grouping, num_cells=None):
    blocks = [bd.split_block(random_stiefel(rng, len(s))) for s in grouping.subsets]
    return bd.restore(blocks, grouping, num_cells)


def random_channels(rng, num_cells=8, num_users=3, num_bs=3, num_reflective=None):
    if num_reflective is None:
        num_reflective = int(rng.integers(0, num_users + 1))
    sides = ["reflective"] * num_reflective + ["transmissive"] * (num_users - num_reflective)
    return make_channel_set(crandn(rng, num_cells, num_bs), crandn(rng, num_users, num_cells),
                            sides)


def random_scenario(rng, num_cells=8, num_groups=2, **kw):
    ch = random_channels(rng, num_cells, **kw)
    return ch, random_pair(rng, uniform_adjacent(num_cells, num_groups), num_cells)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
