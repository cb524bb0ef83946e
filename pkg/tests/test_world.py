import math

import numpy as np
import pytest
from scipy.spatial import cKDTree

from census.world import Channel, InvalidParameter, WorldConfig, derive_world, neighbors, rng_stream


def test_derive_world_side():
    w = derive_world(500, 10, 1.0)
    assert w.side == pytest.approx(12.533, abs=1e-3)
    assert derive_world(10, 10, 1.0).side == pytest.approx(math.sqrt(math.pi))


def test_derive_world_mean_degree_oracle():
    # on a torus every node sees a full disc, so the mean degree is exactly d in expectation
    w = derive_world(500, 10, 1.0)
    rng = np.random.default_rng(3)
    means = []
    for _ in range(1000):
        pts = rng.random((500, 2)) * w.side
        tree = cKDTree(pts, boxsize=w.side)
        means.append(2 * len(tree.query_pairs(1.0)) / 500)
    assert np.mean(means) == pytest.approx(10, abs=0.5)


@pytest.mark.parametrize("args", [(500, 10, 0), (500, 0, 1), (0, 10, 1), (500, -1, 1)])
def test_derive_world_rejects(args):
    with pytest.raises(InvalidParameter):
        derive_world(*args)


def test_world_config_rejects_certain_loss():
    with pytest.raises(InvalidParameter):
        WorldConfig(10, 10, 1.0, 2.0, loss_prob=1.0)


def test_neighbors_boundary_inclusive():
    assert neighbors([(0, 0), (1, 0)], 1.0, 0) == {1}
    assert neighbors([(0, 0), (1, 0)], 1.0, 1) == {0}


def test_neighbors_single_and_collinear():
    assert neighbors([(5, 5)], 1.0, 0) == set()
    pts = [(0, 0), (0.6, 0), (1.2, 0)]
    assert [len(neighbors(pts, 1.0, i)) for i in range(3)] == [1, 2, 1]


def test_rng_streams_are_independent_and_stable():
    a = rng_stream(7, "mobility").random(4)
    b = rng_stream(7, "mobility").random(4)
    c = rng_stream(7, "channel").random(4)
    d = rng_stream(8, "mobility").random(4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)


def _star(n_leaves: int, loss: float, seed: int = 0) -> Channel:
    w = WorldConfig(n_leaves + 1, 10, 1.0, 10.0, loss_prob=loss)
    ch = Channel(w, np.random.default_rng(seed))
    ang = np.linspace(0, 2 * np.pi, n_leaves, endpoint=False)
    pos = np.vstack([[5, 5], np.column_stack((5 + 0.5 * np.cos(ang), 5 + 0.5 * np.sin(ang)))])
    ch.set_positions(pos)
    return ch


def test_broadcast_lossless_reaches_all_neighbours():
    ch = _star(5, 0.0)
    assert ch.broadcast(0).tolist() == [1, 2, 3, 4, 5]


def test_broadcast_loss_binomial():
    w = WorldConfig(2, 10, 1.0, 10.0, loss_prob=0.5)
    ch = Channel(w, np.random.default_rng(11))
    ch.set_positions(np.array([[1.0, 1.0], [1.5, 1.0]]))
    got = sum(len(ch.broadcast(0)) for _ in range(1000))
    assert 450 <= got <= 550


@pytest.mark.parametrize("n_senders", [3, 40])
def test_broadcast_many_matches_brute_force(n_senders):
    # both the direct scan and the tree path must agree with pairwise distances
    w = WorldConfig(200, 10, 1.0, 8.0)
    ch = Channel(w, np.random.default_rng(0))
    pos = np.random.default_rng(1).random((200, 2)) * 8.0
    ch.set_positions(pos)
    senders = np.arange(n_senders) * 3
    src, rcv = ch.broadcast_many(senders)
    want = [(s, r) for s in senders for r in range(200)
            if r != s and np.sum((pos[s] - pos[r]) ** 2) <= 1.0]
    assert list(zip(src.tolist(), rcv.tolist())) == [(int(s), r) for s, r in want]


def test_component_matches_neighbour_closure():
    w = WorldConfig(60, 10, 1.0, 6.0)
    ch = Channel(w, np.random.default_rng(0))
    pos = np.random.default_rng(5).random((60, 2)) * 6.0
    ch.set_positions(pos)
    seen, todo = {0}, [0]
    while todo:
        i = todo.pop()
        for j in neighbors(pos, 1.0, i):
            if j not in seen:
                seen.add(j)
                todo.append(j)
    assert set(ch.component(0).tolist()) == seen
