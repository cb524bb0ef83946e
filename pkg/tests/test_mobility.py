import math

import numpy as np
import pytest
from scipy import stats

from census.mobility import (GaussMarkov, Kinematics, RandomWalk2D, RandomWaypoint, make_mobility,
                             reflect, step_mobility)
from census.world import InvalidParameter, derive_world

SIDE = 10.0


def one_node(x, y, heading, speed, leg=1e9):
    return Kinematics(np.array([[x, y]], dtype=float), np.array([heading], dtype=float),
                      np.array([speed], dtype=float), leg_remaining=np.array([leg], dtype=float))


def test_zero_speed_stays_put():
    model = RandomWalk2D(v_low=0.0, v_high=0.0)
    rng = np.random.default_rng(0)
    k = model.init(20, SIDE, rng)
    before = k.position.copy()
    step_mobility(model, k, 1.0, SIDE, rng)
    assert np.array_equal(k.position, before)


def test_straight_line_interior():
    k = one_node(3.0, 4.0, 0.0, 1.0)
    step_mobility(RandomWalk2D(v_low=1, v_high=1), k, 1.0, SIDE, np.random.default_rng(0))
    assert k.position[0] == pytest.approx([4.0, 4.0])


def test_wall_reflection():
    k = one_node(SIDE - 0.5, 5.0, 0.0, 1.0)
    step_mobility(RandomWalk2D(v_low=1, v_high=1), k, 1.0, SIDE, np.random.default_rng(0))
    assert k.position[0] == pytest.approx([SIDE - 0.5, 5.0])
    assert k.heading[0] == pytest.approx(math.pi)


def test_reflect_mirror_oracle():
    # fold by hand: a point 2.5 past the right wall and 0.5 below the floor
    pos, hd = reflect(np.array([[SIDE + 2.5, -0.5]]), np.array([0.3]), SIDE)
    assert pos[0] == pytest.approx([SIDE - 2.5, 0.5])
    assert hd[0] == pytest.approx((-(math.pi - 0.3)) % (2 * math.pi))


def test_reflect_multiple_folds():
    pos, _ = reflect(np.array([[2 * SIDE + 1.0, 3 * SIDE + 2.0]]), np.array([0.0]), SIDE)
    assert pos[0] == pytest.approx([1.0, SIDE - 2.0])


def test_leg_end_draws_new_leg():
    model = RandomWalk2D(leg_len=5.0, v_low=1.0, v_high=1.0)
    k = one_node(5.0, 5.0, 0.0, 1.0, leg=0.5)
    step_mobility(model, k, 1.0, SIDE, np.random.default_rng(3))
    assert k.leg_remaining[0] == pytest.approx(4.5)
    # displacement is 0.5 along the old heading then 0.5 along the new one
    assert np.hypot(*(k.position[0] - [5.5, 5.0])) == pytest.approx(0.5)


@pytest.mark.parametrize("name", ["rw2d", "rwp", "gm"])
def test_models_stay_in_bounds_and_respect_speed(name):
    model = make_mobility(name, 2.0, 4.0)
    rng = np.random.default_rng(1)
    k = model.init(200, SIDE, rng)
    for _ in range(400):
        before = k.position.copy()
        step_mobility(model, k, 0.05, SIDE, rng)
        assert np.all((k.position >= 0) & (k.position <= SIDE))
        # a wall bounce shortens the straight-line displacement, never lengthens it
        assert np.all(np.hypot(*(k.position - before).T) <= 4.0 * 0.05 + 1e-9)


def test_make_mobility_rejects():
    with pytest.raises(InvalidParameter):
        make_mobility("levy", 1, 2)
    with pytest.raises(InvalidParameter):
        RandomWalk2D(v_low=3, v_high=2)
    with pytest.raises(InvalidParameter):
        RandomWaypoint(pause=-1)
    with pytest.raises(InvalidParameter):
        GaussMarkov(alpha=1.5)


def test_step_rejects_nonpositive_dt():
    model = RandomWalk2D()
    rng = np.random.default_rng(0)
    k = model.init(3, SIDE, rng)
    with pytest.raises(InvalidParameter):
        step_mobility(model, k, 0.0, SIDE, rng)


def test_waypoint_arrives_and_pauses():
    model = RandomWaypoint(pause=1.0, v_low=1.0, v_high=1.0)
    k = Kinematics(np.array([[1.0, 1.0]]), np.array([0.0]), np.array([1.0]),
                   target=np.array([[1.5, 1.0]]), pause_remaining=np.zeros(1))
    step_mobility(model, k, 0.75, SIDE, np.random.default_rng(0))
    assert k.position[0] == pytest.approx([1.5, 1.0])
    assert k.pause_remaining[0] == pytest.approx(0.75)


def test_random_walk_positions_stay_uniform():
    model = RandomWalk2D(leg_len=20.0, v_low=2.0, v_high=4.0)
    rng = np.random.default_rng(8)
    side = 100.0
    k = model.init(3000, side, rng)
    for _ in range(150):
        step_mobility(model, k, 1.0, side, rng)
    cells = np.minimum((k.position // (side / 4)).astype(int), 3)
    counts = np.bincount(cells[:, 0] * 4 + cells[:, 1], minlength=16)
    assert stats.chisquare(counts).pvalue > 0.01


@pytest.mark.parametrize("d", [7.0, 10.0, 13.0])
def test_mean_degree_tracks_density(d):
    w = derive_world(500, d, 100.0)
    model = RandomWalk2D()
    rng = np.random.default_rng(int(d))
    k = model.init(500, w.side, rng)
    degrees = []
    for _ in range(20):
        for _ in range(100):
            step_mobility(model, k, 0.05, w.side, rng)
        diff = k.position[:, None, :] - k.position[None, :, :]
        adj = np.einsum("ijk,ijk->ij", diff, diff) <= 100.0 ** 2
        degrees.append(adj.sum() / 500 - 1)
    assert np.mean(degrees) == pytest.approx(d, rel=0.10)


def test_reflection_conserves_speed():
    model = RandomWalk2D(leg_len=1e9, v_low=3.0, v_high=5.0)
    rng = np.random.default_rng(2)
    k = model.init(100, SIDE, rng)
    speed = k.speed.copy()
    for _ in range(200):
        step_mobility(model, k, 0.5, SIDE, rng)
    assert np.array_equal(k.speed, speed)
    assert np.allclose(np.hypot(*k.velocity.T), speed)
