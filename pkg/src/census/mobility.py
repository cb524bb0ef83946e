"""Node kinematics for the three mobility models, vectorised over all nodes.

All models keep nodes inside ``[0, side]^2``. Random walk and Gauss-Markov
nodes bounce off the walls by specular reflection; random-waypoint nodes never
leave because their targets are drawn inside the square.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .world import InvalidParameter

TWO_PI = 2.0 * math.pi


@dataclass
class Kinematics:
    """Per-node motion state. Arrays are indexed by node id."""

    position: np.ndarray
    heading: np.ndarray
    speed: np.ndarray
    # random walk: distance left on the current leg
    leg_remaining: np.ndarray | None = None
    # random waypoint
    target: np.ndarray | None = None
    pause_remaining: np.ndarray | None = None
    # Gauss-Markov: seconds until the next velocity update
    until_update: np.ndarray | None = None
    # cached speed * (cos, sin) of heading; rebuilt when it goes stale
    velocity: np.ndarray | None = None

    @property
    def n(self) -> int:
        return len(self.position)

    def copy(self) -> "Kinematics":
        def c(a):
            return None if a is None else a.copy()

        return Kinematics(c(self.position), c(self.heading), c(self.speed),
                          c(self.leg_remaining), c(self.target), c(self.pause_remaining),
                          c(self.until_update), c(self.velocity))


def _wrap(h):
    """Angles into ``[0, 2 pi)``; ``mod`` of a tiny negative angle rounds up to 2 pi itself."""
    h = np.mod(h, TWO_PI)
    return np.where(h >= TWO_PI, 0.0, h)


def reflect(position: np.ndarray, heading: np.ndarray, side: float):
    """Fold coordinates back into ``[0, side]`` and mirror headings.

    Works for any number of wall hits in one step: an odd number of folds along
    an axis flips the velocity component on that axis.
    """
    pos = np.array(position, dtype=float, copy=True).reshape(-1, 2)
    hd = np.array(heading, dtype=float, copy=True).reshape(-1)
    out = np.flatnonzero(((pos < 0.0) | (pos > side)).any(axis=1))
    if len(out) == 0:
        return pos, hd
    p = pos[out]
    folds = np.floor(p / side)
    rem = p - folds * side
    odd = (folds.astype(np.int64) % 2) == 1
    # clip guards subnormals whose quotient underflows to -0.0
    pos[out] = np.clip(np.where(odd, side - rem, rem), 0.0, side)
    h = hd[out]
    h = np.where(odd[:, 0], math.pi - h, h)
    h = np.where(odd[:, 1], -h, h)
    hd[out] = _wrap(h)
    return pos, hd


def _fold(v: float, side: float) -> tuple[float, bool]:
    """Scalar version of the fold in :func:`reflect`; also says whether the axis flipped."""
    if 0.0 <= v <= side:
        return v, False
    n = math.floor(v / side)
    rem = min(max(v - n * side, 0.0), side)
    return (side - rem, True) if n % 2 else (rem, False)


def _check_speeds(v_low, v_high):
    if v_low < 0 or v_high < v_low:
        raise InvalidParameter(f"need 0 <= v_low <= v_high, got {v_low}, {v_high}")


@dataclass(frozen=True)
class RandomWalk2D:
    """Pick a uniform direction and a speed in ``[v_low, v_high]``, travel ``leg_len``, repeat."""

    leg_len: float = 100.0
    v_low: float = 2.0
    v_high: float = 4.0
    name: str = field(default="rw2d", init=False)

    def __post_init__(self):
        if not self.leg_len > 0:
            raise InvalidParameter(f"leg_len must be positive, got {self.leg_len}")
        _check_speeds(self.v_low, self.v_high)

    def init(self, n: int, side: float, rng: np.random.Generator) -> Kinematics:
        pos = rng.random((n, 2)) * side
        return Kinematics(pos, rng.random(n) * TWO_PI, rng.uniform(self.v_low, self.v_high, n),
                          leg_remaining=rng.random(n) * self.leg_len)

    def step(self, k: Kinematics, dt: float, side: float, rng: np.random.Generator) -> Kinematics:
        if dt <= 0:
            raise InvalidParameter("dt must be positive")
        if k.velocity is None:
            k.velocity = np.column_stack((np.cos(k.heading), np.sin(k.heading))) * k.speed[:, None]
        # fast path for nodes that neither finish a leg nor touch a wall this step
        half = 0.5 * side
        new = k.position + k.velocity * dt
        hard = (k.leg_remaining <= k.speed * dt) | (np.abs(new - half) > half).any(axis=1)
        rest = np.flatnonzero(hard)
        if len(rest) == 0:
            k.position = new
            k.leg_remaining -= k.speed * dt
            return k
        keep = k.position[rest]
        k.position = new
        k.position[rest] = keep
        easy = ~hard
        k.leg_remaining[easy] -= k.speed[easy] * dt
        for i in rest.tolist():
            self._advance(k, i, dt, side, rng)
        return k

    def _advance(self, k: Kinematics, i: int, dt: float, side: float, rng: np.random.Generator) -> None:
        """Move one node through any leg ends and wall bounces within ``dt``."""
        left = float(dt)
        x, y = (float(v) for v in k.position[i])
        hd, spd, leg = float(k.heading[i]), float(k.speed[i]), float(k.leg_remaining[i])
        while left > 1e-12 and spd > 0:
            t_leg = leg / spd
            t = min(left, t_leg)
            d = spd * t
            x, fx = _fold(x + math.cos(hd) * d, side)
            y, fy = _fold(y + math.sin(hd) * d, side)
            if fx:
                hd = math.pi - hd
            if fy:
                hd = -hd
            hd %= TWO_PI
            if hd >= TWO_PI:
                hd = 0.0
            leg -= d
            left -= t
            if t_leg <= t:
                hd = float(rng.random()) * TWO_PI
                spd = float(rng.uniform(self.v_low, self.v_high))
                leg = self.leg_len
        k.position[i] = (x, y)
        k.heading[i], k.speed[i], k.leg_remaining[i] = hd, spd, leg
        k.velocity[i] = (math.cos(hd) * spd, math.sin(hd) * spd)


@dataclass(frozen=True)
class RandomWaypoint:
    """Travel straight to a uniform target at a uniform speed, pause, repeat."""

    pause: float = 2.0
    v_low: float = 2.0
    v_high: float = 4.0
    name: str = field(default="rwp", init=False)

    def __post_init__(self):
        if self.pause < 0:
            raise InvalidParameter(f"pause must be >= 0, got {self.pause}")
        _check_speeds(self.v_low, self.v_high)

    def init(self, n: int, side: float, rng: np.random.Generator) -> Kinematics:
        pos = rng.random((n, 2)) * side
        target = rng.random((n, 2)) * side
        delta = target - pos
        return Kinematics(pos, _wrap(np.arctan2(delta[:, 1], delta[:, 0])),
                          rng.uniform(self.v_low, self.v_high, n),
                          target=target, pause_remaining=np.zeros(n))

    def step(self, k: Kinematics, dt: float, side: float, rng: np.random.Generator) -> Kinematics:
        if dt <= 0:
            raise InvalidParameter("dt must be positive")
        time_left = np.full(k.n, float(dt))
        active = np.arange(k.n)
        while len(active):
            paused = k.pause_remaining[active] > 0
            # pausing nodes consume their pause first
            p_idx = active[paused]
            if len(p_idx):
                used = np.minimum(k.pause_remaining[p_idx], time_left[p_idx])
                k.pause_remaining[p_idx] -= used
                time_left[p_idx] -= used
                done = p_idx[k.pause_remaining[p_idx] <= 1e-12]
                if len(done):
                    k.pause_remaining[done] = 0.0
                    k.target[done] = rng.random((len(done), 2)) * side
                    k.speed[done] = rng.uniform(self.v_low, self.v_high, len(done))
                    d = k.target[done] - k.position[done]
                    k.heading[done] = _wrap(np.arctan2(d[:, 1], d[:, 0]))
            m_idx = active[~paused]
            if len(m_idx):
                delta = k.target[m_idx] - k.position[m_idx]
                gap = np.hypot(delta[:, 0], delta[:, 1])
                spd = k.speed[m_idx]
                reach = spd * time_left[m_idx]
                arrive = reach >= gap
                step = np.where(arrive, gap, reach)
                with np.errstate(invalid="ignore", divide="ignore"):
                    unit = np.where(gap[:, None] > 0, delta / gap[:, None], 0.0)
                k.position[m_idx] = k.position[m_idx] + unit * step[:, None]
                with np.errstate(invalid="ignore", divide="ignore"):
                    t_used = np.where(arrive, np.where(spd > 0, gap / spd, 0.0), time_left[m_idx])
                time_left[m_idx] -= t_used
                arrived = m_idx[arrive]
                if len(arrived):
                    k.position[arrived] = k.target[arrived]
                    k.pause_remaining[arrived] = self.pause if self.pause > 0 else 1e-300
                # a stalled (speed 0) node never arrives; stop its clock
                stalled = m_idx[(~arrive) | (spd <= 0)]
                time_left[stalled] = 0.0
            active = active[time_left[active] > 1e-12]
        return k


@dataclass(frozen=True)
class GaussMarkov:
    """Speed and direction follow first-order Gauss-Markov processes.

    Every ``update_interval`` seconds::

        s <- a*s + (1-a)*mean_speed + sqrt(1-a^2)*N(0, speed_sigma)
        h <- a*h + (1-a)*h_mean     + sqrt(1-a^2)*N(0, direction_sigma)

    with ``h_mean`` taken as the current heading, so the direction drifts as a
    correlated random walk rather than being pulled toward a fixed bearing.
    Speeds are clipped to ``[v_low, v_high]``.
    """

    alpha: float = 0.75
    mean_speed: float = 3.0
    speed_sigma: float = 0.5
    direction_sigma: float = 0.5
    update_interval: float = 1.0
    v_low: float = 2.0
    v_high: float = 4.0
    name: str = field(default="gm", init=False)

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameter(f"alpha must be in [0, 1], got {self.alpha}")
        if not self.update_interval > 0:
            raise InvalidParameter("update_interval must be positive")
        _check_speeds(self.v_low, self.v_high)

    def init(self, n: int, side: float, rng: np.random.Generator) -> Kinematics:
        pos = rng.random((n, 2)) * side
        speed = np.clip(rng.normal(self.mean_speed, self.speed_sigma, n), self.v_low, self.v_high)
        return Kinematics(pos, rng.random(n) * TWO_PI, speed,
                          until_update=rng.random(n) * self.update_interval)

    def _update(self, k: Kinematics, idx: np.ndarray, rng: np.random.Generator) -> None:
        a = self.alpha
        noise = math.sqrt(max(0.0, 1.0 - a * a))
        s = (a * k.speed[idx] + (1 - a) * self.mean_speed
             + noise * rng.normal(0.0, self.speed_sigma, len(idx)))
        k.speed[idx] = np.clip(s, self.v_low, self.v_high)
        h = k.heading[idx]
        k.heading[idx] = _wrap(h + noise * rng.normal(0.0, self.direction_sigma, len(idx)))

    def step(self, k: Kinematics, dt: float, side: float, rng: np.random.Generator) -> Kinematics:
        if dt <= 0:
            raise InvalidParameter("dt must be positive")
        time_left = np.full(k.n, float(dt))
        active = np.arange(k.n)
        while len(active):
            t = np.minimum(time_left[active], k.until_update[active])
            hd = k.heading[active]
            dist = k.speed[active] * t
            new = k.position[active]
            new[:, 0] += np.cos(hd) * dist
            new[:, 1] += np.sin(hd) * dist
            new, hd = reflect(new, hd, side)
            k.position[active] = new
            k.heading[active] = hd
            k.until_update[active] -= t
            time_left[active] -= t
            due = active[k.until_update[active] <= 1e-12]
            if len(due):
                self._update(k, due, rng)
                k.until_update[due] = self.update_interval
            active = active[time_left[active] > 1e-12]
        return k


def step_mobility(model, k: Kinematics, dt: float, side: float, rng: np.random.Generator) -> Kinematics:
    """Advance every node by ``dt`` seconds under ``model`` (in place; also returned)."""
    return model.step(k, dt, side, rng)


MOBILITY_MODELS = {"rw2d": RandomWalk2D, "rwp": RandomWaypoint, "gm": GaussMarkov}


def make_mobility(name: str, v_low: float, v_high: float, **params):
    """Build a model by short name (``rw2d``, ``rwp``, ``gm``) for a speed range."""
    try:
        cls = MOBILITY_MODELS[name]
    except KeyError:
        raise InvalidParameter(f"unknown mobility model {name!r}; choose from {sorted(MOBILITY_MODELS)}")
    if cls is GaussMarkov:
        params.setdefault("mean_speed", 0.5 * (v_low + v_high))
        params.setdefault("speed_sigma", max(0.25 * (v_high - v_low), 1e-9))
    return cls(v_low=v_low, v_high=v_high, **params)
