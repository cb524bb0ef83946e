"""Deployment geometry, seeded random streams and the unit-disk broadcast channel."""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree


class InvalidParameter(ValueError):
    """Raised when a configuration value is outside its valid domain."""


@dataclass(frozen=True)
class WorldConfig:
    n_nodes: int
    density_d: float
    range_R: float
    side: float
    loss_prob: float = 0.0
    slot_dt: float = 0.05

    def __post_init__(self):
        if self.n_nodes < 1:
            raise InvalidParameter(f"n_nodes must be >= 1, got {self.n_nodes}")
        if not self.density_d > 0:
            raise InvalidParameter(f"density must be positive, got {self.density_d}")
        if not self.range_R > 0:
            raise InvalidParameter(f"range must be positive, got {self.range_R}")
        if not 0.0 <= self.loss_prob < 1.0:
            raise InvalidParameter(f"loss_prob must be in [0, 1), got {self.loss_prob}")
        if not self.slot_dt > 0:
            raise InvalidParameter(f"slot_dt must be positive, got {self.slot_dt}")

    @property
    def area(self) -> float:
        return self.side * self.side


def derive_world(n: int, d: float, R: float, loss: float = 0.0, dt: float = 0.05) -> WorldConfig:
    """Square deployment whose side keeps the mean unit-disk neighbourhood at ``d``.

    ``N / side**2 == d / (pi R**2)``, so the side grows as sqrt(N) while range and
    density stay fixed.
    """
    if not d > 0:
        raise InvalidParameter(f"density must be positive, got {d}")
    if not R > 0:
        raise InvalidParameter(f"range must be positive, got {R}")
    if n < 1:
        raise InvalidParameter(f"n must be >= 1, got {n}")
    side = math.sqrt(n * math.pi * R * R / d)
    return WorldConfig(n_nodes=n, density_d=d, range_R=R, side=side, loss_prob=loss, slot_dt=dt)


def _label_key(label) -> int:
    digest = hashlib.blake2b(repr(label).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def rng_stream(seed: int, *labels) -> np.random.Generator:
    """Independent generator for ``(seed, labels)``.

    Labels are hashed (stable across processes, unlike ``hash()``) into the
    SeedSequence spawn key, so every (trial, purpose) pair gets its own stream
    regardless of the order in which trials execute.
    """
    key = tuple(_label_key(lab) for lab in labels)
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key))


def neighbors(positions, R: float, i: int) -> set[int]:
    """Indices within Euclidean distance ``R`` of node ``i`` (inclusive), excluding ``i``."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    if not 0 <= i < len(pos):
        raise IndexError(i)
    d2 = np.sum((pos - pos[i]) ** 2, axis=1)
    hits = np.flatnonzero(d2 <= R * R)
    return {int(j) for j in hits if j != i}


class Channel:
    """Unit-disk broadcast medium with independent Bernoulli loss per receiver.

    Positions are frozen within a slot; callers must ``invalidate()`` after
    moving nodes so that the spatial index is rebuilt lazily.
    """

    # below this many senders a direct distance scan beats building a tree
    TREE_THRESHOLD = 24

    def __init__(self, config: WorldConfig, rng: np.random.Generator):
        self.config = config
        self.rng = rng
        self.R = config.range_R
        self._r2 = config.range_R ** 2
        self.positions = np.zeros((config.n_nodes, 2))
        self._tree = None

    def set_positions(self, positions: np.ndarray) -> None:
        self.positions = positions
        self._tree = None

    def invalidate(self) -> None:
        self._tree = None

    def _lossy(self, receivers: np.ndarray) -> np.ndarray:
        p = self.config.loss_prob
        if p <= 0.0 or len(receivers) == 0:
            return receivers
        keep = self.rng.random(len(receivers)) >= p
        return receivers[keep]

    def in_range(self, sender: int) -> np.ndarray:
        """All current neighbours of ``sender`` (no loss applied), ascending."""
        pos = self.positions
        d2 = np.sum((pos - pos[sender]) ** 2, axis=1)
        d2[sender] = np.inf
        return np.flatnonzero(d2 <= self._r2)

    def component(self, node: int) -> np.ndarray:
        """Nodes connected to ``node`` over the current unit-disk graph (loss ignored)."""
        tree = cKDTree(self.positions)
        pairs = tree.query_pairs(self.R, output_type="ndarray")
        n = len(self.positions)
        g = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, labels = connected_components(g, directed=False)
        return np.flatnonzero(labels == labels[node])

    def broadcast(self, sender: int) -> np.ndarray:
        """Receivers of one broadcast from ``sender`` after loss, ascending node id."""
        return self._lossy(self.in_range(sender))

    def broadcast_many(self, senders: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Deliver one broadcast from each sender.

        Returns parallel ``(sender, receiver)`` arrays ordered by sender then
        receiver id, after loss.
        """
        senders = np.unique(np.asarray(senders, dtype=np.intp))
        if len(senders) == 0:
            empty = np.zeros(0, dtype=np.intp)
            return empty, empty
        if len(senders) < self.TREE_THRESHOLD:
            pos = self.positions
            diff = pos[None, :, :] - pos[senders][:, None, :]
            d2 = np.einsum("ijk,ijk->ij", diff, diff)
            d2[np.arange(len(senders)), senders] = np.inf
            si, rcv = np.nonzero(d2 <= self._r2)
            src = senders[si]
        else:
            if self._tree is None:
                self._tree = cKDTree(self.positions)
            lists = self._tree.query_ball_point(self.positions[senders], self.R * (1 + 1e-12))
            lens = np.fromiter((len(x) for x in lists), dtype=np.intp, count=len(lists))
            if lens.sum() == 0:
                empty = np.zeros(0, dtype=np.intp)
                return empty, empty
            src = np.repeat(senders, lens)
            rcv = np.concatenate([np.asarray(x, dtype=np.intp) for x in lists if x])
            # the tree query uses a padded radius; re-check exactly and drop self
            d2 = np.sum((self.positions[rcv] - self.positions[src]) ** 2, axis=1)
            ok = (d2 <= self._r2) & (rcv != src)
            src, rcv = src[ok], rcv[ok]
            order = np.lexsort((rcv, src))
            src, rcv = src[order], rcv[order]
        p = self.config.loss_prob
        if p > 0.0 and len(rcv):
            keep = self.rng.random(len(rcv)) >= p
            src, rcv = src[keep], rcv[keep]
        return src, rcv
