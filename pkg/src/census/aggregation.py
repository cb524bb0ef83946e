"""Aggregate payloads carried by tokens, checkpoint de-duplication and flood exfiltration."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Union

import numpy as np


class AggregateMismatch(TypeError):
    """Two aggregates of different kinds (or histogram bucketings) were combined."""


@dataclass(frozen=True)
class Count:
    n: int = 0


@dataclass(frozen=True)
class Sum:
    total: float = 0.0


@dataclass(frozen=True)
class Min:
    v: float = math.inf


@dataclass(frozen=True)
class Max:
    v: float = -math.inf


@dataclass(frozen=True)
class Average:
    """Exact mean carried as a running (total, n) pair."""

    total: float = 0.0
    n: int = 0

    @property
    def mean(self) -> float:
        return self.total / self.n if self.n else math.nan


@dataclass(frozen=True)
class Histogram:
    bucket_edges: tuple
    counts: tuple

    def __post_init__(self):
        if len(self.counts) != len(self.bucket_edges) - 1:
            raise ValueError("histogram needs len(edges) - 1 counts")


Aggregate = Union[Count, Sum, Min, Max, Average, Histogram]

KINDS = ("count", "sum", "min", "max", "average", "histogram")


def merge(a: Aggregate, b: Aggregate) -> Aggregate:
    if type(a) is not type(b):
        raise AggregateMismatch(f"cannot merge {type(a).__name__} with {type(b).__name__}")
    if isinstance(a, Count):
        return Count(a.n + b.n)
    if isinstance(a, Sum):
        return Sum(a.total + b.total)
    if isinstance(a, Min):
        return Min(min(a.v, b.v))
    if isinstance(a, Max):
        return Max(max(a.v, b.v))
    if isinstance(a, Average):
        return Average(a.total + b.total, a.n + b.n)
    if a.bucket_edges != b.bucket_edges:
        raise AggregateMismatch("histograms use different bucket edges")
    return Histogram(a.bucket_edges, tuple(x + y for x, y in zip(a.counts, b.counts)))


def identity(kind: str, bucket_edges: tuple = ()) -> Aggregate:
    if kind == "count":
        return Count(0)
    if kind == "sum":
        return Sum(0.0)
    if kind == "min":
        return Min()
    if kind == "max":
        return Max()
    if kind == "average":
        return Average()
    if kind == "histogram":
        edges = tuple(float(e) for e in bucket_edges)
        return Histogram(edges, (0,) * (len(edges) - 1))
    raise ValueError(f"unknown aggregate kind {kind!r}; choose from {KINDS}")


def from_datum(kind: str, value: float, bucket_edges: tuple = ()) -> Aggregate:
    """The aggregate a single node contributes when it is first visited."""
    if kind == "count":
        return Count(1)
    if kind == "sum":
        return Sum(float(value))
    if kind == "min":
        return Min(float(value))
    if kind == "max":
        return Max(float(value))
    if kind == "average":
        return Average(float(value), 1)
    if kind == "histogram":
        base = identity(kind, bucket_edges)
        edges = base.bucket_edges
        # right-closed last bucket, values outside the edges are clamped
        idx = int(np.clip(np.searchsorted(edges, value, side="right") - 1, 0, len(edges) - 2))
        counts = list(base.counts)
        counts[idx] = 1
        return Histogram(edges, tuple(counts))
    raise ValueError(f"unknown aggregate kind {kind!r}; choose from {KINDS}")


def kind_of(agg: Aggregate) -> str:
    return type(agg).__name__.lower()


def merge_all(aggs: Iterable[Aggregate], start: Aggregate | None = None) -> Aggregate | None:
    out = start
    for a in aggs:
        out = a if out is None else merge(out, a)
    return out


def dedup_and_total(tokens, empty: Aggregate | None = None) -> Aggregate | None:
    """Combine final tokens so that every node's datum is counted once.

    A token id names one chain of custody; every live token and every
    checkpoint record is a snapshot of some chain. Snapshots later in a chain
    (higher transfer count) contain the earlier ones, so only the most advanced
    snapshot per id is merged. Returns ``empty`` for an empty token list.
    """
    best: dict = {}
    for tok in tokens:
        for rec in tok.checkpoints:
            cur = best.get(rec.old_token_id)
            if cur is None or rec.version > cur[0]:
                best[rec.old_token_id] = (rec.version, rec.frozen_aggregate)
        cur = best.get(tok.token_id)
        if cur is None or tok.transfer_count >= cur[0]:
            best[tok.token_id] = (tok.transfer_count, tok.aggregate)
    return merge_all((best[k][1] for k in sorted(best)), start=empty)


@dataclass
class ExfilReport:
    aggregates: dict
    checkpoint_ids: tuple
    total: Aggregate | None
    messages: int
    completion_slot: int | None
    reached: dict = field(default_factory=dict)


def flood_exfiltrate(channel, tokens, initiators, start_slot: int = 0, max_slots: int | None = None) -> ExfilReport:
    """Flood every token's aggregate from its holder over a frozen topology.

    Each node rebroadcasts each distinct token id exactly once, the slot after
    it first hears it. ``channel`` supplies positions and loss; positions are not
    advanced. The completion slot is the last slot in which any broadcast was
    sent.
    """
    n = len(channel.positions)
    tokens = list(tokens)
    initiators = list(initiators)
    if len(tokens) != len(initiators):
        raise ValueError("one initiator per token")
    if max_slots is None:
        max_slots = 4 * n + 8
    has = np.zeros((len(tokens), n), dtype=bool)
    frontier = []
    for t, node in enumerate(initiators):
        has[t, node] = True
        frontier.append(np.array([node], dtype=np.intp))
    messages = 0
    last = None
    slot = start_slot
    for _ in range(max_slots):
        if not any(len(f) for f in frontier):
            break
        nxt = []
        for t, senders in enumerate(frontier):
            if len(senders) == 0:
                nxt.append(senders)
                continue
            messages += len(senders)
            last = slot
            _, rcv = channel.broadcast_many(senders)
            rcv = np.unique(rcv)
            fresh = rcv[~has[t, rcv]]
            has[t, fresh] = True
            nxt.append(fresh)
        frontier = nxt
        slot += 1
    aggs = {tok.token_id: tok.aggregate for tok in tokens}
    ckpt = sorted({rec.old_token_id for tok in tokens for rec in tok.checkpoints})
    reached = {tok.token_id: int(has[t].sum()) for t, tok in enumerate(tokens)}
    total = dedup_and_total(tokens) if tokens else None
    return ExfilReport(aggs, tuple(ckpt), total, messages, last, reached)
