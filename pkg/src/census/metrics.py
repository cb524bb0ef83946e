"""Per-trial measurements and cross-trial summaries."""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field

import numpy as np


class MetricsError(ValueError):
    pass


@dataclass
class TrialMetrics:
    n_nodes: int
    n_tokens: int = 1
    variant: str = ""
    seed: int = 0
    window: int = 5
    seeded: int = 0                      # nodes visited at start (token origins)
    cover_slots: int | None = None
    cover_transactions: int | None = None
    token_transfers: int = 0
    transfer_msgs: int = 0
    gradient_msgs: int = 0
    announces: int = 0
    requests: int = 0
    acks: int = 0
    retries: int = 0
    checkpoints: int = 0
    lost_tokens: int = 0
    slots_run: int = 0
    coverage_timeline: list = field(default_factory=list)   # (slot, visited_count)
    transfers_timeline: list = field(default_factory=list)  # (slot, cumulative transfers)
    visited_set: frozenset = frozenset()
    termination_detect_slot: int | None = None
    # at detection, every unvisited node sat outside the holder's connected component
    termination_partitioned: bool = False
    final_total: object = None
    # one entry per transaction: visited fraction when it started, holder had an unvisited neighbour
    lemma_fraction: list = field(default_factory=list)
    lemma_hit: list = field(default_factory=list)

    @property
    def visited_count(self) -> int:
        return len(self.visited_set)

    @property
    def coverage(self) -> float:
        return self.visited_count / self.n_nodes

    def cover_slot_at(self, fraction: float) -> int | None:
        """First slot at which at least ``ceil(fraction * N)`` nodes were visited."""
        need = math.ceil(fraction * self.n_nodes - 1e-9)
        for slot, count in self.coverage_timeline:
            if count >= need:
                return slot
        return None

    def transfers_at(self, slot: int) -> int:
        """Cumulative successful transfers up to and including ``slot``."""
        slots = [s for s, _ in self.transfers_timeline]
        i = bisect.bisect_right(slots, slot)
        return self.transfers_timeline[i - 1][1] if i else 0

    @property
    def termination_violation(self) -> bool:
        t = self.termination_detect_slot
        return t is not None and (self.cover_slots is None or t < self.cover_slots)


def transactions_for(slot: int | None, window: int) -> int | None:
    """Transaction windows elapsed by the end of ``slot``."""
    return None if slot is None else slot // window + 1


def exploration_ratio(m: TrialMetrics, at_coverage: float) -> float:
    """Transfers per newly visited node when coverage first reaches ``at_coverage``.

    Token origins are visited without a transfer, so they are left out of the
    denominator; each visit then costs at least one transfer and the ratio is
    never below 1. Before any transfer it is reported as 1.
    """
    if not 0 < at_coverage <= 1:
        raise MetricsError(f"coverage fraction must be in (0, 1], got {at_coverage}")
    slot = m.cover_slot_at(at_coverage)
    if slot is None:
        raise MetricsError(f"trial never reached {at_coverage:.0%} coverage")
    visited = next(c for s, c in m.coverage_timeline if s == slot)
    fresh = visited - m.seeded
    if fresh <= 0:
        return 1.0
    return m.transfers_at(slot) / fresh


def union_coverage(trials) -> float:
    trials = list(trials)
    if not trials:
        raise MetricsError("no trials")
    n = trials[0].n_nodes
    if any(t.n_nodes != n for t in trials):
        raise MetricsError("trials disagree on network size")
    seen = set()
    for t in trials:
        seen |= set(t.visited_set)
    return len(seen) / n


SUMMARY_FIELDS = ("cover_slots", "cover_transactions", "token_transfers", "transfer_msgs",
                  "gradient_msgs", "announces", "requests", "acks", "retries", "checkpoints")


@dataclass(frozen=True)
class Summary:
    metric: str
    count: int
    mean: float
    stderr: float
    p10: float
    p50: float
    p90: float


def summarize_values(name: str, values) -> Summary:
    v = np.asarray([x for x in values if x is not None], dtype=float)
    if len(v) == 0:
        raise MetricsError(f"no values for {name}")
    se = float(np.std(v, ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0
    p10, p50, p90 = np.percentile(v, [10, 50, 90])
    return Summary(name, len(v), float(v.mean()), se, float(p10), float(p50), float(p90))


def summarize(trials, fields=SUMMARY_FIELDS) -> list[Summary]:
    """Mean, standard error and 10/50/90th percentiles of each metric across trials."""
    trials = list(trials)
    if not trials:
        raise MetricsError("cannot summarise an empty set of trials")
    rows = []
    for f in fields:
        vals = [getattr(t, f) if not isinstance(t, dict) else t[f] for t in trials]
        vals = [x for x in vals if x is not None and x != ""]
        if vals:
            rows.append(summarize_values(f, vals))
    return rows
