"""Slotted simulation of one Census trial.

Time advances in slots of ``slot_dt`` seconds. Every ``W = request_slots + 2``
slots form one transaction window, shared by all token holders::

    phase 0          holders announce; recipients acknowledge last transfer;
                     unvisited nodes may start a gradient
    phase 1..T_r     requests, each node in its drawn request slot
    phase W-1        holders send the token to the chosen requester

Gradient rebroadcasts go out in the slot right after a node adopts a level,
whatever the phase. Messages sent in a slot are delivered at its end; nodes
move between slots.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from . import aggregation as agg
from .metrics import TrialMetrics, transactions_for
from .mobility import RandomWalk2D
from .protocol import (NodeState, ProtocolConfig, QuietWatch, Request, Token, Variant,
                       checkpoint_token, on_announce, on_token_receive, select_recipient,
                       suppress_on_overhear, termination_check)
from .world import Channel, InvalidParameter, WorldConfig, rng_stream

NEVER = -(10 ** 9)


@dataclass(frozen=True)
class TrialConfig:
    world: WorldConfig
    mobility: object = field(default_factory=RandomWalk2D)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    n_tokens: int = 1
    aggregate: str = "count"
    bucket_edges: tuple = ()
    seed: int = 0
    stop_coverage: float = 1.0
    max_slots: int | None = None
    # gradient variant: slots to keep running after full coverage waiting for termination detection
    post_cover_slots: int | None = None
    # stop when transfers per visited node exceeds this (approximate termination for walks without gradients)
    ratio_cutoff: float | None = None
    record_events: bool = False
    check_invariants: bool = False

    def __post_init__(self):
        n = self.world.n_nodes
        if not 1 <= self.n_tokens <= n:
            raise InvalidParameter(f"need 1 <= k <= N, got k={self.n_tokens}, N={n}")
        if not 0 < self.stop_coverage <= 1:
            raise InvalidParameter("stop_coverage must be in (0, 1]")
        if self.aggregate not in agg.KINDS:
            raise InvalidParameter(f"unknown aggregate {self.aggregate!r}")
        if self.aggregate == "histogram" and len(self.bucket_edges) < 2:
            raise InvalidParameter("histogram aggregation needs bucket_edges")


@dataclass
class _Tx:
    holder: int
    token: Token
    requests: list = field(default_factory=list)
    recipient: int | None = None


@dataclass
class _Attempt:
    sender: int
    recipient: int
    token: Token           # snapshot at send time
    watch: QuietWatch
    retries_left: int
    check_slot: int
    acked: bool = False


class Trial:
    """State and slot loop for one seeded trial."""

    def __init__(self, cfg: TrialConfig):
        self.cfg = cfg
        self.world = cfg.world
        self.proto = cfg.protocol
        self.variant = self.proto.variant
        self.n = cfg.world.n_nodes
        self.W = self.proto.window
        self.T_r = self.proto.request_slots
        seed = cfg.seed
        self.rng_place = rng_stream(seed, "placement")
        self.rng_move = rng_stream(seed, "mobility")
        self.rng_proto = rng_stream(seed, "protocol")
        self.channel = Channel(cfg.world, rng_stream(seed, "channel"))
        self.kin = cfg.mobility.init(self.n, cfg.world.side, self.rng_move)
        self.channel.set_positions(self.kin.position)

        n = self.n
        self.visited = np.zeros(n, dtype=bool)
        self.level = np.ones(n)
        self.refresh = np.zeros(n, dtype=np.int64)
        self.is_holder = np.zeros(n, dtype=bool)
        self.last_announce = np.full(n, NEVER, dtype=np.int64)
        self.last_level0 = np.full(n, NEVER, dtype=np.int64)
        self.last_gradient = np.full(n, NEVER, dtype=np.int64)
        self.last_nonzero = np.full(n, NEVER, dtype=np.int64)
        self.last_initiated = np.full(n, NEVER, dtype=np.int64)
        self.rebroadcast = np.zeros(n)
        self.relayed_level = np.zeros(n)
        self.hold = np.zeros(n, dtype=np.int64)
        self.pending: dict[int, int] = {}      # node -> request offset this window
        self.queues: dict[int, deque] = {}
        self.watches: dict[int, QuietWatch] = {}
        self.txs: dict[int, _Tx] = {}
        self.attempts: list[_Attempt] = []
        self.acks_out: list[tuple[int, int, int, int]] = []   # (from, to, token_id, seq)
        self.seen_transfers: set = set()
        self.events: list = []

        kind = cfg.aggregate
        self.empty = agg.identity(kind, cfg.bucket_edges)
        if kind in ("count",):
            self.data = np.ones(n)
        else:
            self.data = rng_stream(seed, "data").random(n) * 100.0
        self._next_token_id = 0

        self.m = TrialMetrics(n_nodes=n, n_tokens=cfg.n_tokens, variant=self.variant.value,
                              seed=seed, window=self.W)
        self.visited_count = 0
        self.finished_tokens: list[Token] = []

        origins = self.rng_place.choice(n, size=cfg.n_tokens, replace=False)
        for node in sorted(int(o) for o in origins):
            self._mark_visited(node)
            tok = Token(self._new_token_id(), agg.merge(self.empty, self.datum(node)), (), 0, node)
            self._give(node, tok, QuietWatch(started=0))
        self.m.seeded = self.visited_count
        self.m.coverage_timeline.append((0, self.visited_count))
        self.slot = 0

    # helpers -----------------------------------------------------------------

    def datum(self, node: int) -> agg.Aggregate:
        return agg.from_datum(self.cfg.aggregate, self.data[node], self.cfg.bucket_edges)

    def _new_token_id(self) -> int:
        self._next_token_id += 1
        return self._next_token_id

    def _mark_visited(self, node: int) -> None:
        if not self.visited[node]:
            self.visited[node] = True
            self.visited_count += 1

    def _make_holder(self, node: int) -> None:
        self.is_holder[node] = True
        self.level[node] = 0.0
        self.refresh[node] = 0
        self.rebroadcast[node] = 0.0
        self.pending.pop(node, None)

    def _give(self, node: int, tok: Token, watch: QuietWatch) -> None:
        self._make_holder(node)
        self.queues.setdefault(node, deque()).append(tok)
        self.watches[tok.token_id] = watch

    def _take(self, node: int) -> tuple[Token, QuietWatch]:
        q = self.queues[node]
        tok = q.popleft()
        if not q:
            del self.queues[node]
            self.is_holder[node] = False
        return tok, self.watches.pop(tok.token_id)

    def node_state(self, node: int) -> NodeState:
        return NodeState(visited=bool(self.visited[node]), holder=bool(self.is_holder[node]),
                         level=float(self.level[node]), refresh_remaining=int(self.refresh[node]))

    def live_tokens(self) -> list[Token]:
        out = [t for q in self.queues.values() for t in q]
        # a sender still retrying keeps its snapshot; de-duplication drops it if the copy arrived
        out += [a.token for a in self.attempts if not a.acked]
        return out

    def _log(self, *ev) -> None:
        if self.cfg.record_events:
            self.events.append((self.slot,) + ev)

    # slot phases ---------------------------------------------------------------

    def _announce(self, s: int) -> None:
        variant = self.variant
        lemma = self.m
        for h in sorted(self.queues):
            tok = self.queues[h][0]
            self.txs[h] = _Tx(h, tok)
            self.m.announces += 1
            self._log("announce", h, tok.token_id)
            in_range = self.channel.in_range(h)
            lemma.lemma_fraction.append(self.visited_count / self.n)
            lemma.lemma_hit.append(bool(np.any(~self.visited[in_range])))
            rcv = self.channel._lossy(in_range)
            self.last_announce[rcv] = s
            self.last_level0[rcv] = s
            for r in rcv:
                r = int(r)
                if self.is_holder[r] or r in self.pending:
                    continue
                sched = on_announce(self.node_state(r), variant, self.rng_proto, self.T_r)
                if sched is not None:
                    self.pending[r] = sched.offset

    def _send_acks(self, s: int) -> None:
        if not self.acks_out:
            return
        out, self.acks_out = self.acks_out, []
        for frm, to, tid, seq in out:
            self.m.acks += 1
            self._log("ack", frm, to, tid, seq)
            rcv = self.channel.broadcast(frm)
            if to in set(rcv.tolist()):
                for a in self.attempts:
                    if a.sender == to and a.token.token_id == tid and a.token.transfer_count == seq:
                        a.acked = True

    def _requests(self, s: int, offset: int) -> None:
        senders = sorted(r for r, off in self.pending.items() if off == offset)
        if not senders:
            return
        gradient = self.variant is Variant.GRADIENT
        reqs = []
        for snd in senders:
            del self.pending[snd]
            lvl = float(self.level[snd]) if gradient else None
            reqs.append(Request(snd, lvl, bool(self.visited[snd])))
        self.m.requests += len(reqs)
        for req in reqs:
            self._log("request", req.sender, req.level)
            rcv = self.channel.broadcast(req.sender)
            for r in rcv.tolist():
                tx = self.txs.get(r)
                if tx is not None and tx.recipient is None:
                    tx.requests.append(req)
                if gradient:
                    if req.level > 0:
                        self.last_nonzero[r] = s
                    else:
                        self.last_level0[r] = s
                        if tx is not None:
                            self.watches[tx.token.token_id].heard_zero_reply()
                own = self.pending.get(r)
                if own is not None and own > offset:
                    own_level = float(self.level[r]) if gradient else None
                    if suppress_on_overhear(own_level, self.variant, req):
                        del self.pending[r]

    def _gradients(self, s: int) -> None:
        if self.variant is not Variant.GRADIENT:
            return
        senders_mask = self.rebroadcast > 0
        send_level = self.rebroadcast.copy()
        self.rebroadcast[:] = 0.0
        period = self.proto.gradient_period * self.W
        if s % period == 0:
            init = self._initiators(s)
            self.last_initiated[init] = s
            senders_mask |= init
            send_level[init] = 1.0
        senders = np.flatnonzero(senders_mask)
        if len(senders) == 0:
            self._pending_adopt = None
            return
        self.m.gradient_msgs += len(senders)
        self._log("gradient", len(senders))
        src, rcv = self.channel.broadcast_many(senders)
        if len(rcv) == 0:
            self._pending_adopt = None
            return
        self.last_gradient[rcv] = s
        self.last_nonzero[rcv] = s
        # only a node that was at level 0 relays, so a relayed gradient proves a visited neighbour
        relayed = send_level[src] < 1.0
        self.last_level0[rcv[relayed]] = s
        cand = np.zeros(self.n)
        np.maximum.at(cand, rcv, send_level[src] / 2.0)
        eligible = ((cand >= self.proto.min_level) & (self.level == 0.0) & ~self.is_holder
                    & ((self.hold <= 0) | (cand > self.relayed_level)))
        self._pending_adopt = (np.flatnonzero(eligible), cand)

    def _initiators(self, s: int) -> np.ndarray:
        """Unvisited nodes that start a gradient this window.

        Without a neighbourhood service a node cannot know its neighbours'
        levels. It assumes a level-0 neighbour if, within the quiet window, it
        overheard a message from a level-0 node (announce, level-0 request, or
        a relayed gradient, since only level-0 nodes relay), or if it has never
        heard gradient traffic at all. Evidence mostly comes from relays of its
        own gradients, so once it lapses the node would fall silent for good;
        it therefore still probes every ``probe_period`` windows.
        """
        horizon = self.proto.quiet_window
        unvisited = self.level == 1.0
        quiet_token = (s - self.last_announce) >= self.W
        knows0 = ((s - self.last_level0) <= horizon) | (self.last_gradient == NEVER)
        probe = (s - self.last_initiated) >= self.proto.probe_period * self.W
        return unvisited & quiet_token & (knows0 | probe)

    def _adopt_gradients(self) -> None:
        pa = getattr(self, "_pending_adopt", None)
        self._pending_adopt = None
        if pa is None:
            return
        nodes, cand = pa
        # nodes that took a token in this slot stay at level 0
        nodes = nodes[(self.level[nodes] == 0.0) & ~self.is_holder[nodes]]
        if len(nodes) == 0:
            return
        lv = cand[nodes]
        self.level[nodes] = lv
        c, W = self.proto.refresh_const, self.W
        timers = np.maximum(1, np.floor(c * lv * W + 0.5)).astype(np.int64)
        self.refresh[nodes] = timers
        self.relayed_level[nodes] = lv
        self.hold[nodes] = np.maximum(W, timers)
        self.rebroadcast[nodes] = lv

    def _tick_refresh(self) -> None:
        np.maximum(self.hold - 1, 0, out=self.hold)
        live = self.refresh > 0
        if not live.any():
            return
        self.refresh[live] -= 1
        expired = live & (self.refresh == 0)
        self.level[expired] = 0.0

    def _select(self) -> None:
        for h in sorted(self.txs):
            tx = self.txs[h]
            tx.recipient = select_recipient(tx.requests, self.variant, self.rng_proto)
            if tx.recipient is None:
                del self.txs[h]

    def _deliver_token(self, frm: int, to: int) -> bool:
        pos = self.channel.positions
        d2 = float(np.sum((pos[frm] - pos[to]) ** 2))
        if d2 > self.world.range_R ** 2:
            return False
        p = self.world.loss_prob
        return not (p > 0 and self.channel.rng.random() < p)

    def _receive(self, to: int, tok: Token, watch: QuietWatch, s: int) -> None:
        state, new_tok = on_token_receive(self.node_state(to), tok, self.datum(to))
        self._mark_visited(to)
        self._make_holder(to)
        watch.heard_nonzero(int(self.last_nonzero[to]))
        self.queues.setdefault(to, deque()).append(new_tok)
        self.watches[new_tok.token_id] = watch
        self.m.token_transfers += 1
        self.m.transfers_timeline.append((s, self.m.token_transfers))

    def _transfers(self, s: int) -> None:
        reliable = self.proto.reliable
        for h in sorted(self.txs):
            tx = self.txs.pop(h)
            to = tx.recipient
            tok, watch = self._take(h)
            assert tok.token_id == tx.token.token_id
            self.m.transfer_msgs += 1
            self._log("transfer", h, to, tok.token_id)
            ok = self._deliver_token(h, to)
            if reliable:
                att = _Attempt(h, to, tok, watch, self.proto.max_retries,
                               s + self.proto.ack_timeout * self.W)
                self.attempts.append(att)
                if ok:
                    self._accept_reliable(att, s)
            elif ok:
                self._receive(to, tok, watch, s)
            else:
                # ideal transfer is exactly-once: a failed hand-off leaves the token with the sender
                self.queues.setdefault(h, deque()).appendleft(tok)
                self.watches[tok.token_id] = watch
                self._make_holder(h)
        if reliable:
            self._retries(s)

    def _accept_reliable(self, att: _Attempt, s: int) -> None:
        key = (att.recipient, att.token.token_id, att.token.transfer_count)
        if key not in self.seen_transfers:
            self.seen_transfers.add(key)
            # the recipient takes its own copy; the sender keeps its snapshot for a checkpoint
            self._receive(att.recipient, att.token, QuietWatch(att.watch.started, att.watch.last_nonzero,
                                                               att.watch.zero_replies), s)
        self.acks_out.append((att.recipient, att.sender, att.token.token_id, att.token.transfer_count))

    def _retries(self, s: int) -> None:
        keep = []
        for att in self.attempts:
            if att.acked:
                continue
            if att.check_slot > s:
                keep.append(att)
                continue
            if att.retries_left > 0:
                att.retries_left -= 1
                att.check_slot = s + self.proto.ack_timeout * self.W
                self.m.transfer_msgs += 1
                self.m.retries += 1
                self._log("retry", att.sender, att.recipient, att.token.token_id)
                if self._deliver_token(att.sender, att.recipient):
                    self._accept_reliable(att, s)
                keep.append(att)
                continue
            fresh = checkpoint_token(att.token, self._new_token_id(), self.empty)
            self.m.checkpoints += 1
            self._log("checkpoint", att.sender, att.token.token_id, fresh.token_id)
            self._give(att.sender, fresh, QuietWatch(started=s))
        self.attempts = keep

    def _termination(self, s: int) -> None:
        if self.variant is not Variant.GRADIENT or self.m.termination_detect_slot is not None:
            return
        qw = self.proto.quiet_window
        for h in sorted(self.queues):
            for tok in self.queues[h]:
                w = self.watches[tok.token_id]
                w.heard_nonzero(int(self.last_nonzero[h]))
                if termination_check(w, s, qw):
                    self.m.termination_detect_slot = s
                    # omniscient post-mortem: could the holder have reached the nodes still unvisited?
                    reach = self.channel.component(h)
                    self.m.termination_partitioned = (self.visited_count < self.n
                                                      and not np.any(~self.visited[reach]))
                    self._log("terminate", h, tok.token_id)
                    return

    # main loop -----------------------------------------------------------------

    def step(self) -> None:
        s = self.slot
        phase = s % self.W
        if phase == 0:
            self._announce(s)
            self._send_acks(s)
        elif phase <= self.T_r:
            self._requests(s, phase - 1)
        self._gradients(s)
        if phase == self.W - 1:
            self._transfers(s)
        # a node whose timer runs out this slot was still lit while receiving
        self._tick_refresh()
        self._adopt_gradients()
        if phase == self.T_r:
            self._select()
        if phase == self.W - 1:
            self.txs.clear()
            self.pending.clear()
        self._termination(s)
        if self.m.coverage_timeline[-1][1] != self.visited_count:
            self.m.coverage_timeline.append((s, self.visited_count))
        if self.cfg.check_invariants:
            self.check_invariants()
        self.cfg.mobility.step(self.kin, self.world.slot_dt, self.world.side, self.rng_move)
        self.channel.set_positions(self.kin.position)
        self.slot += 1

    def default_budget(self) -> int:
        # generous: pure walks on large networks need many windows
        n = self.n
        return int(self.W * max(2000, 60 * n * max(1.0, math.log(n)) / self.cfg.n_tokens))

    def run(self) -> TrialMetrics:
        cfg = self.cfg
        budget = cfg.max_slots if cfg.max_slots is not None else self.default_budget()
        need = math.ceil(cfg.stop_coverage * self.n - 1e-9)
        post = cfg.post_cover_slots
        if post is None:
            post = 4 * self.proto.max_refresh + self.W if self.variant is Variant.GRADIENT else 0
        cover_slot = None
        while self.slot < budget:
            self.step()
            s = self.slot - 1
            if cover_slot is None and self.visited_count >= self.n:
                cover_slot = s
            if self.visited_count >= need and need < self.n:
                break
            if cover_slot is not None:
                if self.m.termination_detect_slot is not None or s - cover_slot >= post:
                    break
            if cfg.ratio_cutoff is not None:
                fresh = self.visited_count - self.m.seeded
                if fresh > 0 and self.m.token_transfers / fresh > cfg.ratio_cutoff:
                    break
            if not self.queues and not self.attempts:
                break
        return self.finish(cover_slot)

    def finish(self, cover_slot: int | None) -> TrialMetrics:
        m = self.m
        m.slots_run = self.slot
        m.cover_slots = cover_slot
        m.cover_transactions = transactions_for(cover_slot, self.W)
        m.visited_set = frozenset(np.flatnonzero(self.visited).tolist())
        tokens = self.live_tokens() + self.finished_tokens
        # checkpoint snapshots held by senders that are still waiting are part of the record too
        m.final_total = agg.dedup_and_total(tokens, empty=self.empty)
        return m

    def check_invariants(self) -> None:
        lv = self.level
        if np.any(lv[~self.visited] != 1.0):
            raise AssertionError("unvisited node off level 1")
        if np.any(lv[self.is_holder] != 0.0):
            raise AssertionError("holder off level 0")
        mid = (lv > 0) & (lv < 1)
        if np.any(self.refresh[mid] <= 0):
            raise AssertionError("gradient level without timer")
        m, _ = np.frexp(lv[mid])
        if np.any(m != 0.5):
            raise AssertionError("non-dyadic level")


def run_trial(cfg: TrialConfig) -> TrialMetrics:
    return Trial(cfg).run()
