"""Per-node token-passing and gradient rules for the three walk variants.

Every function here is a pure rule over one node's state plus its inputs; the
slotted engine in :mod:`census.engine` wires them to the broadcast channel.
Levels are dyadic floats (``1``, ``1/2``, ``1/4``, ... , ``0``) so halving is exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from . import aggregation as agg


class Variant(str, Enum):
    PURE = "pure"
    LOCAL = "local"
    GRADIENT = "gradient"


class ContractViolation(ValueError):
    """An operation was called outside its precondition."""


@dataclass(frozen=True)
class ProtocolConfig:
    variant: Variant = Variant.GRADIENT
    request_slots: int = 3            # T_r
    refresh_const: float = 8.0        # refresh length at level 1, in transactions
    gradient_period: int = 1          # transactions between initiation checks
    reliable: bool = False
    ack_timeout: int = 1              # T_a, in transactions
    max_retries: int = 3              # K
    term_factor: float = 2.0          # quiet window = term_factor * longest refresh
    gradient_max_hops: int = 32       # levels below 2**-gradient_max_hops are not relayed
    probe_period: int = 4             # windows between initiations without level-0 evidence

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.request_slots < 1:
            raise ContractViolation("request_slots must be >= 1")
        if self.refresh_const <= 0 or self.gradient_period < 1:
            raise ContractViolation("refresh_const and gradient_period must be positive")
        if self.ack_timeout < 1 or self.max_retries < 0:
            raise ContractViolation("ack_timeout >= 1 and max_retries >= 0 required")
        if self.probe_period < 1:
            raise ContractViolation("probe_period must be >= 1")
        if self.gradient_max_hops < 1:
            raise ContractViolation("gradient_max_hops must be >= 1")
        if self.term_factor <= 1.0:
            raise ContractViolation("the quiet window must exceed the refresh interval")

    @property
    def window(self) -> int:
        """Slots per transaction: announce, request slots, transfer."""
        return self.request_slots + 2

    @property
    def max_refresh(self) -> int:
        """Longest refresh timer any node can arm (level 1/2)."""
        return refresh_timer_duration(0.5, self.refresh_const, self.window)

    @property
    def min_level(self) -> float:
        return math.ldexp(1.0, -self.gradient_max_hops)

    @property
    def quiet_window(self) -> int:
        return int(math.ceil(self.term_factor * self.max_refresh))


@dataclass
class NodeState:
    visited: bool = False
    holder: bool = False
    level: float = 1.0
    refresh_remaining: int = 0
    last_announce_heard: int | None = None
    pending_request: int | None = None
    # level last relayed and slots left before a weaker or equal one may be relayed again
    relayed_level: float = 0.0
    hold_remaining: int = 0

    def check(self) -> None:
        """Raise if the level invariants are broken."""
        if not self.visited and self.level != 1.0:
            raise ContractViolation("unvisited node must sit at level 1")
        if self.holder and (self.level != 0.0 or not self.visited):
            raise ContractViolation("holder must be visited at level 0")
        if not is_valid_level(self.level):
            raise ContractViolation(f"level {self.level} is not 0, 1 or a power of 1/2")
        if 0.0 < self.level < 1.0 and self.refresh_remaining <= 0:
            raise ContractViolation("gradient level without an armed refresh timer")


def is_valid_level(level: float) -> bool:
    if level in (0.0, 1.0):
        return True
    if not 0.0 < level < 1.0:
        return False
    m, _ = math.frexp(level)
    return m == 0.5


@dataclass(frozen=True)
class CheckpointRecord:
    old_token_id: int
    frozen_aggregate: agg.Aggregate
    # transfer count of the chain when frozen; orders snapshots of one id
    version: int = 0


@dataclass(frozen=True)
class Token:
    token_id: int
    aggregate: agg.Aggregate
    checkpoints: tuple = ()
    transfer_count: int = 0
    origin_node: int = -1


# wire messages ---------------------------------------------------------------

@dataclass(frozen=True)
class Announce:
    holder_id: int


@dataclass(frozen=True)
class Request:
    sender: int
    level: float | None = None
    visited: bool = False


@dataclass(frozen=True)
class Transfer:
    token: Token
    to: int


@dataclass(frozen=True)
class Ack:
    token_id: int
    sender: int
    seq: int = 0


@dataclass(frozen=True)
class Gradient:
    level: float
    sender: int = -1


@dataclass(frozen=True)
class ScheduledRequest:
    offset: int          # request slot within the T_r window, 0-based
    level: float | None  # level attached (gradient variant only)


# token passing -----------------------------------------------------------------

def request_slot_range(visited: bool, variant: Variant, request_slots: int) -> range:
    """Request slots a node may draw from after hearing an announcement."""
    if Variant(variant) is Variant.LOCAL:
        half = max(1, request_slots // 2)
        if request_slots == 1:
            return range(0, 1)
        return range(half, request_slots) if visited else range(0, half)
    return range(0, request_slots)


def on_announce(state: NodeState, variant: Variant, rng: np.random.Generator,
                request_slots: int = 3) -> ScheduledRequest | None:
    """Schedule this node's reply to a token announcement.

    Local bias puts unvisited nodes in the first half of the request window and
    visited nodes in the second; the other variants draw over the whole window.
    Only gradient-bias replies carry a level. Level-0 nodes reply too, so a
    holder inside a visited region still has somewhere to send the token.
    """
    if state.holder:
        return None
    variant = Variant(variant)
    slots = request_slot_range(state.visited, variant, request_slots)
    offset = slots[int(rng.integers(len(slots)))]
    level = state.level if variant is Variant.GRADIENT else None
    return ScheduledRequest(offset, level)


def suppress_on_overhear(own_level: float | None, variant: Variant, overheard: Request) -> bool:
    """Should a node drop its own pending request after overhearing ``overheard``?"""
    if Variant(variant) is Variant.GRADIENT:
        return overheard.level is not None and own_level is not None and overheard.level > own_level
    return True


def select_recipient(requests, variant: Variant, rng: np.random.Generator) -> int | None:
    """Pick the next holder among the requests heard in the window, or ``None``."""
    if not requests:
        return None
    variant = Variant(variant)
    if variant is Variant.PURE:
        pool = list(requests)
    elif variant is Variant.LOCAL:
        fresh = [r for r in requests if not r.visited]
        pool = fresh or list(requests)
    else:
        top = max(r.level for r in requests)
        pool = [r for r in requests if r.level == top]
    return pool[int(rng.integers(len(pool)))].sender


def on_token_receive(state: NodeState, token: Token, datum: agg.Aggregate) -> tuple[NodeState, Token]:
    """Take custody of ``token``; first visits fold the node's datum into it."""
    new_tok = replace(token, transfer_count=token.transfer_count + 1)
    if not state.visited:
        new_tok = replace(new_tok, aggregate=agg.merge(new_tok.aggregate, datum))
    new_state = replace(state, visited=True, holder=True, level=0.0, refresh_remaining=0,
                        pending_request=None)
    return new_state, new_tok


def checkpoint_token(token: Token, new_id: int, empty: agg.Aggregate) -> Token:
    """Freeze ``token``'s aggregate under its old id and continue with a fresh id."""
    if new_id == token.token_id or any(r.old_token_id == new_id for r in token.checkpoints):
        raise ContractViolation(f"token id {new_id} already used")
    rec = CheckpointRecord(token.token_id, token.aggregate, token.transfer_count)
    return Token(token_id=new_id, aggregate=empty, checkpoints=token.checkpoints + (rec,),
                 transfer_count=0, origin_node=token.origin_node)


# gradients ---------------------------------------------------------------------

def refresh_timer_duration(level: float, refresh_const: float = 8.0, window: int = 5) -> int:
    """Slots a node keeps a gradient level before dropping back to 0.

    Proportional to the level: ``max(1, round(refresh_const * level * window))``,
    halves rounding up.
    """
    if not 0.0 < level < 1.0:
        raise ContractViolation(f"refresh timer is only armed for 0 < level < 1, got {level}")
    return max(1, int(math.floor(refresh_const * level * window + 0.5)))


def gradient_initiate(state: NodeState, announce_heard_recently: bool,
                      knows_level0_neighbor: bool) -> Gradient | None:
    """An unvisited node with no token nearby but a visited neighbour starts a gradient."""
    if state.level != 1.0 or state.holder:
        return None
    if announce_heard_recently or not knows_level0_neighbor:
        return None
    return Gradient(1.0)


def gradient_hold(level: float, refresh_const: float = 8.0, window: int = 5) -> int:
    """Slots after relaying during which only a strictly stronger gradient is relayed."""
    return max(window, refresh_timer_duration(level, refresh_const, window))


def gradient_receive(state: NodeState, levels, refresh_const: float = 8.0,
                     window: int = 5, min_level: float = 0.0) -> tuple[NodeState, Gradient | None]:
    """Apply every gradient heard in one slot.

    Only idle level-0 nodes join: they take half of the strongest sender level,
    arm their refresh timer and rebroadcast once. Everyone else ignores it,
    which is what confines a gradient to the gap between an unvisited node and
    the non-zero region around it. A node that relayed recently ignores
    anything not stronger than what it relayed, so echoes bouncing between
    neighbours whose timers have lapsed die out; levels under ``min_level``
    are dropped.
    """
    levels = [lv for lv in levels if lv > 0]
    if not levels or state.level != 0.0 or state.holder:
        return state, None
    new_level = max(levels) / 2.0
    if new_level < min_level:
        return state, None
    if state.hold_remaining > 0 and new_level <= state.relayed_level:
        return state, None
    timer = refresh_timer_duration(new_level, refresh_const, window)
    return replace(state, level=new_level, refresh_remaining=timer, relayed_level=new_level,
                   hold_remaining=gradient_hold(new_level, refresh_const, window)), Gradient(new_level)


def tick_refresh(state: NodeState) -> NodeState:
    """End-of-slot countdown; an expired timer drops the node back to level 0."""
    hold = max(0, state.hold_remaining - 1)
    if state.refresh_remaining <= 0:
        return replace(state, hold_remaining=hold)
    left = state.refresh_remaining - 1
    if left == 0:
        return replace(state, refresh_remaining=0, level=0.0, hold_remaining=hold)
    return replace(state, refresh_remaining=left, hold_remaining=hold)


# termination --------------------------------------------------------------------

@dataclass
class QuietWatch:
    """What a token's successive holders have heard, for termination detection.

    ``last_nonzero`` is the latest slot in which any holder of this token (or
    the node that now holds it) heard a non-zero level; ``zero_replies``
    counts level-0 requests received since then.
    """

    started: int = 0
    last_nonzero: int = -1
    zero_replies: int = 0

    def heard_nonzero(self, slot: int) -> None:
        if slot > self.last_nonzero:
            self.last_nonzero = slot
            self.zero_replies = 0

    def heard_zero_reply(self) -> None:
        self.zero_replies += 1


def termination_check(watch: QuietWatch, now: int, quiet_window: int) -> bool:
    """True once only level-0 replies (and no gradient traffic) were heard for ``quiet_window`` slots."""
    quiet_since = max(watch.started, watch.last_nonzero + 1)
    return watch.zero_replies > 0 and now - quiet_since + 1 >= quiet_window
