"""Gossip topics, wire format and timeout failure detection.

Wire format, one byte per field:

* status: ``[role, previous_role, parent_need, target_chain]`` (exactly 4
  bytes, untagged; 255 encodes "no chain")
* everything else: ``[topic, chain, kind_or_direction, addressee, *ids]``

Topic tags are status=0, request_response=1, parent_strand=2,
child_strand=3. A request carries ``[sender, target_id]`` as its ids; a
strand carries the accumulated robot ids.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Mapping, Union

from .model import Pose2D, Role

NO_CHAIN = 255
BROADCAST = 255
STATUS_SIZE = 4
HEADER_SIZE = 4


class Topic(IntEnum):
    STATUS = 0
    REQUEST_RESPONSE = 1
    PARENT_STRAND = 2
    CHILD_STRAND = 3


class Direction(IntEnum):
    PARENT = 0
    CHILD = 1


class RequestKind(IntEnum):
    JOIN_REQUEST = 0
    JOIN_ACCEPT = 1
    JOIN_REJECT = 2
    DISMANTLE = 3
    DISMANTLE_COMPLETE = 4
    EXPAND = 5


class WireError(ValueError):
    pass


def _byte(value: int, what: str) -> int:
    if not 0 <= value <= 255:
        raise WireError(f"{what}={value} does not fit in one byte")
    return value


@dataclass(frozen=True)
class StatusMessage:
    current_role: Role
    previous_role: Role
    parent_need: bool
    target_chain: int | None = None

    @property
    def wire_size(self) -> int:
        return STATUS_SIZE


@dataclass(frozen=True)
class StrandInfoMessage:
    direction: Direction
    chain_id: int
    ids: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.ids:
            raise WireError("strand ids must be non-empty")
        if len(set(self.ids)) != len(self.ids):
            raise WireError(f"duplicate ids in strand {self.ids}")

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + len(self.ids)


@dataclass(frozen=True)
class RequestResponseMessage:
    kind: RequestKind
    sender: int
    addressee: int = BROADCAST
    chain_id: int = NO_CHAIN
    target_id: int = NO_CHAIN

    def __post_init__(self) -> None:
        if self.kind in (RequestKind.JOIN_ACCEPT, RequestKind.JOIN_REJECT) and self.addressee == BROADCAST:
            raise WireError(f"{self.kind.name} needs a specific addressee")

    @property
    def wire_size(self) -> int:
        return HEADER_SIZE + 2


Message = Union[StatusMessage, StrandInfoMessage, RequestResponseMessage]


@dataclass(frozen=True)
class Envelope:
    sender_id: int
    sender_position: Pose2D
    payload: Message
    sent_step: int


def serialize(msg: Message) -> bytes:
    if isinstance(msg, StatusMessage):
        chain = NO_CHAIN if msg.target_chain is None else msg.target_chain
        return bytes([
            _byte(int(msg.current_role), "role"),
            _byte(int(msg.previous_role), "previous_role"),
            1 if msg.parent_need else 0,
            _byte(chain, "target_chain"),
        ])
    if isinstance(msg, StrandInfoMessage):
        tag = Topic.PARENT_STRAND if msg.direction is Direction.PARENT else Topic.CHILD_STRAND
        head = [int(tag), _byte(msg.chain_id, "chain_id"), int(msg.direction), BROADCAST]
        return bytes(head + [_byte(i, "id") for i in msg.ids])
    if isinstance(msg, RequestResponseMessage):
        return bytes([
            int(Topic.REQUEST_RESPONSE),
            _byte(msg.chain_id, "chain_id"),
            int(msg.kind),
            _byte(msg.addressee, "addressee"),
            _byte(msg.sender, "sender"),
            _byte(msg.target_id, "target_id"),
        ])
    raise TypeError(f"cannot serialize {type(msg).__name__}")


def deserialize(data: bytes) -> Message:
    if len(data) == STATUS_SIZE:
        chain = data[3]
        if data[2] not in (0, 1):
            raise WireError(f"parent_need byte must be 0 or 1, got {data[2]}")
        return StatusMessage(Role(data[0]), Role(data[1]), bool(data[2]), None if chain == NO_CHAIN else chain)
    if len(data) < HEADER_SIZE + 1:
        raise WireError(f"message of {len(data)} bytes is too short")
    topic = Topic(data[0])
    if topic is Topic.REQUEST_RESPONSE:
        if len(data) != HEADER_SIZE + 2:
            raise WireError("request/response messages are 6 bytes")
        return RequestResponseMessage(
            kind=RequestKind(data[2]), sender=data[4], addressee=data[3], chain_id=data[1], target_id=data[5]
        )
    if topic in (Topic.PARENT_STRAND, Topic.CHILD_STRAND):
        direction = Direction(data[2])
        expected = Direction.PARENT if topic is Topic.PARENT_STRAND else Direction.CHILD
        if direction is not expected:
            raise WireError("strand direction disagrees with topic tag")
        return StrandInfoMessage(direction, data[1], tuple(data[HEADER_SIZE:]))
    raise WireError(f"unexpected topic {topic!r}")


def outbox_size(outbox: Iterable[Message]) -> int:
    """Bytes a robot puts on the air for one outbox."""
    return sum(m.wire_size for m in outbox)


def detect_failures(
    last_heard: Mapping[int, int],
    watched: Iterable[int],
    now: int,
    timeout: int,
    watch_since: Mapping[int, int] | None = None,
) -> set[int]:
    """Watched robots silent for more than ``timeout`` steps.

    A robot never heard from is timed from ``watch_since`` (when watching
    began); with no such record it cannot be judged yet.
    """
    failed = set()
    for rid in watched:
        heard = last_heard.get(rid)
        if heard is None and watch_since is not None:
            heard = watch_since.get(rid)
        if heard is not None and now - heard > timeout:
            failed.add(rid)
    return failed


def relay_strand(incoming: StrandInfoMessage, self_id: int) -> StrandInfoMessage | None:
    """Append ``self_id`` for rebroadcast; ``None`` means drop (loop)."""
    if self_id in incoming.ids:
        return None
    return StrandInfoMessage(incoming.direction, incoming.chain_id, incoming.ids + (self_id,))
