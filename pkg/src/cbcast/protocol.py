"""The CBCAST process state machine.

A :class:`Process` is an immutable value. ``receive``, ``deliver`` and
``broadcast`` each return a fresh state, and the caller decides what to do
with it. ``broadcast`` is built on top of ``deliver``: the new message is
pushed at the head of the delay queue and immediately self-delivered.

Histories are stored newest-first, so ``history[0]`` is the latest event.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Generic, Iterable, Optional, Tuple, TypeVar, Union

from .vector_clock import (
    ClockError,
    ProcessId,
    VectorClock,
    vc_combine,
    vc_from,
    vc_new,
    vc_tick,
)

R = TypeVar("R")


class ProtocolInvariantError(AssertionError):
    """A protocol invariant was broken. This is a bug, never an input error."""


@dataclass(frozen=True)
class Message(Generic[R]):
    """A broadcast message: sender's post-tick clock, sender id, payload.

    Two messages are the same message iff ``key`` matches, since each
    broadcast ticks the sender's own entry exactly once.
    """

    vc: VectorClock
    sender: ProcessId
    raw: R = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "vc", vc_from(self.vc))
        if not 0 <= self.sender < len(self.vc):
            raise ClockError(
                f"sender {self.sender} out of range for clock of length {len(self.vc)}"
            )
        if self.vc[self.sender] < 1:
            raise ClockError(f"message from {self.sender} has no tick at its own index: {self.vc}")

    @property
    def key(self) -> Tuple[ProcessId, int]:
        return (self.sender, self.vc[self.sender])

    def __hash__(self) -> int:
        # raw may be an unhashable JSON value
        return hash((self.sender, self.vc))

    def to_wire(self) -> dict:
        return {"vc": list(self.vc), "sender": self.sender, "raw": self.raw}

    @classmethod
    def from_wire(cls, obj: Any) -> "Message":
        """Decode the JSON object form. Raises ``ClockError`` on bad shape."""
        if not isinstance(obj, dict):
            raise ClockError(f"message must be a JSON object, got {type(obj).__name__}")
        try:
            vc, sender = obj["vc"], obj["sender"]
        except KeyError as e:
            raise ClockError(f"message missing field {e.args[0]!r}") from None
        if not isinstance(vc, list):
            raise ClockError("message 'vc' must be a list")
        if isinstance(sender, bool) or not isinstance(sender, int):
            raise ClockError("message 'sender' must be an int")
        return cls(vc=tuple(vc), sender=sender, raw=obj.get("raw"))


@dataclass(frozen=True)
class Broadcast(Generic[R]):
    message: Message[R]


@dataclass(frozen=True)
class Deliver(Generic[R]):
    pid: ProcessId
    message: Message[R]


Event = Union[Broadcast, Deliver]
History = Tuple[Event, ...]


@dataclass(frozen=True)
class Process(Generic[R]):
    """Per-node protocol state.

    ``dq`` is the delay queue, front first. ``history`` is newest-first and
    always agrees with ``vc`` (see :func:`hist_vc`).
    """

    vc: VectorClock
    id: ProcessId
    dq: Tuple[Message[R], ...] = ()
    history: History = field(default=(), repr=False)

    @property
    def n(self) -> int:
        return len(self.vc)


def process_new(n: int, pid: ProcessId) -> Process:
    vc = vc_new(n)
    if not 0 <= pid < n:
        raise ClockError(f"process id {pid} out of range for cluster of {n}")
    return Process(vc=vc, id=pid)


def hist_vc(history: Iterable[Event], n: Optional[int] = None) -> VectorClock:
    """Supremum of the clocks on Deliver events; zeros if there are none.

    ``n`` is only needed to size the result for a Deliver-free history.
    """
    clocks = [e.message.vc for e in history if type(e) is Deliver]
    if not clocks:
        return vc_new(n) if n is not None else ()
    return tuple(map(max, *clocks)) if len(clocks) > 1 else clocks[0]


def deliverable(m: Message, p_vc: VectorClock) -> bool:
    """True iff ``m`` is the next message expected from its sender and every
    other entry of its clock is already covered by ``p_vc``."""
    if len(m.vc) != len(p_vc):
        raise ClockError(f"clock length mismatch: {len(m.vc)} != {len(p_vc)}")
    s = m.sender
    if m.vc[s] != p_vc[s] + 1:
        return False
    return all(mk <= pk for k, (mk, pk) in enumerate(zip(m.vc, p_vc)) if k != s)


def dequeue(
    p_vc: VectorClock, dq: Tuple[Message, ...]
) -> Optional[Tuple[Message, Tuple[Message, ...]]]:
    """Pop the first deliverable message, keeping the others in order."""
    for i, m in enumerate(dq):
        s = m.sender
        # cheap rejection first; most queued messages fail on the sender entry
        if m.vc[s] == p_vc[s] + 1 and deliverable(m, p_vc):
            return m, dq[:i] + dq[i + 1:]
    return None


def receive(m: Message, p: Process) -> Process:
    """Put a network message on the delay queue.

    Self-sent messages and duplicates (already delivered, or already queued)
    are dropped; neither could ever become deliverable.
    """
    if len(m.vc) != p.n:
        raise ClockError(f"message clock length {len(m.vc)} != cluster size {p.n}")
    if m.sender == p.id:
        return p
    if m.vc[m.sender] <= p.vc[m.sender]:
        return p
    s, c = m.sender, m.vc[m.sender]
    if any(q.sender == s and q.vc[s] == c for q in p.dq):
        return p
    return Process(p.vc, p.id, p.dq + (m,), p.history)


def deliver(p: Process) -> Optional[Tuple[Message, Process]]:
    popped = dequeue(p.vc, p.dq)
    if popped is None:
        return None
    m, rest = popped
    return m, Process(vc_combine(m.vc, p.vc), p.id, rest, (Deliver(p.id, m),) + p.history)


def broadcast(raw: R, p: Process[R]) -> Tuple[Message[R], Process[R]]:
    m = Message(vc=vc_tick(p.vc, p.id), sender=p.id, raw=raw)
    staged = Process(p.vc, p.id, (m,) + p.dq, (Broadcast(m),) + p.history)
    out = deliver(staged)
    if out is None or out[0].key != m.key:
        raise ProtocolInvariantError(f"self-broadcast {m.key} not immediately deliverable at {p.vc}")
    return out


@dataclass(frozen=True)
class OpReceive(Generic[R]):
    message: Message[R]


@dataclass(frozen=True)
class OpBroadcast(Generic[R]):
    raw: R


@dataclass(frozen=True)
class OpDeliver:
    pass


Op = Union[OpReceive, OpBroadcast, OpDeliver]


def step(op: Op, p: Process) -> Process:
    if isinstance(op, OpReceive):
        return receive(op.message, p)
    if isinstance(op, OpBroadcast):
        return broadcast(op.raw, p)[1]
    if isinstance(op, OpDeliver):
        out = deliver(p)
        return p if out is None else out[1]
    raise TypeError(f"unknown op {op!r}")
