"""Executable causal-delivery checks over process histories and executions.

``check_lcd`` looks at one history and compares vector clocks.
``check_cd`` uses happens-before, computed from the event graph alone
(process order plus broadcast-to-deliver edges, transitively closed), so it
never consults a vector clock. ``check_vc_hb_correspondence`` compares the
two orders on every pair of broadcast messages.

Cost: closure is one pass over the events with int bitsets. The pairwise
checks are quadratic in the deliveries per process (LCD) and in the number
of broadcasts (correspondence), which is fine for desk-scale runs of a few
thousand events.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .protocol import Broadcast, Deliver, Event, History, Message, Process, process_new
from .trace import TraceEvent
from .vector_clock import ProcessId

MessageKey = Tuple[ProcessId, int]


class CheckerError(ValueError):
    """The execution is malformed (unknown event, duplicate, cyclic order)."""


class ViolationKind(str, enum.Enum):
    LCD = "LCD"
    CD = "CD"
    CORRESPONDENCE = "Correspondence"


@dataclass(frozen=True)
class Violation:
    kind: ViolationKind
    pid: ProcessId
    m1: MessageKey
    m2: MessageKey
    explanation: str

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "pid": self.pid, "m1": list(self.m1),
                "m2": list(self.m2), "explanation": self.explanation}


@dataclass(frozen=True)
class ExecutionState:
    """All process states plus in-flight ``(destination, message)`` entries."""

    procs: Tuple[Process, ...]
    network: Tuple[Tuple[ProcessId, Message], ...] = ()

    def __post_init__(self) -> None:
        for i, p in enumerate(self.procs):
            if p.id != i:
                raise CheckerError(f"process at index {i} has id {p.id}")
        for dest, m in self.network:
            if dest == m.sender:
                raise CheckerError(f"in-flight message {m.key} addressed to its own sender")

    @property
    def n(self) -> int:
        return len(self.procs)

    @classmethod
    def empty(cls, n: int) -> "ExecutionState":
        return cls(tuple(process_new(n, i) for i in range(n)))


def execution_from_histories(histories: Sequence[Sequence[Event]]) -> ExecutionState:
    """Build an execution from oldest-first per-process event lists.

    Only histories matter to the checkers, so process clocks are filled in
    from the Deliver events and delay queues are left empty.
    """
    n = len(histories)
    procs = []
    for pid, events in enumerate(histories):
        h = tuple(reversed(events))
        vc = process_new(n, pid).vc
        for e in events:
            if isinstance(e, Deliver):
                vc = tuple(map(max, vc, e.message.vc))
        procs.append(Process(vc=vc, id=pid, history=h))
    return ExecutionState(tuple(procs))


def execution_from_trace(events: Iterable[TraceEvent], n: Optional[int] = None) -> ExecutionState:
    """Reconstruct histories from trace records; ``receive`` records are skipped."""
    events = list(events)
    if n is None:
        n = len(events[0].msg.vc) if events else 0
    per_pid: List[List[Event]] = [[] for _ in range(n)]
    for ev in events:
        if len(ev.msg.vc) != n:
            raise CheckerError(f"message {ev.msg.key} has clock length {len(ev.msg.vc)}, expected {n}")
        if ev.kind == "broadcast":
            per_pid[ev.pid].append(Broadcast(ev.msg))
        elif ev.kind == "deliver":
            per_pid[ev.pid].append(Deliver(ev.pid, ev.msg))
    return execution_from_histories(per_pid)


def _event_id(e: Event) -> tuple:
    if isinstance(e, Broadcast):
        return ("B", e.message.key)
    return ("D", e.pid, e.message.key)


def oldest_first(h: History) -> List[Event]:
    return list(reversed(h))


def process_order(h: History, e1: Event, e2: Event) -> bool:
    """True iff both events are in ``h`` and ``e1`` happened earlier."""
    try:
        i1 = h.index(e1)
        i2 = h.index(e2)
    except ValueError:
        return False
    # newest-first: older events sit further right
    return i1 > i2


class HappensBefore:
    """Transitive closure of process order and broadcast-to-deliver edges.

    Each event gets a bitset of the events strictly before it, filled in
    topological order, so queries are single bit tests.
    """

    def __init__(self, x: ExecutionState):
        self.events: List[Event] = []
        self.index: Dict[tuple, int] = {}
        self.broadcasts: List[Message] = []
        self._bindex: Dict[MessageKey, int] = {}
        succ: List[List[int]] = []
        indeg: List[int] = []
        pending_delivers: List[Tuple[int, MessageKey]] = []

        for p in x.procs:
            prev = None
            for e in oldest_first(p.history):
                eid = _event_id(e)
                if eid in self.index:
                    raise CheckerError(f"duplicate event {eid} in execution")
                i = len(self.events)
                self.index[eid] = i
                self.events.append(e)
                succ.append([])
                indeg.append(0)
                if prev is not None:
                    succ[prev].append(i)
                    indeg[i] += 1
                prev = i
                if isinstance(e, Broadcast):
                    if e.message.sender != p.id:
                        raise CheckerError(f"broadcast of {e.message.key} recorded at process {p.id}")
                    self._bindex[e.message.key] = len(self.broadcasts)
                    self.broadcasts.append(e.message)
                else:
                    if e.pid != p.id:
                        raise CheckerError(f"Deliver for process {e.pid} in history of process {p.id}")
                    pending_delivers.append((i, e.message.key))

        for i, key in pending_delivers:
            src = self.index.get(("B", key))
            if src is not None:
                succ[src].append(i)
                indeg[i] += 1

        self._anc = [0] * len(self.events)
        self._banc = [0] * len(self.events)
        ready = deque(i for i, d in enumerate(indeg) if d == 0)
        seen = 0
        while ready:
            i = ready.popleft()
            seen += 1
            down = self._anc[i] | (1 << i)
            bdown = self._banc[i]
            e = self.events[i]
            if isinstance(e, Broadcast):
                bdown |= 1 << self._bindex[e.message.key]
            for j in succ[i]:
                self._anc[j] |= down
                self._banc[j] |= bdown
                indeg[j] -= 1
                if indeg[j] == 0:
                    ready.append(j)
        if seen != len(self.events):
            raise CheckerError("event order is cyclic (a delivery precedes its own broadcast)")

    def _idx(self, e: Event) -> int:
        try:
            return self.index[_event_id(e)]
        except KeyError:
            raise CheckerError(f"event {_event_id(e)} does not occur in the execution") from None

    def __call__(self, e1: Event, e2: Event) -> bool:
        i, j = self._idx(e1), self._idx(e2)
        return bool(self._anc[j] >> i & 1)

    def broadcast_index(self, key: MessageKey) -> int:
        try:
            return self._bindex[key]
        except KeyError:
            raise CheckerError(f"message {key} was never broadcast in this execution") from None

    def broadcast_ancestors(self, key: MessageKey) -> int:
        """Bitset over broadcast indices of broadcasts that happen before ``key``'s."""
        self.broadcast_index(key)
        return self._banc[self.index[("B", key)]]

    def broadcast_matrix(self) -> np.ndarray:
        """``M[i, j]`` is True iff broadcast ``i`` happens before broadcast ``j``."""
        b = len(self.broadcasts)
        out = np.zeros((b, b), dtype=bool)
        nbytes = (b + 7) // 8
        for j, m in enumerate(self.broadcasts):
            mask = self.broadcast_ancestors(m.key)
            if mask:
                bits = np.unpackbits(np.frombuffer(mask.to_bytes(nbytes, "little"), dtype=np.uint8),
                                     bitorder="little")
                out[:, j] = bits[:b].astype(bool)
        return out


def happens_before(x: ExecutionState, e1: Event, e2: Event) -> bool:
    return HappensBefore(x)(e1, e2)


def _vc_less_matrix(vcs: np.ndarray) -> np.ndarray:
    """``L[i, j]`` is True iff ``vcs[i] < vcs[j]`` in the vector clock order."""
    le = np.all(vcs[:, None, :] <= vcs[None, :, :], axis=2)
    ne = np.any(vcs[:, None, :] != vcs[None, :, :], axis=2)
    return le & ne


def _deliveries(pid: ProcessId, h: History) -> List[Message]:
    return [e.message for e in oldest_first(h) if isinstance(e, Deliver) and e.pid == pid]


def check_lcd(pid: ProcessId, h: History) -> List[Violation]:
    """Pairs delivered at ``pid`` whose delivery order contradicts clock order."""
    ms = _deliveries(pid, h)
    if len(ms) < 2:
        return []
    less = _vc_less_matrix(np.array([m.vc for m in ms], dtype=np.int64))
    # earlier position i, later position j, clock of j strictly below clock of i
    bad = np.argwhere(np.triu(less.T, k=1))
    return [
        Violation(ViolationKind.LCD, pid, ms[j].key, ms[i].key,
                  f"{ms[j].key} has clock {list(ms[j].vc)} < {list(ms[i].vc)} "
                  f"of {ms[i].key} but was delivered after it")
        for i, j in bad
    ]


def check_cd(x: ExecutionState, hb: Optional[HappensBefore] = None) -> List[Violation]:
    """Pairs delivered at some process against happens-before order of their broadcasts."""
    hb = hb or HappensBefore(x)
    out: List[Violation] = []
    for p in x.procs:
        ms = _deliveries(p.id, p.history)
        bits = [1 << hb.broadcast_index(m.key) for m in ms]
        later = 0
        for i in range(len(ms) - 1, -1, -1):
            hits = hb.broadcast_ancestors(ms[i].key) & later
            while hits:
                low = hits & -hits
                m1 = hb.broadcasts[low.bit_length() - 1]
                out.append(Violation(
                    ViolationKind.CD, p.id, m1.key, ms[i].key,
                    f"broadcast of {m1.key} happens before broadcast of {ms[i].key}, "
                    f"but process {p.id} delivered {ms[i].key} first"))
                hits ^= low
            later |= bits[i]
    return out


def check_vc_hb_correspondence(x: ExecutionState, hb: Optional[HappensBefore] = None) -> List[Violation]:
    """Flag broadcast pairs where happens-before and clock order disagree."""
    hb = hb or HappensBefore(x)
    ms = hb.broadcasts
    if len(ms) < 2:
        return []
    hb_m = hb.broadcast_matrix()
    vc_m = _vc_less_matrix(np.array([m.vc for m in ms], dtype=np.int64))
    out = []
    for i, j in np.argwhere(hb_m != vc_m):
        a, b = ms[i], ms[j]
        out.append(Violation(
            ViolationKind.CORRESPONDENCE, a.sender, a.key, b.key,
            f"happens-before={bool(hb_m[i, j])} but vc_less({list(a.vc)}, {list(b.vc)})={bool(vc_m[i, j])}"))
    return out


@dataclass
class Report:
    lcd: List[Violation] = field(default_factory=list)
    cd: List[Violation] = field(default_factory=list)
    correspondence: List[Violation] = field(default_factory=list)

    @property
    def all(self) -> List[Violation]:
        return self.lcd + self.cd + self.correspondence

    @property
    def clean(self) -> bool:
        return not self.all


def check_execution(x: ExecutionState) -> Report:
    """Run every check: LCD per process, CD, and the clock correspondence."""
    hb = HappensBefore(x)
    lcd = [v for p in x.procs for v in check_lcd(p.id, p.history)]
    return Report(lcd=lcd, cd=check_cd(x, hb), correspondence=check_vc_hb_correspondence(x, hb))
