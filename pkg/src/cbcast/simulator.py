"""Deterministic, seeded global-step executor over an adversarial network.

Every broadcast fans out as one in-flight entry per peer. Entries may be
dropped or duplicated, and they are received in PRNG-chosen order. All
randomness comes from a single numpy ``PCG64`` stream seeded from the
config, so the same ``(config, seed)`` always produces the same trace.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from .checker import ExecutionState, Report, check_execution
from .protocol import (
    Message,
    OpReceive,
    Process,
    ProtocolInvariantError,
    broadcast,
    deliver,
    hist_vc,
    process_new,
    step,
)
from .trace import TraceEvent
from .vector_clock import ProcessId

log = logging.getLogger(__name__)

PRNG_NAME = "numpy.random.PCG64"

CATEGORIES = ("broadcast", "receive", "deliver")


class SimConfigError(ValueError):
    pass


class SimulationExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class SimConfig:
    n_procs: int
    seed: int = 0
    max_steps: int = 1000
    p_drop: float = 0.0
    p_duplicate: float = 0.0
    broadcast_weight: float = 1.0
    receive_weight: float = 1.0
    deliver_weight: float = 1.0

    def validate(self) -> None:
        if self.n_procs < 1:
            raise SimConfigError(f"n_procs must be >= 1, got {self.n_procs}")
        if self.max_steps < 0:
            raise SimConfigError(f"max_steps must be >= 0, got {self.max_steps}")
        for name in ("p_drop", "p_duplicate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise SimConfigError(f"{name} must be in [0, 1], got {v}")
        weights = self.weights
        if any(w < 0 for w in weights):
            raise SimConfigError(f"weights must be >= 0, got {weights}")
        if not any(weights):
            raise SimConfigError("at least one scheduling weight must be positive")

    @property
    def weights(self) -> Tuple[float, float, float]:
        return (self.broadcast_weight, self.receive_weight, self.deliver_weight)


@dataclass(frozen=True)
class StepRecord:
    """What one global step did.

    ``kind`` is one of ``broadcast``, ``receive``, ``deliver``, ``noop``
    (a deliver attempt with nothing deliverable) or ``quiescent``.
    """

    kind: str
    pid: Optional[ProcessId] = None
    message: Optional[Message] = None
    sent: int = 0
    dropped: int = 0


@dataclass
class Stats:
    broadcasts: int = 0
    delivered: int = 0
    dropped: int = 0
    duplicated: int = 0
    max_dq_len: int = 0
    dq_after_delivery: List[int] = field(default_factory=list)

    @property
    def mean_dq_len_after_delivery(self) -> float:
        d = self.dq_after_delivery
        return sum(d) / len(d) if d else 0.0


class Simulation:
    """One seeded execution. Not thread-safe; run one per thread.

    With ``check_invariants`` the clock/history agreement is re-derived
    from scratch after every step and a mismatch raises
    :class:`ProtocolInvariantError`.
    """

    def __init__(self, cfg: SimConfig, check_invariants: bool = False):
        cfg.validate()
        self.cfg = cfg
        self.check_invariants = check_invariants
        self.procs: List[Process] = [process_new(cfg.n_procs, i) for i in range(cfg.n_procs)]
        self.network: List[Tuple[ProcessId, Message]] = []
        self.rng = np.random.Generator(np.random.PCG64(cfg.seed))
        self.trace: List[TraceEvent] = []
        self.steps = 0
        self.stats = Stats()

    @property
    def n(self) -> int:
        return self.cfg.n_procs

    @property
    def execution(self) -> ExecutionState:
        return ExecutionState(tuple(self.procs), tuple(self.network))

    def _set(self, pid: ProcessId, p: Process) -> None:
        if self.check_invariants and hist_vc(p.history, self.n) != p.vc:
            raise ProtocolInvariantError(
                f"process {pid}: history clock {hist_vc(p.history, self.n)} != vc {p.vc}")
        self.procs[pid] = p

    def _pid(self) -> ProcessId:
        return int(self.rng.integers(self.n))

    def do_broadcast(self, pid: ProcessId, raw=None) -> StepRecord:
        if raw is None:
            raw = self.stats.broadcasts
        m, p = broadcast(raw, self.procs[pid])
        self._set(pid, p)
        self.stats.broadcasts += 1
        self.stats.delivered += 1
        self.trace.append(TraceEvent("broadcast", pid, m))
        self.trace.append(TraceEvent("deliver", pid, m))
        sent = dropped = 0
        for dest in range(self.n):
            if dest == pid:
                continue
            if self.cfg.p_drop and self.rng.random() < self.cfg.p_drop:
                dropped += 1
                continue
            self.network.append((dest, m))
            sent += 1
            if self.cfg.p_duplicate and self.rng.random() < self.cfg.p_duplicate:
                self.network.append((dest, m))
                self.stats.duplicated += 1
                sent += 1
        self.stats.dropped += dropped
        return StepRecord("broadcast", pid, m, sent=sent, dropped=dropped)

    def do_receive(self, index: int) -> StepRecord:
        # swap-remove; network order carries no meaning
        last = self.network.pop()
        if index < len(self.network):
            entry, self.network[index] = self.network[index], last
        else:
            entry = last
        dest, m = entry
        p = step(OpReceive(m), self.procs[dest])
        self._set(dest, p)
        self.stats.max_dq_len = max(self.stats.max_dq_len, len(p.dq))
        self.trace.append(TraceEvent("receive", dest, m))
        return StepRecord("receive", dest, m)

    def do_deliver(self, pid: ProcessId) -> StepRecord:
        out = deliver(self.procs[pid])
        if out is None:
            return StepRecord("noop", pid)
        m, p = out
        self._set(pid, p)
        self.stats.delivered += 1
        self.stats.dq_after_delivery.append(len(p.dq))
        self.trace.append(TraceEvent("deliver", pid, m))
        return StepRecord("deliver", pid, m)

    def x_step(self) -> StepRecord:
        """Run one randomly chosen enabled action at a random process."""
        if self.steps >= self.cfg.max_steps:
            raise SimulationExhausted(f"step budget of {self.cfg.max_steps} spent")
        enabled = [w if (c != "receive" or self.network) else 0.0
                   for c, w in zip(CATEGORIES, self.cfg.weights)]
        total = sum(enabled)
        if total == 0:
            return StepRecord("quiescent")
        self.steps += 1
        r = self.rng.random() * total
        kind = [c for c, w in zip(CATEGORIES, enabled) if w > 0][-1]
        for c, w in zip(CATEGORIES, enabled):
            if r < w:
                kind = c
                break
            r -= w
        if kind == "broadcast":
            return self.do_broadcast(self._pid())
        if kind == "receive":
            return self.do_receive(int(self.rng.integers(len(self.network))))
        return self.do_deliver(self._pid())

    def run(self) -> "Simulation":
        while self.steps < self.cfg.max_steps:
            if self.x_step().kind == "quiescent":
                break
        return self

    def queued(self) -> int:
        return sum(len(p.dq) for p in self.procs)

    def drain(self) -> int:
        """Receive and deliver, without new broadcasts, until nothing moves.

        Returns the number of messages delivered. Under a lossless network
        every delay queue is empty afterwards.
        """
        def settle(pid: ProcessId) -> int:
            k = 0
            while self.do_deliver(pid).kind == "deliver":
                k += 1
            return k

        # a receive can only unblock its destination, so after the first
        # sweep only that process needs another look
        delivered = sum(settle(pid) for pid in range(self.n))
        while self.network:
            rec = self.do_receive(int(self.rng.integers(len(self.network))))
            delivered += settle(rec.pid)
        return delivered

    def undelivered(self) -> List[Tuple[ProcessId, Tuple[ProcessId, int]]]:
        """``(pid, message key)`` for every broadcast not yet delivered at ``pid``."""
        sent = {ev.msg.key for ev in self.trace if ev.kind == "broadcast"}
        got = {(ev.pid, ev.msg.key) for ev in self.trace if ev.kind == "deliver"}
        return sorted((pid, k) for k in sent for pid in range(self.n) if (pid, k) not in got)

    def report(self) -> Report:
        return check_execution(self.execution)

    def summary(self, report: Optional[Report] = None) -> Dict:
        report = report or self.report()
        s = self.stats
        return {
            "prng": PRNG_NAME,
            "config": asdict(self.cfg),
            "steps": self.steps,
            "broadcasts": s.broadcasts,
            "delivered": s.delivered,
            "dropped": s.dropped,
            "duplicated": s.duplicated,
            "in_flight": len(self.network),
            "queued": self.queued(),
            "max_dq_len": s.max_dq_len,
            "mean_dq_len_after_delivery": s.mean_dq_len_after_delivery,
            "violations": len(report.all),
        }


def sim_new(cfg: SimConfig, check_invariants: bool = False) -> Simulation:
    return Simulation(cfg, check_invariants=check_invariants)


@dataclass
class FigureReplay:
    """A scripted execution with named messages and participants."""

    name: str
    names: Tuple[str, ...]
    procs: List[Process]
    messages: Dict[str, Message] = field(default_factory=dict)
    buffered: List[Tuple[str, str]] = field(default_factory=list)
    trace: List[TraceEvent] = field(default_factory=list)

    @property
    def execution(self) -> ExecutionState:
        return ExecutionState(tuple(self.procs))

    def vc(self, who: str) -> Tuple[int, ...]:
        return self.procs[self.names.index(who)].vc

    def bcast(self, who: str, name: str) -> Message:
        pid = self.names.index(who)
        m, self.procs[pid] = broadcast(name, self.procs[pid])
        self.messages[name] = m
        self.trace += [TraceEvent("broadcast", pid, m), TraceEvent("deliver", pid, m)]
        return m

    def recv(self, who: str, name: str) -> None:
        """Receive ``name`` at ``who`` and deliver everything that is ready."""
        pid = self.names.index(who)
        m = self.messages[name]
        self.procs[pid] = step(OpReceive(m), self.procs[pid])
        self.trace.append(TraceEvent("receive", pid, m))
        delivered = set()
        while (out := deliver(self.procs[pid])) is not None:
            got, self.procs[pid] = out
            delivered.add(got.key)
            self.trace.append(TraceEvent("deliver", pid, got))
        if m.key not in delivered:
            self.buffered.append((who, name))


def replay_figures() -> Dict[str, FigureReplay]:
    """Scripted runs of the three-process example executions.

    ``fig2``: p1 broadcasts m1, p2 delivers it and broadcasts m2, p3
    broadcasts m3 concurrently and receives m2 before m1.
    ``fig4_left``: Carol receives Alice's two messages in reverse order.
    ``fig4_right``: Carol receives Bob's reply before Alice's second message.
    """
    fig2 = FigureReplay("fig2", ("p1", "p2", "p3"), [process_new(3, i) for i in range(3)])
    fig2.bcast("p1", "m1")
    fig2.recv("p2", "m1")
    fig2.bcast("p2", "m2")
    fig2.bcast("p3", "m3")
    fig2.recv("p3", "m2")
    fig2.recv("p3", "m1")
    fig2.recv("p1", "m3")
    fig2.recv("p1", "m2")
    fig2.recv("p2", "m3")

    people = ("alice", "bob", "carol")
    left = FigureReplay("fig4_left", people, [process_new(3, i) for i in range(3)])
    left.bcast("alice", "lost")
    left.bcast("alice", "found")
    left.recv("bob", "lost")
    left.recv("bob", "found")
    left.recv("carol", "found")
    left.recv("carol", "lost")

    right = FigureReplay("fig4_right", people, [process_new(3, i) for i in range(3)])
    right.bcast("alice", "lost")
    right.bcast("alice", "found")
    right.recv("bob", "lost")
    right.recv("bob", "found")
    right.bcast("bob", "glad")
    right.recv("carol", "lost")
    right.recv("carol", "glad")
    right.recv("carol", "found")
    right.recv("alice", "glad")

    return {"fig2": fig2, "fig4_left": left, "fig4_right": right}
