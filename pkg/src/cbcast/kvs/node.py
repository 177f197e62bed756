"""One KVS replica: protocol state, store, and the background drain task.

Every protocol transition and the store update it causes happen under one
lock, so the store sees messages in exactly the history's Deliver order.
Network I/O goes through ``outbox`` and runs outside the lock.
"""

from __future__ import annotations

import logging
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

from ..protocol import Message, Process, broadcast, deliver, process_new, receive
from ..vector_clock import ClockError, ProcessId
from .store import BadCommand, Delete, KvCommand, Put, Store, command_from_raw

log = logging.getLogger(__name__)


class BadPeerMessage(ValueError):
    """Undecodable peer payload (HTTP 400)."""


class WrongClockLength(ValueError):
    """Peer message whose clock does not fit this cluster (HTTP 422)."""


@dataclass
class NodeConfig:
    self_id: ProcessId
    peers: Dict[ProcessId, str] = field(default_factory=dict)
    listen: str = "127.0.0.1:8000"
    batch_max: int = 8

    @property
    def n(self) -> int:
        return len(self.peers) + 1

    def validate(self) -> None:
        if self.self_id in self.peers:
            raise ValueError(f"node id {self.self_id} also listed as a peer")
        ids = set(self.peers) | {self.self_id}
        if ids != set(range(self.n)):
            raise ValueError(f"node ids must be exactly 0..{self.n - 1}, got {sorted(ids)}")
        if self.batch_max < 1:
            raise ValueError("batch_max must be >= 1")


class KvsNode:
    def __init__(self, self_id: ProcessId, n: int,
                 outbox: Optional[Callable[[Message], None]] = None):
        self.state: Process = process_new(n, self_id)
        self.store = Store()
        self.outbox = outbox or (lambda m: None)
        self.ready = False
        self._lock = threading.Lock()
        self._wake = threading.Event()
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.delivered_count = 0
        self._dq_sum = 0
        self._dq_samples = 0

    @property
    def id(self) -> ProcessId:
        return self.state.id

    @property
    def n(self) -> int:
        return self.state.n

    def _broadcast(self, cmd: KvCommand) -> Message:
        with self._lock:
            m, self.state = broadcast(cmd.to_raw(), self.state)
            self.store.apply(m)
        self.outbox(m)
        return m

    def put(self, key: str, value: Any) -> Message:
        return self._broadcast(Put(key, value))

    def delete(self, key: str) -> Message:
        return self._broadcast(Delete(key))

    def get(self, key: str) -> Tuple[bool, Any]:
        with self._lock:
            e = self.store.get(key)
        return (False, None) if e is None else (True, e.value)

    def decode(self, payload: Any) -> List[Message]:
        """Validate a ``{"msgs": [...]}`` body without touching state."""
        if not isinstance(payload, dict) or not isinstance(payload.get("msgs"), list):
            raise BadPeerMessage('body must be {"msgs": [...]}')
        out = []
        for obj in payload["msgs"]:
            if isinstance(obj, dict) and isinstance(obj.get("vc"), list) and len(obj["vc"]) != self.n:
                raise WrongClockLength(f"clock length {len(obj['vc'])}, cluster size {self.n}")
            try:
                m = Message.from_wire(obj)
                command_from_raw(m.raw)
            except (ClockError, BadCommand) as e:
                raise BadPeerMessage(str(e)) from None
            out.append(m)
        return out

    def receive_messages(self, msgs: Sequence[Message]) -> None:
        with self._lock:
            for m in msgs:
                self.state = receive(m, self.state)
        self._wake.set()

    def handle_peer_payload(self, payload: Any) -> int:
        msgs = self.decode(payload)
        self.receive_messages(msgs)
        return len(msgs)

    def deliver_ready(self) -> int:
        """Deliver and apply everything currently deliverable."""
        n = 0
        while True:
            with self._lock:
                out = deliver(self.state)
                if out is None:
                    return n
                m, self.state = out
                self.store.apply(m)
                self.delivered_count += 1
                self._dq_sum += len(self.state.dq)
                self._dq_samples += 1
            n += 1

    def metrics(self) -> dict:
        with self._lock:
            mean = self._dq_sum / self._dq_samples if self._dq_samples else 0.0
            return {
                "mean_dq_after_delivery": mean,
                "delivered_count": self.delivered_count,
                "queued_count": len(self.state.dq),
                "vc": list(self.state.vc),
            }

    def snapshot(self) -> Tuple[Process, str]:
        with self._lock:
            return self.state, self.store.canonical()

    def drain_loop(self, poll: float = 0.5) -> None:
        while not self._stop.is_set():
            self._wake.wait(poll)
            self._wake.clear()
            try:
                self.deliver_ready()
            except Exception:  # keep the replica alive; the failure is logged
                log.exception("drain loop failed on node %d", self.id)

    def start(self) -> None:
        if self._thread is None:
            self._stop.clear()
            self._thread = threading.Thread(target=self.drain_loop, name=f"drain-{self.id}", daemon=True)
            self._thread.start()
        self.ready = True

    def stop(self) -> None:
        self.ready = False
        self._stop.set()
        self._wake.set()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
