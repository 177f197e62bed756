"""Outbound fan-out of broadcast messages to peer nodes over HTTP.

One worker thread per peer drains its own FIFO queue, packing up to
``batch_max`` pending messages into a single POST. Failed posts are retried
with backoff a bounded number of times, then dropped and logged.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from typing import Dict, List, Optional

import httpx

from ..protocol import Message
from ..vector_clock import ProcessId

log = logging.getLogger(__name__)

_STOP = object()


class PeerSender:
    def __init__(self, peers: Dict[ProcessId, str], batch_max: int = 8,
                 retries: int = 5, backoff: float = 0.05, timeout: float = 5.0):
        self.peers = dict(peers)
        self.batch_max = batch_max
        self.retries = retries
        self.backoff = backoff
        self.timeout = timeout
        self._queues: Dict[ProcessId, queue.Queue] = {pid: queue.Queue() for pid in self.peers}
        self._threads: List[threading.Thread] = []
        self.failed = 0

    def __call__(self, m: Message) -> None:
        wire = m.to_wire()
        for q in self._queues.values():
            q.put(wire)

    def start(self) -> None:
        for pid, url in self.peers.items():
            t = threading.Thread(target=self._worker, args=(pid, url.rstrip("/")),
                                 name=f"peer-{pid}", daemon=True)
            t.start()
            self._threads.append(t)

    def stop(self, timeout: float = 5.0) -> None:
        for q in self._queues.values():
            q.put(_STOP)
        for t in self._threads:
            t.join(timeout)
        self._threads.clear()

    def _next_batch(self, q: queue.Queue) -> Optional[list]:
        first = q.get()
        if first is _STOP:
            return None
        batch = [first]
        while len(batch) < self.batch_max:
            try:
                item = q.get_nowait()
            except queue.Empty:
                break
            if item is _STOP:
                q.put(_STOP)
                break
            batch.append(item)
        return batch

    def _worker(self, pid: ProcessId, url: str) -> None:
        with httpx.Client(timeout=self.timeout) as client:
            while (batch := self._next_batch(self._queues[pid])) is not None:
                self._post(client, pid, f"{url}/internal/messages", batch)

    def _post(self, client: httpx.Client, pid: ProcessId, url: str, batch: list) -> bool:
        for attempt in range(self.retries):
            try:
                r = client.post(url, json={"msgs": batch})
                if r.status_code == 200:
                    return True
                if 400 <= r.status_code < 500:
                    log.error("peer %d rejected %d messages: %s", pid, len(batch), r.text)
                    break
            except httpx.HTTPError as e:
                log.debug("post to peer %d failed (attempt %d): %s", pid, attempt + 1, e)
            time.sleep(self.backoff * 2 ** attempt)
        self.failed += len(batch)
        log.warning("dropping %d messages for peer %d", len(batch), pid)
        return False
