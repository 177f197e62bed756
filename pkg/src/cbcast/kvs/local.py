"""An in-process KVS cluster wired through a seeded, reordering network.

Useful for tests and demos: no sockets or threads, so every run is
reproducible from its seed. Messages travel as wire dicts through the same
``handle_peer_payload`` path the HTTP endpoint uses.
"""

from __future__ import annotations

import random
from typing import Any, List, Optional, Tuple

from ..protocol import Message
from ..vector_clock import ProcessId
from .node import KvsNode


class LocalCluster:
    def __init__(self, n: int, seed: int = 0, batch_max: int = 8):
        self.rng = random.Random(seed)
        self.batch_max = batch_max
        self.network: List[Tuple[ProcessId, dict]] = []
        self.nodes = [KvsNode(i, n, outbox=self._fanout(i)) for i in range(n)]
        for node in self.nodes:
            node.ready = True

    def _fanout(self, src: ProcessId):
        def send(m: Message) -> None:
            wire = m.to_wire()
            self.network.extend((dest, wire) for dest in range(len(self.nodes)) if dest != src)
        return send

    def pump(self, k: Optional[int] = None) -> int:
        """Hand up to ``k`` randomly chosen in-flight messages to their
        destinations (in batches per destination), then let every node deliver."""
        k = len(self.network) if k is None else min(k, len(self.network))
        self.rng.shuffle(self.network)
        picked, self.network = self.network[:k], self.network[k:]
        for dest in range(len(self.nodes)):
            msgs = [w for d, w in picked if d == dest]
            for i in range(0, len(msgs), self.batch_max):
                self.nodes[dest].handle_peer_payload({"msgs": msgs[i:i + self.batch_max]})
        for node in self.nodes:
            node.deliver_ready()
        return k

    def settle(self) -> None:
        while self.network:
            self.pump()
        for node in self.nodes:
            node.deliver_ready()

    def stores(self) -> List[str]:
        return [node.snapshot()[1] for node in self.nodes]

    def get(self, node: int, key: str) -> Tuple[bool, Any]:
        return self.nodes[node].get(key)
