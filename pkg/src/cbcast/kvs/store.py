"""Replicated store contents and the conflict rule for concurrent writes.

Causal delivery fixes the order of causally related writes. Concurrent
writes to one key are settled last-writer-wins over the total order
``(sum(vc), sender)``, which extends the vector clock order: a causally
later write always has a strictly larger sum. Deletes leave tombstones that
take part in the same rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Any, Dict, Optional, Tuple, Union

from ..protocol import Message
from ..vector_clock import ProcessId, VectorClock


class BadCommand(ValueError):
    pass


@dataclass(frozen=True)
class Put:
    key: str
    value: Any

    def to_raw(self) -> dict:
        return {"op": "put", "key": self.key, "value": self.value}


@dataclass(frozen=True)
class Delete:
    key: str

    def to_raw(self) -> dict:
        return {"op": "delete", "key": self.key}


KvCommand = Union[Put, Delete]


def command_from_raw(raw: Any) -> KvCommand:
    if not isinstance(raw, dict):
        raise BadCommand(f"command must be an object, got {raw!r}")
    key = raw.get("key")
    if not isinstance(key, str) or not key:
        raise BadCommand(f"command key must be a non-empty string, got {key!r}")
    op = raw.get("op")
    if op == "put":
        if "value" not in raw:
            raise BadCommand("put without a value")
        return Put(key, raw["value"])
    if op == "delete":
        return Delete(key)
    raise BadCommand(f"unknown op {op!r}")


Tag = Tuple[VectorClock, ProcessId]


def beats(a: Tag, b: Tag) -> bool:
    """True iff write ``a`` wins over incumbent ``b``."""
    return (sum(a[0]), a[1]) > (sum(b[0]), b[1])


@dataclass(frozen=True)
class Entry:
    value: Any
    vc: VectorClock
    sender: ProcessId
    deleted: bool = False

    @property
    def tag(self) -> Tag:
        return (self.vc, self.sender)


class Store:
    """key -> winning :class:`Entry`, tombstones included. Not thread-safe."""

    def __init__(self) -> None:
        self.entries: Dict[str, Entry] = {}

    def get(self, key: str) -> Optional[Entry]:
        e = self.entries.get(key)
        return None if e is None or e.deleted else e

    def apply(self, m: Message) -> bool:
        """Apply a delivered message. Returns whether it took effect."""
        cmd = command_from_raw(m.raw)
        new = Entry(
            value=cmd.value if isinstance(cmd, Put) else None,
            vc=m.vc,
            sender=m.sender,
            deleted=isinstance(cmd, Delete),
        )
        old = self.entries.get(cmd.key)
        if old is not None and not beats(new.tag, old.tag):
            return False
        self.entries[cmd.key] = new
        return True

    def canonical(self) -> str:
        return json.dumps(
            {k: {"value": e.value, "vc": list(e.vc), "sender": e.sender, "deleted": e.deleted}
             for k, e in self.entries.items()},
            sort_keys=True, separators=(",", ":"),
        )

    def __len__(self) -> int:
        return sum(not e.deleted for e in self.entries.values())


def apply_command(store: Store, m: Message) -> Store:
    store.apply(m)
    return store
