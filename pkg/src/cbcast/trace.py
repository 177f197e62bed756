"""JSON-lines trace files.

One record per line, in global occurrence order::

    {"kind": "broadcast" | "deliver" | "receive", "pid": 0, "msg": {"vc": [...], "sender": 0, "raw": ...}}

``broadcast`` and ``deliver`` lines map one-to-one onto history events (a
broadcast is followed by its sender's own ``deliver`` line). ``receive``
lines record network arrival only; they never enter a process history.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, List, Union

from .protocol import Message
from .vector_clock import ClockError, ProcessId

KINDS = ("broadcast", "deliver", "receive")


class TraceFormatError(ValueError):
    def __init__(self, lineno: int, reason: str):
        super().__init__(f"line {lineno}: {reason}")
        self.lineno = lineno
        self.reason = reason


@dataclass(frozen=True)
class TraceEvent:
    kind: str
    pid: ProcessId
    msg: Message

    def to_json(self) -> str:
        return json.dumps({"kind": self.kind, "pid": self.pid, "msg": self.msg.to_wire()},
                          separators=(",", ":"), sort_keys=True)


def parse_line(line: str, lineno: int = 0) -> TraceEvent:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise TraceFormatError(lineno, f"invalid JSON: {e.msg}") from None
    if not isinstance(obj, dict):
        raise TraceFormatError(lineno, "record must be a JSON object")
    kind, pid = obj.get("kind"), obj.get("pid")
    if kind not in KINDS:
        raise TraceFormatError(lineno, f"unknown kind {kind!r}")
    if isinstance(pid, bool) or not isinstance(pid, int) or pid < 0:
        raise TraceFormatError(lineno, f"bad pid {pid!r}")
    try:
        msg = Message.from_wire(obj.get("msg"))
    except ClockError as e:
        raise TraceFormatError(lineno, str(e)) from None
    if pid >= len(msg.vc):
        raise TraceFormatError(lineno, f"pid {pid} out of range for clock of length {len(msg.vc)}")
    if kind == "broadcast" and msg.sender != pid:
        raise TraceFormatError(lineno, f"broadcast at pid {pid} of a message sent by {msg.sender}")
    return TraceEvent(kind, pid, msg)


def iter_trace(stream: Iterable[str]) -> Iterator[TraceEvent]:
    for lineno, line in enumerate(stream, 1):
        if line.strip():
            yield parse_line(line, lineno)


def read_trace(path: Union[str, Path]) -> List[TraceEvent]:
    with open(path, encoding="utf-8") as f:
        return list(iter_trace(f))


def write_trace(out: Union[str, Path, IO[str]], events: Iterable[TraceEvent]) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8") as f:
            write_trace(f, events)
        return
    for ev in events:
        out.write(ev.to_json())
        out.write("\n")
