"""Causal broadcast (CBCAST) with vector clocks, plus executable checkers,
a seeded simulator, and a replicated key-value store built on top."""

from .protocol import (
    Broadcast,
    Deliver,
    Message,
    OpBroadcast,
    OpDeliver,
    OpReceive,
    Process,
    ProtocolInvariantError,
    broadcast,
    deliver,
    deliverable,
    dequeue,
    hist_vc,
    process_new,
    receive,
    step,
)
from .vector_clock import (
    ClockError,
    vc_combine,
    vc_concurrent,
    vc_less,
    vc_less_equal,
    vc_new,
    vc_tick,
)

__version__ = "0.1.0"

__all__ = [
    "Broadcast", "ClockError", "Deliver", "Message", "OpBroadcast", "OpDeliver", "OpReceive",
    "Process", "ProtocolInvariantError", "broadcast", "deliver", "deliverable", "dequeue",
    "hist_vc", "process_new", "receive", "step", "vc_combine", "vc_concurrent", "vc_less",
    "vc_less_equal", "vc_new", "vc_tick",
]
