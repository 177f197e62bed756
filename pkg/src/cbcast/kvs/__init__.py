"""Replicated in-memory key-value store on top of causal broadcast."""

from .node import BadPeerMessage, KvsNode, NodeConfig, WrongClockLength
from .store import Delete, Entry, Put, Store, apply_command, beats, command_from_raw

__all__ = [
    "BadPeerMessage", "Delete", "Entry", "KvsNode", "NodeConfig", "Put", "Store",
    "WrongClockLength", "apply_command", "beats", "command_from_raw",
]
