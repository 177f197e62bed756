"""Vector clock values and their algebra.

Clocks are plain tuples of non-negative ints, zero-indexed by process id.
Every operation is a pure function returning a new tuple; binary operations
reject clocks of different lengths instead of truncating.
"""

from __future__ import annotations

from typing import Sequence, Tuple

VectorClock = Tuple[int, ...]
ProcessId = int


class ClockError(ValueError):
    """Raised for malformed clocks, length mismatches, or bad indices."""


def _check_pair(a: Sequence[int], b: Sequence[int]) -> None:
    if len(a) != len(b):
        raise ClockError(f"clock length mismatch: {len(a)} != {len(b)}")


def vc_new(n: int) -> VectorClock:
    """Return a zero clock for a cluster of ``n`` processes."""
    if n < 1:
        raise ClockError(f"cluster size must be >= 1, got {n}")
    return (0,) * n


def vc_from(entries: Sequence[int]) -> VectorClock:
    """Validate ``entries`` and freeze them into a clock."""
    clock = tuple(entries)
    if not clock:
        raise ClockError("empty vector clock")
    for x in clock:
        if isinstance(x, bool) or not isinstance(x, int) or x < 0:
            raise ClockError(f"clock entries must be non-negative ints: {list(clock)!r}")
    return clock


def vc_tick(vc: VectorClock, i: ProcessId) -> VectorClock:
    if not 0 <= i < len(vc):
        raise ClockError(f"process id {i} out of range for clock of length {len(vc)}")
    return vc[:i] + (vc[i] + 1,) + vc[i + 1:]


def vc_combine(a: VectorClock, b: VectorClock) -> VectorClock:
    """Pointwise maximum of two clocks."""
    _check_pair(a, b)
    return tuple(map(max, a, b))


def vc_less_equal(a: VectorClock, b: VectorClock) -> bool:
    _check_pair(a, b)
    return all(x <= y for x, y in zip(a, b))


def vc_less(a: VectorClock, b: VectorClock) -> bool:
    """Strict order: ``a <= b`` pointwise and ``a != b``."""
    return vc_less_equal(a, b) and tuple(a) != tuple(b)


def vc_concurrent(a: VectorClock, b: VectorClock) -> bool:
    return not vc_less_equal(a, b) and not vc_less_equal(b, a)
