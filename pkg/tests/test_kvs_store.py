import itertools

import pytest

from cbcast.kvs.store import BadCommand, Delete, Put, Store, apply_command, beats, command_from_raw
from cbcast.protocol import Message
from cbcast.vector_clock import vc_less


def m(vc, sender, cmd):
    return Message(vc=tuple(vc), sender=sender, raw=cmd.to_raw())


def run(order):
    s = Store()
    for x in order:
        apply_command(s, x)
    return s


def test_concurrent_puts_tie_broken_by_sender():
    a = m([1, 0, 0], 0, Put("k", 1))
    b = m([0, 0, 1], 2, Put("k", 2))
    for order in ([a, b], [b, a]):
        s = run(order)
        assert s.get("k").value == 2
    assert run([a, b]).canonical() == run([b, a]).canonical()


def test_causally_later_write_wins():
    a = m([1, 0, 0], 0, Put("k", "old"))
    b = m([2, 0, 0], 0, Put("k", "new"))
    assert run([a, b]).get("k").value == "new"


def test_delete_vs_concurrent_put():
    d = m([1, 1, 0], 1, Delete("k"))
    p = m([1, 0, 1], 2, Put("k", "v"))
    base = m([1, 0, 0], 0, Put("k", "base"))
    outcomes = {run([base] + list(o)).canonical() for o in itertools.permutations([d, p])}
    assert len(outcomes) == 1
    assert run([base, d, p]).get("k").value == "v"  # equal sums, sender 2 > 1


def test_delete_hides_key():
    s = run([m([1], 0, Put("a", 1)), m([2], 0, Delete("a"))])
    assert s.get("a") is None
    assert len(s) == 0
    assert '"deleted":true' in s.canonical()


def test_beats_extends_vc_order():
    clocks = [c for c in itertools.product(range(3), repeat=3) if any(c)]
    for a, b in itertools.product(clocks, repeat=2):
        if vc_less(b, a):
            assert beats((a, 0), (b, 2))


@pytest.mark.parametrize("raw", [
    None, {"op": "put", "key": ""}, {"op": "put", "key": "a"}, {"op": "nope", "key": "a"},
    {"op": "delete", "key": 3},
])
def test_bad_commands(raw):
    with pytest.raises(BadCommand):
        command_from_raw(raw)


def test_command_roundtrip():
    for c in (Put("a", {"x": [1, 2]}), Delete("b")):
        assert command_from_raw(c.to_raw()) == c
