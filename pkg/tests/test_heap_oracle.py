"""The region heap against the brute-force byte-map model, op for op."""

import random

import pytest
from hypothesis import given, settings, strategies as st

from pmcu.errors import DoubleFree, InvalidFree, OutOfMemory

from oracles import DOUBLE, INVALID, OOM, ByteMapHeap

ORIGIN = 0x2002_0000


def outcome(fn, *args):
    try:
        return fn(*args)
    except OutOfMemory:
        return OOM
    except DoubleFree:
        return DOUBLE
    except InvalidFree:
        return INVALID


def drive(k, ops, size=16 * 1024, quarantine=1024):
    """Apply ``ops`` to both models; return the first divergence or None."""
    heap = k.RegionHeap(bytearray(size), ORIGIN, ORIGIN, size, quarantine=quarantine)
    model = ByteMapHeap(ORIGIN, size, quarantine=quarantine)
    for i, (op, arg) in enumerate(ops):
        if op == "alloc":
            got, want = outcome(heap.alloc, arg), model.alloc(arg)
        else:
            got, want = outcome(heap.free, arg), model.free(arg)
        if got != want:
            return i, op, arg, got, want
    return None


def random_ops(rng: random.Random, n: int, max_size: int = 256):
    ops, issued = [], []
    for _ in range(n):
        r = rng.random()
        if r < 0.55 or not issued:
            ops.append(("alloc", rng.randint(1, max_size)))
            issued.append(len(ops) - 1)
        elif r < 0.95:
            ops.append(("free_nth", rng.randrange(len(issued))))
        else:
            ops.append(("free", ORIGIN + rng.randrange(0, 16 * 1024)))
    return ops


def resolve(k, ops, **kw):
    """Turn ``free_nth`` into concrete addresses using the model's own answers."""
    model = ByteMapHeap(ORIGIN, kw.get("size", 16 * 1024), quarantine=kw.get("quarantine", 1024))
    addrs, out = [], []
    for op, arg in ops:
        if op == "alloc":
            a = model.alloc(arg)
            if a != OOM:
                addrs.append(a)
            out.append(("alloc", arg))
        else:
            target = addrs[arg % len(addrs)] if op == "free_nth" and addrs else arg
            model.free(target)
            out.append(("free", target))
    return out


def test_oracle_first_alloc_after_redzone():
    m = ByteMapHeap(0, 1024)
    assert m.alloc(16) == 16
    assert m.alloc(1024) == OOM


@pytest.mark.parametrize("seed", range(8))
def test_matches_oracle_random(kimpl, seed):
    ops = resolve(kimpl, random_ops(random.Random(seed), 3000))
    assert drive(kimpl, ops) is None


def test_matches_oracle_under_memory_pressure(kimpl):
    rng = random.Random(99)
    ops = resolve(kimpl, random_ops(rng, 4000), size=4096, quarantine=512)
    assert drive(kimpl, ops, size=4096, quarantine=512) is None


@settings(max_examples=80, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(["alloc", "free_nth", "free"]), st.integers(1, 4096)),
                max_size=300))
def test_matches_oracle_hypothesis(kimpl, raw):
    ops = [(op, (arg % 256) + 1 if op == "alloc" else (ORIGIN + arg if op == "free" else arg)) for op, arg in raw]
    ops = resolve(kimpl, ops, size=4096, quarantine=256)
    assert drive(kimpl, ops, size=4096, quarantine=256) is None
