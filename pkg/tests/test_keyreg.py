import hashlib
import random

import pytest
from hypothesis import given, strategies as st

from streamvault.errors import EpochOutOfRange
from streamvault.keyreg import (
    KeyRegressionChain,
    derive_key,
    epoch_key,
    step_state,
    unwind,
)

from conftest import load_vectors

VEC = load_vectors("keyreg")


def test_states_match_frozen_vectors():
    chain = KeyRegressionChain(bytes.fromhex(VEC["seed"]), VEC["max_epochs"])
    for epoch, expected in enumerate(VEC["states"]):
        assert chain.state(epoch).hex() == expected


def test_keys_match_frozen_vectors():
    chain = KeyRegressionChain(bytes.fromhex(VEC["seed"]), VEC["max_epochs"])
    for epoch, expected in enumerate(VEC["keys"]):
        assert chain.key(epoch).hex() == expected


def test_matches_straight_line_hashlib():
    seed = bytes(range(32))
    n = 20
    chain = KeyRegressionChain(seed, n)
    state = hashlib.sha256(b"\x00" + seed).digest()  # stm_N
    for epoch in range(n, -1, -1):
        assert chain.state(epoch) == state
        assert chain.key(epoch) == hashlib.sha256(b"\x01" + state).digest()
        state = hashlib.sha256(b"\x00" + state).digest()


def test_unwind_reaches_every_earlier_epoch():
    chain = KeyRegressionChain(bytes([7]) * 32, 50)
    top = chain.state(50)
    for epoch in range(51):
        assert unwind(top, 50, epoch) == chain.state(epoch)
        assert derive_key(top, 50, epoch) == chain.key(epoch)


def test_unwind_refuses_forward_motion():
    state = bytes(32)
    with pytest.raises(EpochOutOfRange):
        unwind(state, 3, 4)
    with pytest.raises(EpochOutOfRange):
        unwind(state, 3, -1)


def test_epoch_bounds_checked():
    chain = KeyRegressionChain(bytes(32), 4)
    with pytest.raises(EpochOutOfRange):
        chain.state(5)
    with pytest.raises(EpochOutOfRange):
        chain.key(-1)


def test_seed_must_be_32_bytes():
    with pytest.raises(ValueError):
        KeyRegressionChain(b"short", 4)
    with pytest.raises(ValueError):
        KeyRegressionChain(bytes(32), 0)


def test_state_and_key_derivations_are_domain_separated():
    state = bytes([9]) * 32
    assert step_state(state) != epoch_key(state)


def test_distinct_seeds_distinct_chains():
    a = KeyRegressionChain(bytes([1]) * 32, 8)
    b = KeyRegressionChain(bytes([2]) * 32, 8)
    assert all(a.key(i) != b.key(i) for i in range(9))


@given(st.integers(0, 200), st.integers(0, 200), st.binary(min_size=32, max_size=32))
def test_unwind_composes(hi, lo, seed):
    """Unwinding in two hops equals one hop: the chain is a functor over <=."""
    hi, lo = max(hi, lo), min(hi, lo)
    mid = (hi + lo) // 2
    chain = KeyRegressionChain(seed, 200)
    two_hops = unwind(unwind(chain.state(hi), hi, mid), mid, lo)
    assert two_hops == chain.state(lo)


@given(st.integers(1, 64), st.integers(0, 64))
def test_random_access_agrees_with_iterated_stepping(n, epoch):
    epoch = min(epoch, n)
    seed = hashlib.sha256(n.to_bytes(4, "big")).digest()
    chain = KeyRegressionChain(seed, n)
    state = hashlib.sha256(b"\x00" + seed).digest()
    for _ in range(n - epoch):
        state = hashlib.sha256(b"\x00" + state).digest()
    assert chain.state(epoch) == state


def test_keyreg_trials_many_seeds():
    """N=64-epoch chains over ten independent seeds: every member state
    reproduces every key at or below it, never above it."""
    n = 64
    for trial in range(10):
        seed = hashlib.sha256(b"trial" + bytes([trial])).digest()
        chain = KeyRegressionChain(seed, n)
        rng = random.Random(trial)
        for _ in range(20):
            t = rng.randrange(n + 1)
            i = rng.randrange(t + 1)
            assert derive_key(chain.state(t), t, i) == chain.key(i)
        # a holder of stm_t cannot name any state that hashes forward to
        # stm_{t+1}: verify the chain is not trivially cyclic
        t = rng.randrange(n)
        assert step_state(chain.state(t + 1)) == chain.state(t)
        assert step_state(chain.state(t)) != chain.state(t + 1)
