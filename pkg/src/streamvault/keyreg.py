"""Hash-chain key regression.

The owner derives a chain of member states stm_N ... stm_0 from a secret
seed, where stm_{i-1} = H(stm_i) and the per-epoch symmetric key is
K_i = H'(stm_i). Handing a reader stm_t lets it compute every key K_i for
i <= t by repeated hashing, while stm_{t+1} stays unreachable without the
seed (one-wayness of H). That makes key rotation cheap: readers keep up
with a single new member state instead of one key per epoch.

H and H' are SHA-256 under distinct one-byte domain prefixes, so state
stepping can never be confused with key extraction. stm_N itself is one
state step applied to the seed, i.e. the seed acts as a virtual stm_{N+1}
that is never exposed.

Revoked readers keep everything they already had: a holder of stm_t can
still unwind keys <= t forever. Only data sealed under later epochs is
protected from them.
"""

from __future__ import annotations

from .errors import EpochOutOfRange
from .hashing import sha256

STATE_PREFIX = b"\x00"  # H: member-state step
KEY_PREFIX = b"\x01"    # H': epoch-key extraction

DEFAULT_MAX_EPOCHS = 2 ** 16


def step_state(state: bytes) -> bytes:
    """One backward step: stm_i -> stm_{i-1}."""
    return sha256(STATE_PREFIX + state)


def epoch_key(state: bytes) -> bytes:
    """Extract the 256-bit symmetric key for a member state."""
    return sha256(KEY_PREFIX + state)


def unwind(state: bytes, from_epoch: int, to_epoch: int) -> bytes:
    """Member state for to_epoch, given the state for from_epoch >= to_epoch."""
    if to_epoch < 0 or to_epoch > from_epoch:
        raise EpochOutOfRange(f"cannot unwind epoch {from_epoch} to {to_epoch}")
    for _ in range(from_epoch - to_epoch):
        state = step_state(state)
    return state


def derive_key(state: bytes, from_epoch: int, to_epoch: int) -> bytes:
    """Epoch key K_{to_epoch} from the member state for from_epoch."""
    return epoch_key(unwind(state, from_epoch, to_epoch))


class KeyRegressionChain:
    """Owner-side chain over a fixed number of epochs.

    The chain length is fixed at creation; exhausting all epochs forces a
    stream re-registration. States are precomputed (N+1 hashes, 32 bytes
    each) so owner lookups are O(1).
    """

    def __init__(self, seed: bytes, max_epochs: int = DEFAULT_MAX_EPOCHS):
        if max_epochs < 1:
            raise ValueError("max_epochs must be positive")
        if len(seed) != 32:
            raise ValueError("seed must be 32 bytes")
        self.max_epochs = max_epochs
        states = [step_state(seed)]  # stm_N
        for _ in range(max_epochs):
            states.append(step_state(states[-1]))
        states.reverse()  # states[i] == stm_i
        self._states = states

    def state(self, epoch: int) -> bytes:
        """Member state stm_epoch. This is what gets shared with readers."""
        if not 0 <= epoch <= self.max_epochs:
            raise EpochOutOfRange(f"epoch {epoch} outside [0, {self.max_epochs}]")
        return self._states[epoch]

    def key(self, epoch: int) -> bytes:
        """Symmetric key K_epoch for sealing chunks."""
        return epoch_key(self.state(epoch))
