"""Counter-based random streams.

Every uniform used anywhere in the package is a pure function of
``(master_seed, experiment_id, stream, replication, sub_index, step, slot)``.
The generator is Philox4x32-10 (Salmon et al., SC'11), evaluated in
vectorised numpy so that each replication owns its own counter range and
results never depend on how replications are split across workers.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK32 = np.uint64(0xFFFFFFFF)
_SHIFT32 = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of four uint32-compatible arrays (broadcastable)
    key : pair of python ints (32 bit each)

    Returns
    -------
    tuple of four uint64 arrays holding 32-bit words
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK32 for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0, k1 = int(key[0]) & 0xFFFFFFFF, int(key[1]) & 0xFFFFFFFF
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & 0xFFFFFFFF
            k1 = (k1 + _W1) & 0xFFFFFFFF
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT32, p0 & _MASK32
        hi1, lo1 = p1 >> _SHIFT32, p1 & _MASK32
        c0, c1, c2, c3 = (
            hi1 ^ c1 ^ np.uint64(k0),
            lo1,
            hi0 ^ c3 ^ np.uint64(k1),
            lo0,
        )
    return c0, c1, c2, c3


def _to_open_unit(w0, w1):
    # 53 random bits mapped to the open interval (0, 1)
    a = (w0 >> np.uint64(5)).astype(np.float64)
    b = (w1 >> np.uint64(6)).astype(np.float64)
    return (a * 67108864.0 + b + 0.5) / 9007199254740992.0


def derive_key(master_seed, *labels):
    """64-bit Philox key from a seed and any number of labels."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(master_seed).to_bytes(8, "little", signed=False))
    for lab in labels:
        h.update(b"\x1f")
        h.update(str(lab).encode())
    v = int.from_bytes(h.digest(), "little")
    return v & 0xFFFFFFFF, v >> 32


@dataclass(frozen=True)
class RngPolicy:
    """Seeding contract shared by every sampling routine.

    A stream is identified by a label (``"tail/n=32"``, ``"future"``, ...)
    hashed together with ``master_seed`` and ``experiment_id`` into the
    Philox key.  Inside a stream the 128-bit counter is
    ``(slot, step, replication, sub_index)``, so distinct tuples can never
    reuse a counter.
    """

    master_seed: int = 0
    experiment_id: str = "default"

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")

    def key(self, stream):
        return derive_key(self.master_seed, self.experiment_id, stream)

    def uniforms(self, stream, reps, step, n_slots, sub=0):
        """Uniforms on (0, 1) with shape ``broadcast(reps, sub).shape + (n_slots,)``."""
        reps = np.asarray(reps, dtype=np.uint64)
        sub = np.asarray(sub, dtype=np.uint64)
        reps, sub = np.broadcast_arrays(reps, sub)
        slots = np.arange(n_slots, dtype=np.uint64)
        w = philox4x32(
            (slots, np.uint64(step), reps[..., None], sub[..., None]),
            self.key(stream),
        )
        return _to_open_unit(w[0], w[1])

    def generator(self, stream):
        """numpy Generator for bulk work (bootstrap resampling)."""
        k0, k1 = self.key(stream)
        return np.random.Generator(np.random.Philox(key=(k1 << 32) | k0))

    def child(self, experiment_id):
        return RngPolicy(self.master_seed, experiment_id)


def as_policy(seed_or_policy, experiment_id="default"):
    if isinstance(seed_or_policy, RngPolicy):
        return seed_or_policy
    return RngPolicy(int(seed_or_policy), experiment_id)
