"""Counter-based uniform streams (Philox4x32-10).

A uniform is a pure function of (master seed, four 32-bit counter words), so
replicate ``r`` sees the same numbers no matter which worker simulates it or
in which order. The engine uses counter words
``(replicate, look, arm, scenario)``; dose finding uses
``(replicate, cohort, patient, scenario)``.
"""

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)


def philox4x32(counter, key, rounds=10):
    """Philox4x32 block function.

    ``counter`` is a sequence of four uint32 arrays (broadcastable), ``key``
    a pair of uint32 scalars. Returns four uint32 arrays (as uint64 dtype).
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) & _MASK for c in counter)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(int(key[0]) & 0xFFFFFFFF)
    k1 = np.uint64(int(key[1]) & 0xFFFFFFFF)
    for r in range(rounds):
        if r:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _SHIFT, p0 & _MASK
        hi1, lo1 = p1 >> _SHIFT, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _seed_key(master_seed):
    seed = int(master_seed)
    if seed < 0 or seed >= 2**64:
        raise ValueError("master_seed must be in [0, 2**64)")
    return seed & 0xFFFFFFFF, seed >> 32


def uniforms(master_seed, replicate, word1, word2, word3):
    """Uniforms on [0, 1) with 53-bit resolution, one per broadcast counter."""
    x0, x1, _, _ = philox4x32((replicate, word1, word2, word3), _seed_key(master_seed))
    hi = (x0 >> np.uint64(5)).astype(np.float64)
    lo = (x1 >> np.uint64(6)).astype(np.float64)
    return (hi * 67108864.0 + lo) / 9007199254740992.0


class ReplicateStream:
    """The random stream of one replicate of one scenario."""

    def __init__(self, master_seed, scenario_index, replicate):
        _seed_key(master_seed)
        self.master_seed = int(master_seed)
        self.scenario_index = int(scenario_index)
        self.replicate = int(replicate)

    def uniform(self, word1, word2):
        return float(uniforms(self.master_seed, self.replicate, word1, word2,
                              self.scenario_index))

    def __repr__(self):
        return (f"ReplicateStream(seed={self.master_seed}, "
                f"scenario={self.scenario_index}, replicate={self.replicate})")
