"""Counter-addressable random streams usable inside numba kernels.

Every forest gets its own xoshiro256** state derived from (seed, index), so a
forest depends only on its index and never on which thread sampled it.
"""
import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_LOW32 = np.uint64(0xFFFFFFFF)
_TWO32 = np.uint64(1 << 32)


@numba.njit(inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@numba.njit
def stream_state(seed, index):
    """xoshiro256** state for stream ``index`` of master ``seed``."""
    state = np.empty(4, dtype=np.uint64)
    x = np.uint64(seed) ^ _mix64(np.uint64(index) * _GOLDEN + _GOLDEN)
    for i in range(4):
        x = x + _GOLDEN
        state[i] = _mix64(x)
    return state


@numba.njit(inline="always")
def next_u64(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@numba.njit(inline="always")
def bounded(s, bound):
    """Uniform integer in [0, bound) without modulo bias (bound < 2**32)."""
    b = np.uint64(bound)
    m = (next_u64(s) >> np.uint64(32)) * b
    low = m & _LOW32
    if low < b:
        thresh = (_TWO32 - b) % b
        while low < thresh:
            m = (next_u64(s) >> np.uint64(32)) * b
            low = m & _LOW32
    return np.int64(m >> np.uint64(32))


def derive_seed(seed, *keys) -> int:
    """Independent 64-bit seed for a sub-computation (an iteration, a phase)."""
    entropy = [int(seed) & (2**64 - 1)] + [int(k) for k in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, np.uint64)[0])
