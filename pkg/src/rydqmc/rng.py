"""Deterministic per-chain random numbers: xoshiro256** with splitmix64 seeding.

The generator state is four uint64 words held in a numpy array, so it can be
mutated inside numba kernels, copied for retry-after-overflow, and written to
checkpoints for bit-exact resume.  One chain owns one state; chains never
share generators.
"""

from __future__ import annotations

import numpy as np
from numba import njit, uint64

_U64 = np.uint64
_DOUBLE_UNIT = 1.0 / 9007199254740992.0  # 2**-53


@njit(uint64(uint64), cache=True)
def _splitmix64(z):
    z = (z ^ (z >> uint64(30))) * uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> uint64(27))) * uint64(0x94D049BB133111EB)
    return z ^ (z >> uint64(31))


def seed_state(seed: int) -> np.ndarray:
    """Expand an integer seed into a full xoshiro256** state (4 uint64 words)."""
    state = np.empty(4, dtype=np.uint64)
    z = _U64(seed & 0xFFFFFFFFFFFFFFFF)
    golden = _U64(0x9E3779B97F4A7C15)
    for k in range(4):
        z = _U64((int(z) + int(golden)) & 0xFFFFFFFFFFFFFFFF)
        state[k] = _splitmix64(z)
    if not state.any():  # all-zero state is the one forbidden point
        state[0] = _U64(1)
    return state


@njit(uint64(uint64[:]), cache=True, inline="always")
def next_u64(state):
    s1 = state[1]
    result = s1 * uint64(5)
    result = ((result << uint64(7)) | (result >> uint64(57))) * uint64(9)
    t = s1 << uint64(17)
    state[2] ^= state[0]
    state[3] ^= s1
    state[1] ^= state[2]
    state[0] ^= state[3]
    state[2] ^= t
    s3 = state[3]
    state[3] = (s3 << uint64(45)) | (s3 >> uint64(19))
    return result


@njit(cache=True, inline="always")
def next_double(state):
    """Uniform double in [0, 1)."""
    return (next_u64(state) >> uint64(11)) * _DOUBLE_UNIT


@njit(cache=True, inline="always")
def next_below(state, n):
    """Uniform integer in [0, n); modulo bias is O(n / 2^64), negligible here."""
    return int(next_u64(state) % uint64(n))


@njit(cache=True)
def shuffle_in_place(state, perm):
    """Fisher-Yates shuffle driven by the chain generator."""
    for k in range(len(perm) - 1, 0, -1):
        m = next_below(state, k + 1)
        perm[k], perm[m] = perm[m], perm[k]


class ChainRng:
    """Thin Python handle around one xoshiro256** state array."""

    def __init__(self, seed: int | None = None, state: np.ndarray | None = None):
        if state is not None:
            state = np.asarray(state, dtype=np.uint64)
            if state.shape != (4,):
                raise ValueError("rng state must be four uint64 words")
            self.state = state.copy()
        else:
            self.state = seed_state(0 if seed is None else seed)

    def uniform(self) -> float:
        return float(next_double(self.state))

    def below(self, n: int) -> int:
        return int(next_below(self.state, n))

    def copy(self) -> "ChainRng":
        return ChainRng(state=self.state)

    def state_tuple(self) -> tuple[int, int, int, int]:
        return tuple(int(w) for w in self.state)
