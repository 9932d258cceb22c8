"""Deterministic multi-stream random number generation.

Every queue owns independent substreams for arrivals and perturbation
coins, so a run is reproducible bit-for-bit from its master seed and the
compiled kernel and the pure-Python kernel consume randomness in exactly
the same order.  The generator is xoshiro256** seeded through splitmix64;
both are implemented here and mirrored verbatim in the C kernel.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53

# Stream purposes; the numeric codes enter the per-stream seed derivation.
ARRIVAL = 0
COIN = 1
DIRECTION = 2
POLICY = 3


def _splitmix64(state: int) -> tuple[int, int]:
    state = (state + _GOLDEN) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def derive_state(master_seed: int, purpose: int, index: int) -> np.ndarray:
    """Derive the 4-word xoshiro256** state of one substream."""
    key = ((purpose << 32) | (index & 0xFFFFFFFF)) & _MASK64
    s = (master_seed ^ ((key + 1) * _GOLDEN)) & _MASK64
    words = []
    for _ in range(4):
        s, z = _splitmix64(s)
        words.append(z)
    if not any(words):
        words[0] = _GOLDEN
    return np.array(words, dtype=np.uint64)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


def xoshiro_next(s: list[int]) -> int:
    """Advance a 4-word state (list of python ints) and return a uint64."""
    result = (_rotl((s[1] * 5) & _MASK64, 7) * 9) & _MASK64
    t = (s[1] << 17) & _MASK64
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


def uniform_from_bits(x: int) -> float:
    return (x >> 11) * _INV_2_53


class Stream:
    """One substream with uniform and normal draws."""

    __slots__ = ("state",)

    def __init__(self, state: np.ndarray):
        self.state = [int(w) for w in state]

    def uniform(self) -> float:
        """Uniform draw in [0, 1)."""
        return uniform_from_bits(xoshiro_next(self.state))

    def normal(self) -> float:
        """Standard normal via Box-Muller (no spare caching)."""
        u1 = self.uniform()
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(1.0 - u1)) * math.cos(2.0 * math.pi * u2)

    def export(self) -> np.ndarray:
        return np.array(self.state, dtype=np.uint64)


class RngStreams:
    """Per-(entity, purpose) substreams for one simulation run.

    Queue-indexed substreams (arrivals, coins) are held as ``uint64[Q, 4]``
    arrays; the kernels mutate those arrays in place, so state survives
    across phase calls and across backends.  Queues are indexed customers
    first (0..I-1) then servers (I..I+J-1).
    """

    def __init__(self, master_seed: int, n_customers: int, n_servers: int):
        self.master_seed = int(master_seed)
        self.n_customers = n_customers
        self.n_servers = n_servers
        n_queues = n_customers + n_servers
        self.arrival_state = np.vstack(
            [derive_state(self.master_seed, ARRIVAL, q) for q in range(n_queues)]
        )
        self.coin_state = np.vstack(
            [derive_state(self.master_seed, COIN, q) for q in range(n_queues)]
        )
        self.direction = Stream(derive_state(self.master_seed, DIRECTION, 0))
        self.policy = Stream(derive_state(self.master_seed, POLICY, 0))

    def arrival_stream(self, queue: int) -> Stream:
        """Stream view for one queue; writes back on sync()."""
        return _RowStream(self.arrival_state, queue)

    def coin_stream(self, queue: int) -> Stream:
        return _RowStream(self.coin_state, queue)


class _RowStream(Stream):
    """Stream backed by one row of a state matrix; syncs on every draw."""

    __slots__ = ("_matrix", "_row")

    def __init__(self, matrix: np.ndarray, row: int):
        self._matrix = matrix
        self._row = row
        super().__init__(matrix[row])

    def uniform(self) -> float:
        value = super().uniform()
        self._matrix[self._row] = self.export()
        return value
