"""Counter-based random streams.

Per-individual draws are addressed by ``(seed, purpose, round, individual)``
through a SplitMix64-style hash, so individual ``i`` sees the same uniform in
round ``t`` no matter who else needs a draw that round or what any other
strategy did. That is what makes common random numbers work across campaigns:
two runs with the same seed differ only where their trajectories really do.

Bulk draws that are not tied to one individual (initial population, births,
campaign samples) use Philox generators keyed by ``(seed, purpose)`` with the
round as counter.
"""

from __future__ import annotations

import numpy as np

POLICY = 1
ONSET = 2
SYMPTOM = 3
RECOVERY = 4
DISPATCH = 5
BIRTH = 6
INIT = 7
ORDER = 8
SAMPLER = 9
AGING = 10

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_U_GOLDEN, _U_M1, _U_M2 = np.uint64(_GOLDEN), np.uint64(_M1), np.uint64(_M2)
_S27, _S30, _S31, _S11 = (np.uint64(k) for k in (27, 30, 31, 11))


def _mix_int(x: int) -> int:
    x = ((x ^ (x >> 30)) * _M1) & _MASK64
    x = ((x ^ (x >> 27)) * _M2) & _MASK64
    return x ^ (x >> 31)


def _stream_key(seed: int, purpose: int, round_: int) -> int:
    key = 0
    for v in (seed & _MASK64, purpose & _MASK64, round_ & _MASK64):
        key = _mix_int(((key ^ v) + _GOLDEN) & _MASK64)
    return key


def hashed_uniform(seed: int, purpose: int, round_: int, idx) -> np.ndarray:
    """Uniform [0,1) per index, a pure function of (seed, purpose, round, index)."""
    x = np.array(idx, dtype=np.uint64)
    x *= _U_GOLDEN
    x += np.uint64(_stream_key(seed, purpose, round_))
    x ^= x >> _S30
    x *= _U_M1
    x ^= x >> _S27
    x *= _U_M2
    x ^= x >> _S31
    x >>= _S11
    return x * (1.0 / 9007199254740992.0)


def generator(seed: int, purpose: int, counter: int = 0) -> np.random.Generator:
    key = np.array([seed & _MASK64, purpose & _MASK64], dtype=np.uint64)
    ctr = np.array([0, 0, 0, counter & _MASK64], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=ctr))


class Streams:
    """Per-purpose, per-round uniform draws for one replicate."""

    def __init__(self, seed: int):
        self.seed = int(seed)

    def uniform(self, purpose: int, round_: int, n: int) -> np.ndarray:
        return generator(self.seed, purpose, round_).random(n)

    def at(self, purpose: int, round_: int, idx) -> np.ndarray:
        """One uniform per individual in ``idx`` for this purpose and round."""
        return hashed_uniform(self.seed, purpose, round_, idx)

    def generator(self, purpose: int, round_: int = 0) -> np.random.Generator:
        return generator(self.seed, purpose, round_)
