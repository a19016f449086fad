"""Counter-based pseudo randomness shared by every sampler in the package.

All randomness is a pure function of 64-bit words, so any worker can evaluate
any replica independently and results never depend on scheduling.  Two
primitives are exposed:

* ``hash_words(w0, w1, ...)`` -- keyed hash of a word sequence.  Words are
  consumed in order as unsigned 64-bit integers (two's complement for signed
  inputs), equivalent to hashing the little-endian byte concatenation
  ``w0 || w1 || ...``.  The chain is

      h = mix64(w0 ^ 0x C2B2AE3D27D4EB4F)
      for each further word w:  h = mix64((h + 0x9E3779B97F4A7C15) ^ (w * 0xD6E8FEB86659FD93))

  with ``mix64`` the SplitMix64 finalizer
  ``z ^= z>>30; z *= 0xBF58476D1CE4E5B9; z ^= z>>27; z *= 0x94D049BB133111EB; z ^= z>>31``.
  This layout is frozen: reproducing environments bit-for-bit elsewhere only
  requires these constants.

* sequential streams: a stream is seeded with a ``hash_words`` value and
  advanced with the standard SplitMix64 step (state += GOLDEN, output =
  mix64(state)).  Uniforms are the top 53 bits scaled by 2^-53, so every
  value lies in [0, 1).

Stream derivation tree: ``masterSeed -> command tag -> (environment index,
replica index)``; the tags live next to the code that uses them.
"""

from __future__ import annotations

import numpy as np

MASK64 = 0xFFFFFFFFFFFFFFFF
GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_SEED0 = 0xC2B2AE3D27D4EB4F
_WORDMUL = 0xD6E8FEB86659FD93

U53_INV = 2.0 ** -53


def mix64(z: int) -> int:
    """SplitMix64 finalizer on python ints (reference implementation)."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & MASK64
    return z ^ (z >> 31)


def hash_words(*words: int) -> int:
    """Keyed hash of a word sequence; see module docstring for the layout."""
    h = mix64((words[0] & MASK64) ^ _SEED0)
    for w in words[1:]:
        h = mix64(((h + GOLDEN) & MASK64) ^ ((w & MASK64) * _WORDMUL & MASK64))
    return h


def stream_next(state: int) -> tuple[int, int]:
    """Advance a SplitMix64 stream; returns (new_state, output_word)."""
    state = (state + GOLDEN) & MASK64
    return state, mix64(state)


def word_to_unit(word: int) -> float:
    """Map a 64-bit word to a uniform in [0, 1) using the top 53 bits."""
    return (word >> 11) * U53_INV


def hash_words_array(seed: int, coord_cols: list[np.ndarray]) -> np.ndarray:
    """Vectorized hash_words(seed, x_1, ..., x_d) over site arrays.

    Bit-identical to the scalar chain; signed coordinates are reduced to
    uint64 two's complement exactly as numba's int64->uint64 cast does.
    """
    with np.errstate(over="ignore"):
        h0 = _mix64_arr(np.uint64((seed & MASK64) ^ _SEED0))
        h = np.broadcast_to(h0, coord_cols[0].shape).copy()
        for col in coord_cols:
            w = col.astype(np.int64).view(np.uint64)
            h = _mix64_arr((h + np.uint64(GOLDEN)) ^ (w * np.uint64(_WORDMUL)))
    return h


def _mix64_arr(z: np.ndarray | np.uint64) -> np.ndarray | np.uint64:
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
        return z ^ (z >> np.uint64(31))


def units_from_hashes(h: np.ndarray) -> np.ndarray:
    return (h >> np.uint64(11)) * U53_INV


# Command tags for the stream-derivation tree (documented, stable).
TAG_QD_MC = 1
TAG_QUENCHED = 2
TAG_ANNEALED = 3
TAG_HIT = 4
TAG_VISITS = 5
TAG_DISTINCT = 6
TAG_EVENTS = 7
TAG_SIGMA = 8
TAG_ENV_SEED = 9
TAG_PERCO = 10
