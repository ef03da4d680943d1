"""Portable random-number streams for trial-parallel simulation.

Every Monte Carlo trial draws from its own stream so that results are
reproducible bit-for-bit regardless of how trials are chunked or how many
worker threads run them.  Streams are derived from a 64-bit seed and a
stream index (the trial number) by hashing:

    key     = fin(fin(seed + GAMMA) + stream_index + GAMMA)
    s[i]    = fin(key + (i+1)*GAMMA)        for i = 0..3

where ``fin`` is the SplitMix64 output finalizer and GAMMA its additive
constant, i.e. the four state words are four successive SplitMix64 outputs
seeded at ``key``.  The stream itself is xoshiro256++.  Both algorithms are
published, integer-only, and platform-independent.

The generator is implemented twice on purpose: as numba-jitted primitives
used inside the simulation kernels, and as the pure-Python `RngStream`
class.  The two must agree bit-for-bit; the test suite pins that.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, types

_u8 = types.uint64
_f8 = types.float64

__all__ = ["RngStream", "stream_init", "xo_next", "next_unit", "next_exponential"]

_MASK = (1 << 64) - 1

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_G1 = np.uint64((0x9E3779B97F4A7C15 * 1) & _MASK)
_G2 = np.uint64((0x9E3779B97F4A7C15 * 2) & _MASK)
_G3 = np.uint64((0x9E3779B97F4A7C15 * 3) & _MASK)
_G4 = np.uint64((0x9E3779B97F4A7C15 * 4) & _MASK)

_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S17 = np.uint64(17)
_S23 = np.uint64(23)
_S41 = np.uint64(41)
_S45 = np.uint64(45)
_S19 = np.uint64(19)
_S11 = np.uint64(11)

_TWO53_INV = 2.0 ** -53


# Signatures are declared eagerly: calling these from the interpreter with
# plain Python ints must not let the dispatcher pick value-dependent types
# (an int64-typed word would turn the logical right shifts arithmetic).
@njit(_u8(_u8), cache=True)
def _fin(z):
    # SplitMix64 output finalizer (bijective on uint64)
    z = (z ^ (z >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31)


@njit(types.UniTuple(_u8, 4)(_u8, _u8), cache=True)
def stream_init(seed, stream):
    """Derive the xoshiro256++ state for (seed, stream) as documented above."""
    key = _fin(_fin(seed + _GAMMA) + stream + _GAMMA)
    s0 = _fin(key + _G1)
    s1 = _fin(key + _G2)
    s2 = _fin(key + _G3)
    s3 = _fin(key + _G4)
    if s0 | s1 | s2 | s3 == np.uint64(0):
        s0 = _GAMMA  # xoshiro must not start from the all-zero state
    return s0, s1, s2, s3


@njit(types.UniTuple(_u8, 5)(_u8, _u8, _u8, _u8), cache=True)
def xo_next(s0, s1, s2, s3):
    """One xoshiro256++ step: returns (value, new state)."""
    tmp = s0 + s3
    r = ((tmp << _S23) | (tmp >> _S41)) + s0
    t = s1 << _S17
    s2 = s2 ^ s0
    s3 = s3 ^ s1
    s1 = s1 ^ s2
    s0 = s0 ^ s3
    s2 = s2 ^ t
    s3 = (s3 << _S45) | (s3 >> _S19)
    return r, s0, s1, s2, s3


@njit(types.Tuple((_f8, _u8, _u8, _u8, _u8))(_u8, _u8, _u8, _u8), cache=True)
def next_unit(s0, s1, s2, s3):
    """Uniform double in [0, 1) with 53 random bits, plus the new state."""
    r, s0, s1, s2, s3 = xo_next(s0, s1, s2, s3)
    return (r >> _S11) * _TWO53_INV, s0, s1, s2, s3


@njit(types.Tuple((_f8, _u8, _u8, _u8, _u8))(_u8, _u8, _u8, _u8), cache=True)
def next_exponential(s0, s1, s2, s3):
    """Unit-rate exponential variate, plus the new state."""
    u, s0, s1, s2, s3 = next_unit(s0, s1, s2, s3)
    return -math.log1p(-u), s0, s1, s2, s3


def _fin_py(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


class RngStream:
    """Pure-Python mirror of the kernel generator.

    Bit-compatible with the jitted primitives; used as the reference
    implementation in tests and wherever speed does not matter (for example
    materializing random per-stage thresholds).

    Parameters
    ----------
    seed : int
        Base seed, interpreted modulo 2**64.
    stream : int
        Stream index (trial number), interpreted modulo 2**64.
    """

    __slots__ = ("_s0", "_s1", "_s2", "_s3")

    def __init__(self, seed: int, stream: int = 0):
        g = 0x9E3779B97F4A7C15
        key = _fin_py((_fin_py((seed + g) & _MASK) + stream + g) & _MASK)
        self._s0 = _fin_py((key + 1 * g) & _MASK)
        self._s1 = _fin_py((key + 2 * g) & _MASK)
        self._s2 = _fin_py((key + 3 * g) & _MASK)
        self._s3 = _fin_py((key + 4 * g) & _MASK)
        if self._s0 | self._s1 | self._s2 | self._s3 == 0:
            self._s0 = g

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        tmp = (s0 + s3) & _MASK
        r = (((tmp << 23) & _MASK | (tmp >> 41)) + s0) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = (s3 << 45) & _MASK | (s3 >> 19)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return r

    def next_unit(self) -> float:
        return (self.next_u64() >> 11) * _TWO53_INV

    def next_exponential(self) -> float:
        return -math.log1p(-self.next_unit())

    @property
    def state(self) -> tuple[int, int, int, int]:
        return (self._s0, self._s1, self._s2, self._s3)
