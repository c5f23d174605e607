"""Counter-based random streams (Philox4x64-10) usable inside numba kernels.

A stream is keyed by ``(seed, stream_id)``; the raw 64-bit output equals
``numpy.random.Philox(key=[seed, stream_id], counter=0).random_raw()``, so any
stream can be replayed outside numba. Every Monte Carlo path owns its own
streams, which makes results independent of evaluation order.

Stream state is a uint64 array of length ``STATE_SIZE``:
key[0:2], counter[2:6], output buffer[6:10] and buffer position[10].
"""

from __future__ import annotations

import math

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.extending import intrinsic

STATE_SIZE = 11

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_S11 = np.uint64(11)
_ONE = np.uint64(1)
_ZERO = np.uint64(0)
_TWO_M53 = 2.0**-53
_TWO_PI = 2.0 * math.pi

# stream roles, so one path's streams never overlap
ROLE_SUBORDINATOR = 0
ROLE_DIFFUSION = 1
ROLE_SPARE = 2
N_ROLES = 4


@intrinsic
def _umulhi(typingctx, a, b):
    """High 64 bits of the 128-bit product a*b."""
    sig = types.uint64(types.uint64, types.uint64)

    def codegen(context, builder, signature, args):
        wide = ir.IntType(128)
        prod = builder.mul(builder.zext(args[0], wide), builder.zext(args[1], wide))
        return builder.trunc(builder.lshr(prod, ir.Constant(wide, 64)), ir.IntType(64))

    return sig, codegen


@njit(cache=True, inline="always")
def _mulhilo(a, b):
    return a * b, _umulhi(a, b)


@njit(cache=True)
def _refill(state):
    # bump the 256-bit counter, then encrypt it
    c0 = state[2] + _ONE
    state[2] = c0
    if c0 == _ZERO:
        state[3] += _ONE
        if state[3] == _ZERO:
            state[4] += _ONE
            if state[4] == _ZERO:
                state[5] += _ONE
    x0, x1, x2, x3 = state[2], state[3], state[4], state[5]
    k0, k1 = state[0], state[1]
    for r in range(10):
        lo0, hi0 = _mulhilo(_M0, x0)
        lo1, hi1 = _mulhilo(_M1, x2)
        x0, x1, x2, x3 = hi1 ^ x1 ^ k0, lo1, hi0 ^ x3 ^ k1, lo0
        if r < 9:
            k0 += _W0
            k1 += _W1
    state[6] = x0
    state[7] = x1
    state[8] = x2
    state[9] = x3
    state[10] = _ZERO


@njit(cache=True)
def init_stream(state, seed, stream_id):
    """Reset ``state`` in place to the start of stream (seed, stream_id)."""
    state[0] = np.uint64(seed)
    state[1] = np.uint64(stream_id)
    for i in range(2, 6):
        state[i] = _ZERO
    state[10] = np.uint64(4)


@njit(cache=True)
def next_u64(state):
    if state[10] >= np.uint64(4):
        _refill(state)
    i = state[10]
    out = state[6 + np.int64(i)]
    state[10] = i + _ONE
    return out


@njit(cache=True)
def next_double(state):
    """Uniform on the open interval (0, 1), 53 random bits."""
    return (np.float64(next_u64(state) >> _S11) + 0.5) * _TWO_M53


@njit(cache=True)
def next_exponential(state):
    return -math.log(next_double(state))


@njit(cache=True)
def normal_pair(state):
    """Two independent standard normals (Box-Muller)."""
    r = math.sqrt(-2.0 * math.log(next_double(state)))
    th = _TWO_PI * next_double(state)
    return r * math.cos(th), r * math.sin(th)


def stream_id(path: int, role: int) -> int:
    return path * N_ROLES + role


def new_stream(seed: int, path: int = 0, role: int = ROLE_SPARE) -> np.ndarray:
    """Fresh stream state for use from Python or numba code."""
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed must fit in an unsigned 64-bit integer, got {seed!r}")
    state = np.zeros(STATE_SIZE, dtype=np.uint64)
    init_stream(state, np.uint64(seed), np.uint64(stream_id(path, role)))
    return state


@njit(cache=True)
def fill_doubles(state, out):
    for i in range(out.size):
        out[i] = next_double(state)


@njit(cache=True)
def fill_u64(state, out):
    for i in range(out.size):
        out[i] = next_u64(state)


def as_stream(rng) -> np.ndarray:
    """Accept a stream state (used in place) or an integer seed."""
    if isinstance(rng, np.ndarray):
        if rng.dtype != np.uint64 or rng.shape != (STATE_SIZE,):
            raise TypeError("stream state must be a uint64 array made by new_stream")
        return rng
    if isinstance(rng, (int, np.integer)):
        return new_stream(int(rng))
    raise TypeError(f"expected a stream state or an integer seed, got {type(rng).__name__}")
