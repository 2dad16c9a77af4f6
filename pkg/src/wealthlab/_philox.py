"""Counter-based normal variates for order-independent Monte-Carlo streams.

Philox4x32-10 (Salmon et al., "Parallel random numbers: as easy as 1, 2,
3") maps a 128-bit counter and a 64-bit key to 128 random bits. The
stream of agent ``a`` in realisation ``r`` under master seed ``s`` is
the output sequence for key ``s`` and counters ``(j_lo, a, r, j_hi)``,
``j = 0, 1, 2, ...``: 2**64 blocks per stream, and distinct
``(s, r, a)`` never share a counter. Normals are drawn from the stream
in order with Marsaglia's polar method, so a stream needs only its block
position as state and results do not depend on execution order.
"""

import numpy as np
from numba import njit, uint64

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_INV_2_32 = 1.0 / 4294967296.0


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten-round Philox4x32 block function on 32-bit words held in uint64."""
    for rnd in range(10):
        if rnd > 0:
            k0 = (k0 + _W0) & _MASK32
            k1 = (k1 + _W1) & _MASK32
        p0 = _M0 * c0
        p1 = _M1 * c2
        c0, c1, c2, c3 = ((p1 >> _S32) ^ c1 ^ k0, p1 & _MASK32,
                          (p0 >> _S32) ^ c3 ^ k1, p0 & _MASK32)
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _symmetric(x):
    # open interval (-1, 1)
    return (np.float64(x) + 0.5) * _INV_2_32 * 2.0 - 1.0


@njit(cache=True)
def fill_normals(seed, realisation, agent, pos, out):
    """Draw ``len(out)`` (even) normals from one stream starting at block ``pos``.

    Returns the next unused block position.
    """
    k0 = uint64(seed) & _MASK32
    k1 = uint64(seed) >> _S32
    c1 = uint64(agent) & _MASK32
    c2 = uint64(realisation) & _MASK32
    n = out.shape[0]
    filled = 0
    while filled < n:
        x0, x1, x2, x3 = philox4x32(uint64(pos) & _MASK32, c1, c2, uint64(pos) >> _S32, k0, k1)
        pos += 1
        for h in range(2):
            if h == 0:
                u = _symmetric(x0)
                w = _symmetric(x1)
            else:
                u = _symmetric(x2)
                w = _symmetric(x3)
            q = u * u + w * w
            if q >= 1.0:
                continue
            f = np.sqrt(-2.0 * np.log(q) / q)
            out[filled] = u * f
            out[filled + 1] = w * f
            filled += 2
            if filled >= n:
                break
    return pos


@njit(cache=True)
def stream_normals(seed, realisation, agent, count):
    """First ``count`` normals of one (seed, realisation, agent) stream."""
    out = np.empty(count + (count & 1))
    fill_normals(seed, realisation, agent, 0, out)
    return out[:count]
