"""Counter-based random streams.

Every path owns an independent substream addressed by
``(seed, domain, cloud, path)``; the n-th uniform of a substream is lane
``n % 4`` of the Philox4x64-10 block at counter ``(n // 4, path, cloud,
domain)`` under key ``(seed, 0)``. Any draw of any path can therefore be
regenerated without replaying the others, which is what lets the solver
drop stored clouds and recompute them from seeds.

Normal variates come from the inverse normal CDF applied to the same
uniforms, so there is a single stream type throughout.
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

from ._backend import USE_NUMBA, njit, prange

TRAIN = 0
EVAL = 1

_M0 = np.uint64(0xD2E7470EE14C6C93)
_M1 = np.uint64(0xCA5A826395121157)
_W0 = np.uint64(0x9E3779B97F4A7C15)
_W1 = np.uint64(0xBB67AE8584CAA73B)
_MASK32 = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_S11 = np.uint64(11)
_TWO_M53 = 2.0 ** -53
_HALF_ULP = 2.0 ** -54

MASK64 = (1 << 64) - 1


# ---------------------------------------------------------------- numba


@njit(inline="always")
def _mulhilo(a, b):
    a0 = a & _MASK32
    a1 = a >> _S32
    b0 = b & _MASK32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


@njit
def philox4x64_block(c0, c1, c2, c3, k0, k1):
    """Philox4x64-10 on one counter block; returns four uint64 words."""
    for r in range(10):
        if r > 0:
            k0 = k0 + _W0
            k1 = k1 + _W1
        hi0, lo0 = _mulhilo(_M0, c0)
        hi1, lo1 = _mulhilo(_M1, c2)
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


@njit
def _to_unit(x):
    # 53-bit mantissa, centred in its bin: never exactly 0 or 1
    return float(x >> _S11) * _TWO_M53 + _HALF_ULP


@njit(parallel=True)
def _stream_uniforms_numba(seed, domain, cloud, m0, count, n0, n):
    out = np.empty((count, n), dtype=np.float64)
    k0 = np.uint64(seed)
    k1 = np.uint64(0)
    c2 = np.uint64(cloud)
    c3 = np.uint64(domain)
    for p in prange(count):
        c1 = np.uint64(m0 + p)
        blk = -1
        w0 = w1 = w2 = w3 = np.uint64(0)
        for t in range(n):
            idx = n0 + t
            b = idx // 4
            if b != blk:
                blk = b
                w0, w1, w2, w3 = philox4x64_block(np.uint64(b), c1, c2, c3, k0, k1)
            lane = idx % 4
            if lane == 0:
                w = w0
            elif lane == 1:
                w = w1
            elif lane == 2:
                w = w2
            else:
                w = w3
            out[p, t] = _to_unit(w)
    return out


# Acklam's rational approximation, refined by one Halley step on erfc.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)

_a0, _a1, _a2, _a3, _a4, _a5 = _A
_b0, _b1, _b2, _b3, _b4 = _B
_c0, _c1, _c2, _c3, _c4, _c5 = _C
_d0, _d1, _d2, _d3 = _D


@njit
def _ndtri_scalar(p):
    # work in the lower tail, where erfc keeps full relative precision
    t = p if p <= 0.5 else 1.0 - p
    if t < _P_LOW:
        q = math.sqrt(-2.0 * math.log(t))
        x = (((((_c0 * q + _c1) * q + _c2) * q + _c3) * q + _c4) * q + _c5) / \
            ((((_d0 * q + _d1) * q + _d2) * q + _d3) * q + 1.0)
    else:
        q = t - 0.5
        r = q * q
        x = (((((_a0 * r + _a1) * r + _a2) * r + _a3) * r + _a4) * r + _a5) * q / \
            (((((_b0 * r + _b1) * r + _b2) * r + _b3) * r + _b4) * r + 1.0)
    e = 0.5 * math.erfc(-x / _SQRT2) - t
    u = e * _SQRT2PI * math.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return x if p <= 0.5 else -x


@njit(parallel=True)
def _ndtri_numba(p):
    flat = p.ravel()
    out = np.empty(flat.size, dtype=np.float64)
    for t in prange(flat.size):
        out[t] = _ndtri_scalar(flat[t])
    return out.reshape(p.shape)


# ---------------------------------------------------------------- numpy


def _mulhilo_np(a, b):
    a0 = a & _MASK32
    a1 = a >> _S32
    b0 = b & _MASK32
    b1 = b >> _S32
    p00 = a0 * b0
    p01 = a0 * b1
    p10 = a1 * b0
    p11 = a1 * b1
    mid = (p00 >> _S32) + (p01 & _MASK32) + (p10 & _MASK32)
    hi = p11 + (p01 >> _S32) + (p10 >> _S32) + (mid >> _S32)
    return hi, a * b


def philox4x64_np(c0, c1, c2, c3, k0, k1):
    """Vectorised Philox4x64-10 over broadcastable uint64 counter arrays."""
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint64) for c in (c0, c1, c2, c3))
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    with np.errstate(over="ignore"):
        for r in range(10):
            if r > 0:
                k0 = k0 + _W0
                k1 = k1 + _W1
            hi0, lo0 = _mulhilo_np(_M0, c0)
            hi1, lo1 = _mulhilo_np(_M1, c2)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _stream_uniforms_numpy(seed, domain, cloud, m0, count, n0, n):
    idx = np.arange(n0, n0 + n, dtype=np.uint64)
    blocks = idx // np.uint64(4)
    lanes = (idx % np.uint64(4)).astype(np.intp)
    paths = np.arange(m0, m0 + count, dtype=np.uint64)[:, None]
    words = philox4x64_np(blocks[None, :], paths, np.uint64(cloud), np.uint64(domain),
                          np.uint64(seed), 0)
    w = np.choose(np.broadcast_to(lanes, (count, n)), words)
    return (w >> _S11).astype(np.float64) * _TWO_M53 + _HALF_ULP


def _ndtri_numpy(p):
    p = np.asarray(p, dtype=np.float64)
    upper = p > 0.5
    t = np.where(upper, 1.0 - p, p)
    x = np.empty_like(t)
    tail = t < _P_LOW
    if tail.any():
        q = np.sqrt(-2.0 * np.log(t[tail]))
        x[tail] = (((((_c0 * q + _c1) * q + _c2) * q + _c3) * q + _c4) * q + _c5) / \
            ((((_d0 * q + _d1) * q + _d2) * q + _d3) * q + 1.0)
    body = ~tail
    if body.any():
        q = t[body] - 0.5
        r = q * q
        x[body] = (((((_a0 * r + _a1) * r + _a2) * r + _a3) * r + _a4) * r + _a5) * q / \
            (((((_b0 * r + _b1) * r + _b2) * r + _b3) * r + _b4) * r + 1.0)
    e = 0.5 * erfc(-x / _SQRT2) - t
    u = e * _SQRT2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return np.where(upper, -x, x)


if USE_NUMBA:
    _stream_uniforms = _stream_uniforms_numba
    _ndtri = _ndtri_numba
else:
    _stream_uniforms = _stream_uniforms_numpy
    _ndtri = _ndtri_numpy


def stream_uniforms(seed, domain, cloud, m0, count, n0, n):
    """Uniforms in (0,1), shape ``(count, n)``.

    Row ``p`` holds draws ``n0 .. n0+n-1`` of substream
    ``(seed, domain, cloud, m0+p)``.
    """
    if count == 0 or n == 0:
        return np.empty((count, n), dtype=np.float64)
    return _stream_uniforms(np.uint64(int(seed) & MASK64), int(domain), int(cloud), int(m0),
                            int(count), int(n0), int(n))


def ndtri(p):
    """Inverse of the standard normal CDF, elementwise on ``p`` in (0,1)."""
    p = np.ascontiguousarray(p, dtype=np.float64)
    return _ndtri(p)


@dataclass(frozen=True)
class PathStream:
    """Handle on one path's substream. Cheap; holds no state."""

    seed: int
    domain: int = TRAIN
    cloud: int = 0
    path: int = 0

    def uniforms(self, n0, n):
        return stream_uniforms(self.seed, self.domain, self.cloud, self.path, 1, n0, n)[0]

    def normals(self, n0, n):
        return ndtri(self.uniforms(n0, n))
