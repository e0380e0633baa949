"""Compiled inner loops. All randomness is passed in as pre-drawn arrays.

ARCH rows consume two kinds of randomness:

* a pool of uniforms V in (0, 1] used to place the zeros of eps: given the last
  zero at k, the next one is at ceil((k+1)/V) - 1, because the events
  {eps_i = 0} are independent with P = 1/(i+1) and so
  P(no zero in k+1..m) = (k+1)/(m+1);
* one sign bit per step (little-endian within each byte).

A row needs (number of zeros + 1) uniforms. When the pool runs dry the kernels
stop early and report how many rows they finished; the caller tops up the pool
and resumes, so consumption is a deterministic function of the stream.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, fastmath={"contract"})
def _arch_row(V, vi, n, q0, u, a2, inv_alpha, base, zmask, e2):
    """Place the zeros of one row and fill e2[k-1] = eta^2_{k-1}.

    Returns the new pool index, or -1 if the pool ran out.
    """
    zmask[:] = 0
    e2[:] = 0.0  # holds the zero corrections until the final pass
    k = 0
    while True:
        if vi >= V.shape[0]:
            return -1
        x = (k + 1) / V[vi]
        vi += 1
        if x > n + 1.0:
            break
        j = int(math.ceil(x)) - 1
        if j <= k:
            j = k + 1
        if j > n:
            break
        zmask[j] = 1
        w = a2[j]
        # eta^2_kk uses eps_1..eps_kk, so zero j corrects every kk >= j
        for kk in range(j, n):
            e2[kk] += u[kk + 1 - j] * w
        k = j
    e2[0] = 1.0
    for kk in range(1, n):
        e2[kk] = max((base[kk] - e2[kk]) * inv_alpha[kk], 0.0)
    return vi


@njit(cache=True, nogil=True)
def arch_paths(V, bits, start, q0, p, a, a2, u, inv_alpha, base, d, eta2):
    """Fill rows start.. of d and eta2 (eta^2_{k-1} in column k-1); return rows done."""
    R, n = d.shape
    zmask = np.zeros(n + 1, dtype=np.int8)
    e2 = np.zeros(n + 1)
    vi = 0
    for r in range(start, R):
        nv = _arch_row(V, vi, n, q0, u, a2, inv_alpha, base, zmask, e2)
        if nv < 0:
            return r, vi
        vi = nv
        for k in range(1, n + 1):
            eta2[r, k - 1] = e2[k - 1]
            if zmask[k]:
                d[r, k - 1] = 0.0
            else:
                b = (bits[r, (k - 1) >> 3] >> ((k - 1) & 7)) & 1
                d[r, k - 1] = (2.0 * b - 1.0) * a[k] * math.sqrt(e2[k - 1])
    return R, vi


@njit(cache=True, nogil=True, fastmath={"reassoc", "contract", "nsz"})
def arch_sums(V, bits, start, theta_a, q0, u, a2, inv_alpha, base, out):
    """out[r] = sum_k theta_k d_k; theta_a[k-1] = theta_k * a_k."""
    R = out.shape[0]
    n = theta_a.shape[0]
    zmask = np.zeros(n + 1, dtype=np.int8)
    e2 = np.zeros(n + 1)
    coef = np.empty(n)
    vi = 0
    for r in range(start, R):
        nv = _arch_row(V, vi, n, q0, u, a2, inv_alpha, base, zmask, e2)
        if nv < 0:
            return r, vi
        vi = nv
        for k in range(1, n + 1):
            b = (bits[r, (k - 1) >> 3] >> ((k - 1) & 7)) & 1
            coef[k - 1] = (2.0 * b - 1.0) * (1 - zmask[k]) * theta_a[k - 1]
        acc = 0.0
        for k in range(n):
            acc += coef[k] * math.sqrt(e2[k])
        out[r] = acc
    return R, vi


@njit(cache=True, nogil=True)
def arch_signfree_cf(V, rows, theta_a, t, q0, u, a2, inv_alpha, base, acc, acc2):
    """Accumulate prod_k cos(t w_k) over ``rows`` zero patterns.

    Given which eps_k vanish, S is a Rademacher sum with weights
    w_k = theta_k a_k eta_{k-1} on the nonzero steps, so its conditional
    characteristic function is a cosine product. acc[j], acc2[j] collect the sum
    and sum of squares at frequency t[j]. Returns (rows done, pool used).
    """
    n = theta_a.shape[0]
    G = t.shape[0]
    zmask = np.zeros(n + 1, dtype=np.int8)
    e2 = np.zeros(n + 1)
    w = np.empty(n)
    vi = 0
    for r in range(rows):
        nv = _arch_row(V, vi, n, q0, u, a2, inv_alpha, base, zmask, e2)
        if nv < 0:
            return r, vi
        vi = nv
        nw = 0
        for k in range(1, n + 1):
            if zmask[k] == 0:
                w[nw] = theta_a[k - 1] * math.sqrt(e2[k - 1])
                nw += 1
        for j in range(G):
            prod = 1.0
            tj = t[j]
            for i in range(nw):
                prod *= math.cos(tj * w[i])
            acc[j] += prod
            acc2[j] += prod * prod
    return rows, vi


@njit(cache=True, nogil=True)
def lut_sums(bits, lut, out):
    """out[r] = sum_c lut[c, bits[r, c]]: Rademacher sums from packed sign bytes."""
    R, C = bits.shape
    for r in range(R):
        acc = 0.0
        for c in range(C):
            acc += lut[c, bits[r, c]]
        out[r] = acc


def rademacher_lut(theta: np.ndarray) -> np.ndarray:
    """Byte lookup table: lut[c, b] = sum over bits i of b of +/- theta[8c + i]."""
    n = theta.size
    C = (n + 7) // 8
    padded = np.zeros(8 * C)
    padded[:n] = theta
    w = padded.reshape(C, 8)
    b = np.arange(256, dtype=np.uint8)
    signs = np.unpackbits(b[:, None], axis=1, bitorder="little").astype(np.float64) * 2 - 1
    return w @ signs.T
