"""Bit-parallel longest-common-subsequence kernels.

The recurrence is the classic one for LCS over machine words: keep a bit
vector ``V`` (one bit per position of ``a``, initially all ones) and for
each symbol ``c`` of ``b`` update ``U = V & M[c]``, ``V = (V + U) | (V - U)``.
Since ``U`` is a submask of ``V`` the subtraction is ``V & ~U``.  The LCS
length is the number of zero bits left in ``V``.
"""
from __future__ import annotations

import numba as nb
import numpy as np


@nb.njit(cache=True)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)


@nb.njit(cache=True)
def _lcs_core(a, b, sigma):
    m = a.shape[0]
    if m == 0 or b.shape[0] == 0:
        return 0
    nw = (m + 63) // 64
    masks = np.zeros((sigma, nw), dtype=np.uint64)
    for i in range(m):
        masks[a[i], i >> 6] |= np.uint64(1) << np.uint64(i & 63)
    v = np.empty(nw, dtype=np.uint64)
    for w in range(nw):
        v[w] = np.uint64(0xFFFFFFFFFFFFFFFF)
    rem = m & 63
    last = np.uint64(0xFFFFFFFFFFFFFFFF)
    if rem:
        last = (np.uint64(1) << np.uint64(rem)) - np.uint64(1)
    v[nw - 1] &= last
    for j in range(b.shape[0]):
        c = b[j]
        if c >= sigma:
            continue
        carry = np.uint64(0)
        for w in range(nw):
            x = v[w]
            u = x & masks[c, w]
            s = x + u
            c1 = np.uint64(1) if s < x else np.uint64(0)
            s2 = s + carry
            c2 = np.uint64(1) if s2 < s else np.uint64(0)
            carry = c1 | c2
            v[w] = s2 | (x & ~u)
        v[nw - 1] &= last
    ones = 0
    for w in range(nw):
        ones += _popcount64(v[w])
    return m - ones


@nb.njit(cache=True)
def _lcs_rows(A, B, sigma):
    out = np.empty(A.shape[0], dtype=np.int64)
    for r in range(A.shape[0]):
        out[r] = _lcs_core(A[r], B[r], sigma)
    return out


@nb.njit(cache=True)
def _lcs_pairs(L, R, sigma):
    out = np.empty((L.shape[0], R.shape[0]), dtype=np.int64)
    for i in range(L.shape[0]):
        for j in range(R.shape[0]):
            out[i, j] = _lcs_core(L[i], R[j], sigma)
    return out


def _sigma(*arrays) -> int:
    top = 0
    for a in arrays:
        if a.size:
            top = max(top, int(a.max()))
    return top + 1


def lcs_length(a, b) -> int:
    """Length of a longest common subsequence of ``a`` and ``b``."""
    a = np.ascontiguousarray(a, dtype=np.int64)
    b = np.ascontiguousarray(b, dtype=np.int64)
    return int(_lcs_core(a, b, _sigma(a, b)))


def lcs_rows(A, B) -> np.ndarray:
    """Row-wise LCS lengths for two equally shaped 2-d arrays."""
    A = np.ascontiguousarray(A, dtype=np.int64)
    B = np.ascontiguousarray(B, dtype=np.int64)
    if A.shape[0] != B.shape[0]:
        raise ValueError("row counts differ")
    return _lcs_rows(A, B, _sigma(A, B))


def lcs_matrix(L, R) -> np.ndarray:
    """All-pairs LCS lengths between the rows of ``L`` and of ``R``."""
    L = np.ascontiguousarray(L, dtype=np.int64)
    R = np.ascontiguousarray(R, dtype=np.int64)
    return _lcs_pairs(L, R, _sigma(L, R))
