"""Hot loops with a numba path and a pure-numpy fallback.

The numba path is used when numba imports cleanly and the environment
variable ``PREB_SIM_DISABLE_NUMBA`` is unset (or ``0``).  Both paths are
always importable as ``<name>_numba`` / ``<name>_numpy`` so that tests and
the benchmark can compare them directly.
"""
import os

import numpy as np

try:
    import numba

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

USE_NUMBA = HAS_NUMBA and os.environ.get("PREB_SIM_DISABLE_NUMBA", "0") in ("", "0")


def _njit(func):
    if HAS_NUMBA:
        return numba.njit(cache=True)(func)
    return func


# --------------------------------------------------------------------------
# Lanczos tridiagonalization of diag(d) with full reorthogonalization
# --------------------------------------------------------------------------


def lanczos_diag_numpy(d, v0, k):
    n = d.shape[0]
    V = np.zeros((k, n))
    alpha = np.zeros(k)
    beta = np.zeros(max(k - 1, 0))
    v = v0 / np.linalg.norm(v0)
    V[0] = v
    for j in range(k):
        w = d * V[j]
        alpha[j] = w @ V[j]
        if j == k - 1:
            break
        w = w - alpha[j] * V[j]
        if j > 0:
            w = w - beta[j - 1] * V[j - 1]
        # two passes of classical Gram-Schmidt ("twice is enough")
        for _ in range(2):
            w = w - V[: j + 1].T @ (V[: j + 1] @ w)
        b = np.linalg.norm(w)
        if b == 0.0:
            raise ValueError("Krylov space exhausted before requested depth")
        beta[j] = b
        V[j + 1] = w / b
    return alpha, beta


@_njit
def lanczos_diag_numba(d, v0, k):
    n = d.shape[0]
    V = np.zeros((k, n))
    alpha = np.zeros(k)
    beta = np.zeros(max(k - 1, 0))
    nrm = 0.0
    for i in range(n):
        nrm += v0[i] * v0[i]
    nrm = np.sqrt(nrm)
    for i in range(n):
        V[0, i] = v0[i] / nrm
    w = np.empty(n)
    for j in range(k):
        a = 0.0
        for i in range(n):
            w[i] = d[i] * V[j, i]
            a += w[i] * V[j, i]
        alpha[j] = a
        if j == k - 1:
            break
        for i in range(n):
            w[i] -= a * V[j, i]
        if j > 0:
            for i in range(n):
                w[i] -= beta[j - 1] * V[j - 1, i]
        for _ in range(2):
            for m in range(j + 1):
                c = 0.0
                for i in range(n):
                    c += V[m, i] * w[i]
                for i in range(n):
                    w[i] -= c * V[m, i]
        b = 0.0
        for i in range(n):
            b += w[i] * w[i]
        b = np.sqrt(b)
        if b == 0.0:
            raise ValueError("Krylov space exhausted before requested depth")
        beta[j] = b
        for i in range(n):
            V[j + 1, i] = w[i] / b
    return alpha, beta


# --------------------------------------------------------------------------
# Oscillatory sums  F(t) = sum_k w_k exp(i x_k t)
# --------------------------------------------------------------------------


def fourier_sum_numpy(x, w, times, chunk=256):
    out = np.empty(times.shape[0], dtype=np.complex128)
    for s in range(0, times.shape[0], chunk):
        tt = times[s : s + chunk]
        out[s : s + chunk] = np.exp(1j * np.outer(tt, x)) @ w
    return out


@_njit
def fourier_sum_numba(x, w, times):
    nt = times.shape[0]
    out = np.empty(nt, dtype=np.complex128)
    for j in range(nt):
        t = times[j]
        re = 0.0
        im = 0.0
        for k in range(x.shape[0]):
            ph = x[k] * t
            re += w[k].real * np.cos(ph) - w[k].imag * np.sin(ph)
            im += w[k].real * np.sin(ph) + w[k].imag * np.cos(ph)
        out[j] = re + 1j * im
    return out


# --------------------------------------------------------------------------
# Many-body matrix of  sum_lm h_lm c_l^dag c_m + sum_l u_l n_l n_{l+1}
# in the Jordan-Wigner occupation basis.  Mode 0 is the most significant bit
# (leftmost Kronecker factor); parity strings run over lower mode indices.
# --------------------------------------------------------------------------


def quadratic_many_body_numpy(h, u):
    M = h.shape[0]
    dim = 1 << M
    states = np.arange(dim, dtype=np.int64)
    occ = np.empty((M, dim), dtype=np.int64)
    for j in range(M):
        occ[j] = (states >> (M - 1 - j)) & 1
    # prefix[j] = number of occupied modes with index < j
    prefix = np.zeros((M + 1, dim), dtype=np.int64)
    prefix[1:] = np.cumsum(occ, axis=0)
    H = np.zeros((dim, dim), dtype=h.dtype)
    diag = np.zeros(dim, dtype=h.dtype)
    for l in range(M):
        diag += h[l, l] * occ[l]
    for l in range(M - 1):
        diag += u[l] * occ[l] * occ[l + 1]
    H[states, states] = diag
    for l in range(M):
        for m in range(M):
            if l == m or h[l, m] == 0:
                continue
            src = states[(occ[m] == 1) & (occ[l] == 0)]
            mid = src ^ (1 << (M - 1 - m))
            dst = mid ^ (1 << (M - 1 - l))
            n_m = prefix[m, src]
            # prefix count below l in the intermediate state
            n_l = np.zeros_like(src)
            for k in range(l):
                n_l += (mid >> (M - 1 - k)) & 1
            sign = 1 - 2 * ((n_m + n_l) & 1)
            H[dst, src] += h[l, m] * sign
    return H


@_njit
def quadratic_many_body_numba(h, u):
    M = h.shape[0]
    dim = 1 << M
    H = np.zeros((dim, dim), dtype=h.dtype)
    for s in range(dim):
        d = h[0, 0] * 0
        for l in range(M):
            if (s >> (M - 1 - l)) & 1:
                d += h[l, l]
        for l in range(M - 1):
            if ((s >> (M - 1 - l)) & 1) and ((s >> (M - 2 - l)) & 1):
                d += u[l]
        H[s, s] += d
        for m in range(M):
            if not (s >> (M - 1 - m)) & 1:
                continue
            n_m = 0
            for k in range(m):
                n_m += (s >> (M - 1 - k)) & 1
            mid = s ^ (1 << (M - 1 - m))
            for l in range(M):
                if l == m or h[l, m] == 0:
                    continue
                if (mid >> (M - 1 - l)) & 1:
                    continue
                n_l = 0
                for k in range(l):
                    n_l += (mid >> (M - 1 - k)) & 1
                dst = mid ^ (1 << (M - 1 - l))
                if (n_m + n_l) & 1:
                    H[dst, s] -= h[l, m]
                else:
                    H[dst, s] += h[l, m]
    return H


if USE_NUMBA:
    lanczos_diag = lanczos_diag_numba
    fourier_sum = fourier_sum_numba
    quadratic_many_body = quadratic_many_body_numba
else:
    lanczos_diag = lanczos_diag_numpy
    fourier_sum = fourier_sum_numpy
    quadratic_many_body = quadratic_many_body_numpy
