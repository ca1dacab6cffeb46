"""Independent reference implementations used only by the tests.

Nothing here imports the production numerics it is meant to check.
"""
import math

import numpy as np
import scipy.sparse as sp
from scipy.integrate import quad, trapezoid
from scipy.signal import fftconvolve


# --------------------------------------------------------------------------
# chain coefficients by the literal spectral-density recursion
# --------------------------------------------------------------------------


def _hat_kernel(k):
    """(1/pi) P int (1 - |s|) / (k - s) ds over [-1, 1]: Hilbert transform of a unit hat."""
    k = np.asarray(k, dtype=float)

    def xlogx(x):
        a = np.abs(x)
        return np.where(a > 0, x * np.log(np.where(a > 0, a, 1.0)), 0.0)

    return (xlogx(k + 1) - 2 * xlogx(k) + xlogx(k - 1)) / math.pi


def hilbert_on_grid(f):
    """Hilbert transform of the piecewise-linear interpolant of samples ``f``
    on a uniform grid, evaluated at the grid points (exact for that interpolant)."""
    n = f.size
    kern = _hat_kernel(np.arange(-(n - 1), n))
    return fftconvolve(f, kern)[n - 1 : 2 * n - 1]


def recursion_chain(J, lo, hi, L_B, n_grid=2**15):
    """Chain (gamma, eps, hop) from

        J_{p+1} = 4 g_p^2 J_p / ((J_p^H)^2 + J_p^2),  g_p^2 = int J_p / 2pi,
        eps_{p+1} = int w J_p / (2 pi g_p^2),

    with J_0 = J and g_0 = gamma; ``eps[p]`` is the on-site energy of chain
    site p+1 and ``hop[p-1] = g_p`` couples sites p and p+1.
    """
    w = np.linspace(lo, hi, n_grid)
    Jp = np.asarray(J(w), dtype=float)
    eps, g = [], []
    for p in range(L_B):
        g2 = trapezoid(Jp, w) / (2 * math.pi)
        g.append(math.sqrt(g2))
        eps.append(trapezoid(w * Jp, w) / (2 * math.pi * g2))
        if p == L_B - 1:
            break
        H = hilbert_on_grid(Jp)
        den = H**2 + Jp**2
        Jp = np.where(den > 0, 4 * g2 * Jp / np.where(den > 0, den, 1.0), 0.0)
    return g[0], np.array(eps), np.array(g[1:])


# --------------------------------------------------------------------------
# principal-value and Fourier integrals by adaptive quadrature
# --------------------------------------------------------------------------


def pv_hilbert(J, omega, lo, hi):
    """(1/pi) P int J(w') / (omega - w') dw' via QUADPACK's Cauchy weight."""
    val, _ = quad(lambda x: float(J(x)), lo, hi, weight="cauchy", wvar=omega, limit=400)
    return -val / math.pi


def fine_trapezoid(f, a, b, n=400001):
    x = np.linspace(a, b, n)
    return trapezoid(f(x), x)


def mp_bath_correlation(J, n, t, lo, hi, dps=30):
    """``int dw/2pi J(w) n(w) e^{iwt}`` in multiprecision (mpmath callables)."""
    import mpmath as mp

    mp.mp.dps = dps
    pts = np.linspace(lo, hi, 33).tolist()
    re = mp.quad(lambda x: J(x) * n(x) * mp.cos(x * t), pts)
    im = mp.quad(lambda x: J(x) * n(x) * mp.sin(x * t), pts)
    return complex(re, im) / (2 * math.pi)


# --------------------------------------------------------------------------
# many-body Hamiltonian from sparse Jordan-Wigner products
# --------------------------------------------------------------------------

_a = sp.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
_z = sp.csr_matrix(np.diag([1.0, -1.0]))
_i = sp.identity(2, format="csr")


def jw_annihilators(M):
    """``c_j = Z x ... x Z x a x 1 x ... x 1`` with mode 0 the leftmost factor."""
    out = []
    for j in range(M):
        op = sp.identity(1, format="csr")
        for k in range(M):
            op = sp.kron(op, _z if k < j else (_a if k == j else _i), format="csr")
        out.append(op)
    return out


def sparse_many_body(h, u=None):
    """``sum h_pq c+_p c_q + sum_l u_l n_l n_{l+1}`` as a dense array."""
    h = np.asarray(h)
    M = h.shape[0]
    c = jw_annihilators(M)
    H = sp.csr_matrix((2**M, 2**M), dtype=complex)
    for p in range(M):
        for q in range(M):
            if h[p, q] != 0:
                H = H + h[p, q] * (c[p].T @ c[q])
    if u is not None:
        for l, val in enumerate(u):
            if val != 0:
                H = H + val * (c[l].T @ c[l]) @ (c[l + 1].T @ c[l + 1])
    return H.toarray()


# --------------------------------------------------------------------------
# finite-chain resolvent
# --------------------------------------------------------------------------


def chain_resolvent(H_S, gamma1, g1, gamma2, g2, L_B, omega, eta):
    """System block of ``[(omega + i eta) - H_full]^{-1}`` with two uniform chains."""
    L = H_S.shape[0]
    N = L + 2 * L_B
    H = sp.lil_matrix((N, N))
    # bath 1 occupies 0..L_B-1 with its first site at L_B-1, next to the system
    for k in range(L_B - 1):
        H[k, k + 1] = H[k + 1, k] = g1
        H[L + L_B + k, L + L_B + k + 1] = H[L + L_B + k + 1, L + L_B + k] = g2
    H[L_B - 1, L_B] = H[L_B, L_B - 1] = gamma1
    H[L_B + L - 1, L_B + L] = H[L_B + L, L_B + L - 1] = gamma2
    H[L_B : L_B + L, L_B : L_B + L] = H_S
    A = (omega + 1j * eta) * sp.identity(N, format="csc") - H.tocsc()
    rhs = np.zeros((N, L), dtype=complex)
    rhs[L_B : L_B + L] = np.eye(L)
    X = sp.linalg.spsolve(A, rhs)
    return np.asarray(X)[L_B : L_B + L]
