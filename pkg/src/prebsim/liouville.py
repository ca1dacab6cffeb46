"""Dense many-body evolution of tiny set-ups; ground truth for TEBD.

Mode order is the TEBD line order ``[bath-1 eigenmodes, system, bath-2
eigenmodes]`` with the Jordan-Wigner convention of :mod:`prebsim.fermions`.
"""
from __future__ import annotations

from functools import reduce

import numpy as np

from prebsim import _kernels
from prebsim.fermions import local_density_matrix
from prebsim.freefermion import Layout, SystemSpec, quadratic_part
from prebsim.spectral import occupation

MAX_MODES = 12


class OracleSizeError(ValueError):
    pass


def _check(M):
    if M > MAX_MODES:
        raise OracleSizeError(f"{M} modes exceed the dense-oracle cap of {MAX_MODES}")


def many_body_from_quadratic(h: np.ndarray, u=None) -> np.ndarray:
    """``sum h_lm c+_l c_m + sum_l u_l n_l n_{l+1}`` as a dense matrix."""
    M = h.shape[0]
    _check(M)
    u = np.zeros(max(M - 1, 0)) if u is None else np.asarray(u, dtype=float)
    h = np.asarray(h)
    if np.iscomplexobj(h):
        return _kernels.quadratic_many_body(h.astype(np.complex128), u.astype(np.complex128))
    return _kernels.quadratic_many_body(h.astype(np.float64), u.astype(np.float64))


def build_many_body_hamiltonian(sys: SystemSpec, baths=(None, None)) -> np.ndarray:
    lay = Layout.of(sys, baths)
    _check(lay.size)
    h = quadratic_part(sys, baths)
    u = np.zeros(max(lay.size - 1, 0))
    u[lay.system.start : lay.system.stop - 1] = sys.V
    return many_body_from_quadratic(h, u)


def product_state(occupations) -> np.ndarray:
    """Dense product of diagonal single-mode states."""
    occ = list(occupations)
    _check(len(occ))
    return reduce(np.kron, [local_density_matrix(n) for n in occ]).astype(complex)


def initial_state(sys_pattern, baths=(None, None)) -> np.ndarray:
    occ = []
    if baths[0] is not None:
        occ += list(occupation(baths[0].thermal, baths[0].energies))
    occ += list(sys_pattern)
    if baths[1] is not None:
        occ += list(occupation(baths[1].thermal, baths[1].energies))
    return product_state(occ)


def attach_baths(rho_sys: np.ndarray, baths) -> np.ndarray:
    """``rho_B1 (x) rho_sys (x) rho_B2`` in line order."""
    parts = []
    if baths[0] is not None:
        parts.append(product_state(occupation(baths[0].thermal, baths[0].energies)))
    parts.append(np.asarray(rho_sys, dtype=complex))
    if baths[1] is not None:
        parts.append(product_state(occupation(baths[1].thermal, baths[1].energies)))
    return reduce(np.kron, parts)


class DenseEvolution:
    """Cached eigendecomposition of a many-body Hamiltonian."""

    def __init__(self, H: np.ndarray):
        self.E, self.U = np.linalg.eigh(H)

    def evolve(self, rho: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return rho.copy()
        ph = np.exp(-1j * self.E * t)
        r = self.U.conj().T @ rho @ self.U
        r = ph[:, None] * r * ph.conj()[None, :]
        out = self.U @ r @ self.U.conj().T
        return 0.5 * (out + out.conj().T)


def dense_evolve(rho: np.ndarray, H: np.ndarray, t: float) -> np.ndarray:
    if rho.shape != H.shape:
        raise ValueError("state and Hamiltonian dimensions differ")
    return DenseEvolution(H).evolve(rho, t)


def partial_trace(rho: np.ndarray, keep, n_modes: int | None = None) -> np.ndarray:
    """Reduced state on a contiguous run of modes ``keep``."""
    keep = sorted(keep)
    M = int(round(np.log2(rho.shape[0]))) if n_modes is None else n_modes
    if not keep:
        raise ValueError("keep must be non-empty")
    if keep != list(range(keep[0], keep[-1] + 1)):
        raise NotImplementedError("partial trace only supports contiguous mode ranges")
    left, k = keep[0], len(keep)
    right = M - left - k
    r = rho.reshape(2**left, 2**k, 2**right, 2**left, 2**k, 2**right)
    return np.einsum("aibajb->ij", r)


def correlation_matrix(rho: np.ndarray) -> np.ndarray:
    """``C_pq = Tr(rho c+_p c_q)`` over all modes."""
    M = int(round(np.log2(rho.shape[0])))
    C = np.zeros((M, M), dtype=complex)
    for p in range(M):
        for q in range(M):
            h = np.zeros((M, M))
            h[p, q] = 1.0
            op = many_body_from_quadratic(h)
            C[p, q] = np.trace(rho @ op)
    return C


def trace_distance(a: np.ndarray, b: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.linalg.eigvalsh(a - b)).sum())
