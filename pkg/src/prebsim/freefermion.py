"""Exact Gaussian dynamics of the non-interacting chain plus two baths.

Mode layout of every correlation matrix: ``[bath-1 eigenmodes (ascending E),
system sites 1..L_S, bath-2 eigenmodes (ascending E)]``.
"""
from __future__ import annotations

import hashlib
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from prebsim.chainmap import ChainBath
from prebsim.spectral import occupation


class UnsupportedBackendError(ValueError):
    pass


@dataclass(frozen=True)
class SystemSpec:
    L_S: int
    V: float = 0.0
    h: float = 0.0

    def __post_init__(self):
        if self.L_S < 2:
            raise ValueError("the system needs at least two sites")

    def hamiltonian(self) -> np.ndarray:
        """Single-particle system matrix: unit hoppings, ``h`` on odd sites (1-indexed)."""
        H = np.diag(np.ones(self.L_S - 1), 1) + np.diag(np.ones(self.L_S - 1), -1)
        H[np.arange(0, self.L_S, 2), np.arange(0, self.L_S, 2)] = self.h
        return H


def half_filled(L_S: int, phase: int = 0) -> np.ndarray:
    """Occupation pattern 1,0,1,0,... (``phase=1`` gives 0,1,0,1,...)."""
    return ((np.arange(L_S) + phase + 1) % 2).astype(float)


@dataclass(frozen=True)
class Layout:
    n_bath1: int
    n_sys: int
    n_bath2: int

    @property
    def size(self) -> int:
        return self.n_bath1 + self.n_sys + self.n_bath2

    @property
    def bath1(self) -> slice:
        return slice(0, self.n_bath1)

    @property
    def system(self) -> slice:
        return slice(self.n_bath1, self.n_bath1 + self.n_sys)

    @property
    def bath2(self) -> slice:
        return slice(self.n_bath1 + self.n_sys, self.size)

    @classmethod
    def of(cls, sys: SystemSpec, baths) -> "Layout":
        b1, b2 = baths
        return cls(b1.size if b1 is not None else 0, sys.L_S, b2.size if b2 is not None else 0)


def assemble_hamiltonian(sys: SystemSpec, baths=(None, None)) -> np.ndarray:
    """Single-particle matrix of system + bath eigenmodes + couplings."""
    if sys.V != 0:
        raise UnsupportedBackendError("interacting system requires tebd or dense backend")
    return quadratic_part(sys, baths)


def quadratic_part(sys: SystemSpec, baths=(None, None)) -> np.ndarray:
    """Hopping/on-site matrix of the full set-up, ignoring ``V``."""
    lay = Layout.of(sys, baths)
    H = np.zeros((lay.size, lay.size))
    H[lay.system, lay.system] = sys.hamiltonian()
    for cb, blk, site in ((baths[0], lay.bath1, lay.system.start), (baths[1], lay.bath2, lay.system.stop - 1)):
        if cb is None or cb.size == 0:
            continue
        idx = np.arange(lay.size)[blk]
        H[idx, idx] = cb.energies
        H[site, idx] = cb.couplings()
        H[idx, site] = cb.couplings()
    return H


def thermal_correlation_block(cb: ChainBath) -> np.ndarray:
    """``diag(n(E_a))`` of a bath chain in its eigenbasis."""
    if not cb.has_eigs:
        raise ValueError("chain has no eigenbasis")
    return np.diag(occupation(cb.thermal, cb.energies))


def initial_correlation(sys_block: np.ndarray, baths) -> np.ndarray:
    """Product of a system correlation block with thermal bath blocks."""
    n1 = baths[0].size if baths[0] is not None else 0
    n2 = baths[1].size if baths[1] is not None else 0
    L = sys_block.shape[0]
    C = np.zeros((n1 + L + n2, n1 + L + n2), dtype=complex)
    C[n1 : n1 + L, n1 : n1 + L] = sys_block
    if n1:
        C[:n1, :n1] = thermal_correlation_block(baths[0])
    if n2:
        C[n1 + L :, n1 + L :] = thermal_correlation_block(baths[1])
    return C


class Propagator:
    """``C -> e^{iHt} C e^{-iHt}`` through one cached eigendecomposition of ``H``."""

    def __init__(self, H: np.ndarray):
        self.H = np.asarray(H)
        self.E, self.U = np.linalg.eigh(self.H)

    def evolve(self, C: np.ndarray, t: float) -> np.ndarray:
        if t == 0:
            return np.array(C, dtype=complex, copy=True)
        ph = np.exp(1j * self.E * t)
        Ct = self.U.conj().T @ C @ self.U
        Ct = ph[:, None] * Ct * ph.conj()[None, :]
        out = self.U @ Ct @ self.U.conj().T
        return 0.5 * (out + out.conj().T)


_prop_cache: OrderedDict[str, Propagator] = OrderedDict()


def propagator(H: np.ndarray) -> Propagator:
    key = hashlib.sha1(np.ascontiguousarray(H).tobytes() + str(H.shape).encode()).hexdigest()
    prop = _prop_cache.get(key)
    if prop is None:
        prop = Propagator(H)
        _prop_cache[key] = prop
        if len(_prop_cache) > 16:
            _prop_cache.popitem(last=False)
    return prop


def evolve(C: np.ndarray, H: np.ndarray, t: float) -> np.ndarray:
    if C.shape != H.shape:
        raise ValueError("correlation matrix and Hamiltonian dimensions differ")
    return propagator(H).evolve(C, t)


def preb_refresh(C: np.ndarray, baths, L_S: int | None = None) -> np.ndarray:
    """Keep the system block, drop all system-bath and bath-bath correlations,
    reset each bath block to its thermal occupations."""
    n1 = baths[0].size if baths[0] is not None else 0
    n2 = baths[1].size if baths[1] is not None else 0
    L = C.shape[0] - n1 - n2 if L_S is None else L_S
    return initial_correlation(C[n1 : n1 + L, n1 : n1 + L], baths)


def occupations(C_sys: np.ndarray) -> np.ndarray:
    return np.real(np.diag(C_sys)).copy()


def currents(C_sys: np.ndarray) -> np.ndarray:
    """Bond currents ``2i <c+_{l+1} c_l - c+_l c_{l+1}>``."""
    up = np.diag(C_sys, 1)
    down = np.diag(C_sys, -1)
    return np.real(2j * (down - up))


def observables(C: np.ndarray, sys: SystemSpec, layout: Layout | None = None) -> dict:
    blk = C if layout is None else C[layout.system, layout.system]
    return {"n": occupations(blk), "I": currents(blk)}


class FreeFermionEvolution:
    """Continuous evolution of system plus fixed finite baths."""

    def __init__(self, sys: SystemSpec, baths):
        self.sys = sys
        self.baths = tuple(baths)
        self.layout = Layout.of(sys, self.baths)
        self.H = assemble_hamiltonian(sys, self.baths)
        self.prop = propagator(self.H)

    def initial(self, sys_block) -> np.ndarray:
        return initial_correlation(sys_block, self.baths)

    def run(self, sys_block, times):
        """System blocks at each of ``times`` starting from a fresh product state."""
        C0 = self.initial(sys_block)
        return [self.prop.evolve(C0, t)[self.layout.system, self.layout.system] for t in times]
