"""Star-to-chain mapping of a spectral density and the chain eigenbasis."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.linalg import eigh_tridiagonal

from prebsim import _kernels
from prebsim.spectral import SpectralDensity, ThermalParams

MODES_PER_SITE = 16


@dataclass(frozen=True, eq=False)
class ChainBath:
    """Tight-binding chain ``gamma`` (to system), on-site ``eps``, hoppings ``hop``.

    ``energies``/``phi`` hold the single-particle eigenbasis once
    :func:`star_basis` has been applied; ``phi[:, a]`` is eigenvector ``a``.
    """

    gamma: float
    eps: np.ndarray
    hop: np.ndarray
    thermal: ThermalParams
    energies: np.ndarray | None = None
    phi: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.eps)

    @property
    def has_eigs(self) -> bool:
        return self.energies is not None

    def matrix(self) -> np.ndarray:
        return np.diag(self.eps) + np.diag(self.hop, 1) + np.diag(self.hop, -1)

    def couplings(self) -> np.ndarray:
        """System to eigenmode couplings ``gamma * phi[0, a]``."""
        if not self.has_eigs:
            raise ValueError("chain has no eigenbasis; call star_basis first")
        return self.gamma * self.phi[0]

    def to_dict(self) -> dict:
        out = {
            "gamma": self.gamma,
            "eps": np.asarray(self.eps).tolist(),
            "hop": np.asarray(self.hop).tolist(),
            "thermal": {
                "beta": self.thermal.beta,
                "mu": self.thermal.mu,
                "statistics": self.thermal.statistics.value,
            },
        }
        if self.has_eigs:
            out["E"] = self.energies.tolist()
            out["Phi"] = self.phi.tolist()
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ChainBath":
        tp = ThermalParams(**d["thermal"])
        E = np.asarray(d["E"]) if "E" in d else None
        Phi = np.asarray(d["Phi"]) if "Phi" in d else None
        return cls(float(d["gamma"]), np.asarray(d["eps"], float), np.asarray(d["hop"], float), tp, E, Phi)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "ChainBath":
        return cls.from_dict(json.loads(text))


def discretize(J: SpectralDensity, n_modes: int):
    """Mode frequencies and couplings ``kappa_r`` with ``kappa_r^2 = J w_r / 2pi``.

    At least ``n_modes`` nodes, placed as Gauss-Legendre points in the
    sine-mapped angle of the support so the discrete moments converge
    spectrally even with square-root band edges.
    """
    x, w = J.quadrature(panels=max(1, math.ceil(n_modes / 64)))
    weight = J(x) * w / (2 * math.pi)
    if np.any(weight < 0):
        raise ValueError("negative discretization weight")
    keep = weight > 0
    return x[keep], np.sqrt(weight[keep])


def chain_coefficients(
    J: SpectralDensity, L_B: int, thermal: ThermalParams | None = None, modes_per_site: int = MODES_PER_SITE
) -> ChainBath:
    """First ``L_B`` chain sites of the star-to-chain map of ``J``.

    Lanczos (full reorthogonalization) on the discretized star Hamiltonian,
    started from the normalized coupling vector.
    """
    if L_B < 1:
        raise ValueError("L_B must be at least 1")
    freq, kappa = discretize(J, modes_per_site * L_B)
    if L_B > freq.size:
        raise ValueError(f"L_B={L_B} exceeds the {freq.size} discretization modes")
    gamma = float(np.linalg.norm(kappa))
    if gamma == 0.0:
        raise ValueError("spectral density has zero weight")
    eps, hop = _kernels.lanczos_diag(freq, kappa, L_B)
    return ChainBath(gamma, np.asarray(eps), np.asarray(hop), thermal or ThermalParams(0.0))


def star_basis(cb: ChainBath) -> ChainBath:
    """Fill the ascending eigenvalues and eigenvectors of the chain matrix.

    Each eigenvector is signed so that its first nonzero entry is positive.
    """
    if cb.size == 1:
        E, Phi = np.array(cb.eps, float), np.ones((1, 1))
    else:
        E, Phi = eigh_tridiagonal(np.asarray(cb.eps, float), np.asarray(cb.hop, float))
    for a in range(Phi.shape[1]):
        col = Phi[:, a]
        nz = np.flatnonzero(np.abs(col) > 1e-14)
        if nz.size and col[nz[0]] < 0:
            Phi[:, a] = -col
    return replace(cb, energies=E, phi=Phi)


def required_bath_size(t: float, g_b: float) -> int:
    """Chain length ``ceil((t + 1) g_B)`` that is causally complete up to time ``t``."""
    if t < 0 or g_b <= 0:
        raise ValueError("need t >= 0 and g_B > 0")
    return max(1, math.ceil(round((t + 1) * g_b, 9)))


def make_bath(J: SpectralDensity, thermal: ThermalParams, L_B: int, cache: "ChainCache | None" = None) -> ChainBath:
    """Chain-map, diagonalize and attach thermal parameters, using ``cache`` if given."""
    if cache is not None:
        hit = cache.get(J, L_B)
        if hit is not None:
            return replace(hit, thermal=thermal)
    cb = star_basis(chain_coefficients(J, L_B, thermal))
    if cache is not None:
        cache.put(J, L_B, cb)
    return cb


class ChainCache:
    """On-disk JSON cache keyed by (density kind, parameters, L_B)."""

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, J: SpectralDensity, L_B: int) -> Path:
        key = json.dumps({"density": J.params(), "L_B": L_B}, sort_keys=True)
        digest = hashlib.sha256(key.encode()).hexdigest()[:20]
        return self.directory / f"{J.kind}-{L_B}-{digest}.json"

    def get(self, J, L_B) -> ChainBath | None:
        p = self._path(J, L_B)
        if not p.exists():
            return None
        return ChainBath.from_json(p.read_text())

    def put(self, J, L_B, cb: ChainBath) -> None:
        self._path(J, L_B).write_text(cb.to_json())
