"""Steady state of the non-interacting chain with infinite baths (NEGF)."""
from __future__ import annotations

import json
import math

import numpy as np

from prebsim.spectral import SpectralDensity, ThermalParams, gauss_legendre, hilbert_transform, occupation

PANEL_ORDER = 64
TOLERANCE = 1e-9
MAX_PANELS = 4096


class NEGFConvergenceError(RuntimeError):
    def __init__(self, message, trace):
        super().__init__(message)
        self.trace = trace


class SingularGreenError(np.linalg.LinAlgError):
    pass


def self_energy(J: SpectralDensity, omega):
    """``(i J(w) + J^H(w)) / 2``; imaginary part is non-negative."""
    return 0.5 * (1j * J(omega) + hilbert_transform(J, omega))


def retarded_green(H_S: np.ndarray, J1: SpectralDensity, J2: SpectralDensity, omega):
    """``[w - H_S - Sigma_1 - Sigma_2]^{-1}`` with the self-energies on the end sites.

    Vectorized over ``omega``: returns shape ``(len(omega), L_S, L_S)`` for
    array input and ``(L_S, L_S)`` for a scalar.
    """
    om = np.atleast_1d(np.asarray(omega, dtype=float))
    L = H_S.shape[0]
    A = np.broadcast_to(-H_S.astype(complex), (om.size, L, L)).copy()
    A[:, np.arange(L), np.arange(L)] += om[:, None]
    A[:, 0, 0] -= self_energy(J1, om)
    A[:, L - 1, L - 1] -= self_energy(J2, om)
    try:
        G = np.linalg.inv(A)
    except np.linalg.LinAlgError as exc:
        dets = np.abs(np.linalg.det(A))
        raise SingularGreenError(f"singular at omega={om[np.argmin(dets)]}") from exc
    return G[0] if np.ndim(omega) == 0 else G


def _integrand(H_S, J1, J2, tp1, tp2, omega):
    G = retarded_green(H_S, J1, J2, omega)
    L = H_S.shape[0]
    w1 = J1(omega) * occupation(tp1, omega) if J1.bandwidth > 0 else 0 * omega
    w2 = J2(omega) * occupation(tp2, omega) if J2.bandwidth > 0 else 0 * omega
    g1 = G[:, :, 0]
    g2 = G[:, :, L - 1]
    # <c+_p c_q> density: G_{p s} conj(G_{q s}) J n   (G carries the +i self-energy)
    out = np.einsum("wp,wq,w->wpq", g1, g1.conj(), w1) + np.einsum("wp,wq,w->wpq", g2, g2.conj(), w2)
    return out / (2 * math.pi)


def _panel(f, a, b, c, r):
    x, w = gauss_legendre(PANEL_ORDER)
    half, mid = 0.5 * (b - a), 0.5 * (b + a)
    th = mid + half * x
    om = c + r * np.sin(th)
    return np.tensordot(w * half * r * np.cos(th), f(om), axes=1)


def _adaptive(f, lo, hi, tol, trace):
    c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
    stack = [(-0.5 * math.pi, 0.5 * math.pi, _panel(f, -0.5 * math.pi, 0.5 * math.pi, c, r))]
    total = 0.0
    panels = 0
    while stack:
        a, b, coarse = stack.pop()
        m = 0.5 * (a + b)
        left, right = _panel(f, a, m, c, r), _panel(f, m, b, c, r)
        fine = left + right
        err = float(np.max(np.abs(fine - coarse)))
        panels += 1
        if err <= tol * (b - a) / math.pi or b - a < 1e-10:
            total = total + fine
        else:
            trace.append((c + r * math.sin(a), c + r * math.sin(b), err))
            stack.extend([(a, m, left), (m, b, right)])
        if panels > MAX_PANELS:
            raise NEGFConvergenceError("adaptive quadrature did not converge", trace)
    return total


def ness_correlations(
    H_S: np.ndarray,
    J1: SpectralDensity,
    J2: SpectralDensity,
    tp1: ThermalParams,
    tp2: ThermalParams,
    tol: float = TOLERANCE,
) -> np.ndarray:
    """System correlation matrix ``<c+_p c_q>`` of the steady state."""
    H_S = np.asarray(H_S, dtype=float)
    f = lambda om: _integrand(H_S, J1, J2, tp1, tp2, om)  # noqa: E731
    cuts = sorted(set(J1.support) | set(J2.support))
    lo, hi = cuts[0], cuts[-1]
    trace: list = []
    C = np.zeros(H_S.shape, dtype=complex)
    for a, b in zip(cuts[:-1], cuts[1:]):
        # skip gaps covered by neither density
        mid = 0.5 * (a + b)
        if J1(mid) == 0 and J2(mid) == 0 and not (lo < mid < hi and _covers(J1, J2, a, b)):
            continue
        C = C + _adaptive(f, a, b, tol, trace)
    return 0.5 * (C + C.conj().T)


def _covers(J1, J2, a, b):
    for J in (J1, J2):
        s0, s1 = J.support
        if s0 <= a and b <= s1:
            return True
    return False


def ness_observables(C: np.ndarray) -> dict:
    from prebsim.freefermion import currents, occupations

    return {"n": occupations(C), "I": currents(C)}


def ness_to_json(C: np.ndarray, path=None, meta: dict | None = None) -> str:
    obs = ness_observables(C)
    payload = {
        "C_real": C.real.tolist(),
        "C_imag": C.imag.tolist(),
        "n": obs["n"].tolist(),
        "I": obs["I"].tolist(),
        "meta": meta or {},
    }
    text = json.dumps(payload, indent=1)
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def ness_from_json(text_or_path) -> dict:
    try:
        payload = json.loads(text_or_path)
    except (json.JSONDecodeError, TypeError):
        with open(text_or_path) as fh:
            payload = json.load(fh)
    C = np.asarray(payload["C_real"]) + 1j * np.asarray(payload["C_imag"])
    return {"C": C, "n": np.asarray(payload["n"]), "I": np.asarray(payload["I"]), "meta": payload.get("meta", {})}
