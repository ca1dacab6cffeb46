"""Bath spectral densities and the bath-side quantities derived from them.

Conventions: a spectral density ``J(w)`` is non-negative on a finite
support ``[lo, hi]`` and zero outside.  All integrals over a support are
done in the angle variable ``w = c + r sin(theta)`` with composite
Gauss-Legendre panels, which removes the square-root edge behaviour of the
semicircle and is harmless for smooth densities.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from prebsim import _kernels

GL_ORDER = 64
SATURATE = 700.0
SCAN_STEP = 0.01

_gl_cache: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre(n: int = GL_ORDER):
    if n not in _gl_cache:
        _gl_cache[n] = np.polynomial.legendre.leggauss(n)
    return _gl_cache[n]


def composite_gl(a: float, b: float, panels: int, order: int = GL_ORDER):
    """Nodes and weights of ``panels`` equal Gauss-Legendre panels on [a, b]."""
    x, w = gauss_legendre(order)
    edges = np.linspace(a, b, panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    nodes = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    weights = (half[:, None] * w[None, :]).ravel()
    return nodes, weights


class SpectralError(ValueError):
    pass


class SpectralDensity:
    """Base class; subclasses implement ``_values`` and ``support``."""

    kind = "abstract"
    support: tuple[float, float]

    def __call__(self, omega):
        omega = np.asarray(omega, dtype=float)
        lo, hi = self.support
        inside = (omega >= lo) & (omega <= hi)
        out = np.zeros_like(omega)
        if np.any(inside):
            out[inside] = np.maximum(self._values(omega[inside]), 0.0)
        return out if out.ndim else float(out)

    def _values(self, omega):
        raise NotImplementedError

    @property
    def bandwidth(self) -> float:
        lo, hi = self.support
        return hi - lo

    @property
    def asymptotic_hopping(self) -> float:
        # chain hoppings of any finite-support density tend to a quarter of the band
        return self.bandwidth / 4.0

    def params(self) -> dict:
        raise NotImplementedError

    def quadrature(self, panels: int = 2, split=()):
        """Nodes/weights for integrals ``int f(w) dw`` over the support.

        ``split`` lists interior frequencies that become panel boundaries
        (used for the Fermi step at the chemical potential).
        """
        lo, hi = self.support
        c, r = 0.5 * (hi + lo), 0.5 * (hi - lo)
        cuts = [-0.5 * math.pi]
        for s in sorted(split):
            if lo < s < hi:
                cuts.append(math.asin((s - c) / r))
        cuts.append(0.5 * math.pi)
        span = math.pi
        nodes, weights = [], []
        for a, b in zip(cuts[:-1], cuts[1:]):
            k = max(1, int(math.ceil(panels * (b - a) / span)))
            th, wt = composite_gl(a, b, k)
            nodes.append(c + r * np.sin(th))
            weights.append(wt * r * np.cos(th))
        return np.concatenate(nodes), np.concatenate(weights)

    def total_weight(self) -> float:
        """(1/2pi) * integral of J, i.e. the squared system-chain coupling."""
        x, w = self.quadrature(panels=8)
        return float(w @ self(x)) / (2 * math.pi)


@dataclass(frozen=True)
class Semicircle(SpectralDensity):
    """``J(w) = Gamma * sqrt(1 - (w / 2g)^2)`` on ``[-2g, 2g]``."""

    gamma_rate: float
    g_b: float
    kind = "semicircle"

    def __post_init__(self):
        if self.gamma_rate < 0 or self.g_b <= 0:
            raise SpectralError("semicircle needs Gamma >= 0 and g_B > 0")

    @property
    def support(self):
        return (-2.0 * self.g_b, 2.0 * self.g_b)

    def _values(self, omega):
        x = omega / (2.0 * self.g_b)
        return self.gamma_rate * np.sqrt(np.clip(1.0 - x * x, 0.0, None))

    def params(self):
        return {"kind": self.kind, "Gamma": self.gamma_rate, "g_B": self.g_b}


def ohmic_cutoff_edge(cutoff: float, rel_tail: float = 1e-12) -> float:
    # int_W^inf w e^{-(w/wc)^2} dw = (wc^2/2) e^{-(W/wc)^2}
    return cutoff * math.sqrt(-math.log(rel_tail))


@dataclass(frozen=True)
class OhmicGaussian(SpectralDensity):
    """``J(w) = coupling * w * exp(-(w/cutoff)^2)`` for ``w >= 0``."""

    coupling: float
    cutoff: float
    kind = "ohmic"

    def __post_init__(self):
        if self.coupling < 0 or self.cutoff <= 0:
            raise SpectralError("ohmic density needs coupling >= 0 and cutoff > 0")

    @property
    def support(self):
        return (0.0, ohmic_cutoff_edge(self.cutoff))

    def _values(self, omega):
        return self.coupling * omega * np.exp(-((omega / self.cutoff) ** 2))

    def params(self):
        return {"kind": self.kind, "coupling": self.coupling, "cutoff": self.cutoff}


@dataclass(frozen=True, eq=False)
class Tabulated(SpectralDensity):
    """Linearly interpolated density on a strictly increasing grid."""

    omega: np.ndarray
    values: np.ndarray
    kind = "tabulated"

    def __post_init__(self):
        om = np.asarray(self.omega, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if om.ndim != 1 or om.shape != val.shape or om.size < 2:
            raise SpectralError("tabulated density needs two equal-length 1d arrays")
        if np.any(np.diff(om) <= 0):
            raise SpectralError("tabulated frequencies must be strictly increasing")
        if np.any(val < 0):
            raise SpectralError("tabulated density has negative values")
        object.__setattr__(self, "omega", om)
        object.__setattr__(self, "values", val)

    @classmethod
    def from_csv(cls, path) -> "Tabulated":
        data = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(data[:, 0], data[:, 1])

    @property
    def support(self):
        return (float(self.omega[0]), float(self.omega[-1]))

    def _values(self, omega):
        return np.interp(omega, self.omega, self.values)

    def params(self):
        return {"kind": self.kind, "omega": self.omega.tolist(), "values": self.values.tolist()}

    def quadrature(self, panels: int = 2, split=()):
        # kinks sit on the data points: integrate each interval separately
        edges = np.unique(np.concatenate([self.omega, [s for s in split if self.omega[0] < s < self.omega[-1]]]))
        sub = max(1, int(math.ceil(panels / max(1, edges.size - 1))))
        x, w = gauss_legendre(16)
        nodes, weights = [], []
        for a, b in zip(edges[:-1], edges[1:]):
            e = np.linspace(a, b, sub + 1)
            half = 0.5 * np.diff(e)
            mid = 0.5 * (e[1:] + e[:-1])
            nodes.append((mid[:, None] + half[:, None] * x).ravel())
            weights.append((half[:, None] * w).ravel())
        return np.concatenate(nodes), np.concatenate(weights)


def evaluate(J: SpectralDensity, omega):
    return J(omega)


# --------------------------------------------------------------------------
# thermal occupations
# --------------------------------------------------------------------------


class Statistics(str, Enum):
    FERMI = "fermi"
    BOSE = "bose"


@dataclass(frozen=True)
class ThermalParams:
    beta: float
    mu: float = 0.0
    statistics: Statistics = Statistics.FERMI

    def __post_init__(self):
        if self.beta < 0:
            raise SpectralError("beta must be non-negative")
        object.__setattr__(self, "statistics", Statistics(self.statistics))

    def check_support(self, J: SpectralDensity):
        lo = J.support[0]
        # mu at the band edge is fine when J vanishes there (J*n stays finite)
        if self.statistics is Statistics.BOSE and not (self.mu < lo or (self.mu == lo and J(lo) == 0.0)):
            raise SpectralError(
                f"Bose occupation diverges: mu={self.mu} is not below the support minimum {J.support[0]}"
            )


def occupation(tp: ThermalParams, omega):
    """Fermi or Bose occupation ``1 / (exp(beta (w - mu)) +- 1)``."""
    omega = np.asarray(omega, dtype=float)
    x = tp.beta * (omega - tp.mu)
    if tp.statistics is Statistics.FERMI:
        xs = np.clip(x, -SATURATE, SATURATE)
        out = 1.0 / (np.exp(xs) + 1.0)
        out = np.where(x > SATURATE, 0.0, np.where(x < -SATURATE, 1.0, out))
    else:
        if np.any(omega <= tp.mu):
            raise SpectralError("Bose occupation requested at or below the chemical potential")
        out = np.where(x > SATURATE, 0.0, 1.0 / np.expm1(np.minimum(x, SATURATE)))
    return out if out.ndim else float(out)


# --------------------------------------------------------------------------
# Hilbert transform  (1/pi) P int J(w') / (w - w') dw'
# --------------------------------------------------------------------------


def hilbert_transform(J: SpectralDensity, omega, panels: int = 8):
    """Principal-value Hilbert transform, vectorized over ``omega``.

    The integrand is regularized as ``[J(w') - J(w)] / (w - w')`` and the
    subtracted piece is added back analytically as
    ``J(w) log|(w - lo) / (w - hi)|``.
    """
    omega = np.asarray(omega, dtype=float)
    scalar = omega.ndim == 0
    om = np.atleast_1d(omega)
    lo, hi = J.support
    x, w = J.quadrature(panels=panels)
    jx = J(x)
    jo = J(om)
    diff = om[:, None] - x[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        q = (jx[None, :] - jo[:, None]) / diff
    q[~np.isfinite(q)] = 0.0
    reg = q @ w
    with np.errstate(divide="ignore"):
        logs = np.log(np.abs(om - lo)) - np.log(np.abs(om - hi))
    tail = np.where(jo != 0.0, jo * np.where(np.isfinite(logs), logs, 0.0), 0.0)
    out = (reg + tail) / math.pi
    return float(out[0]) if scalar else out


# --------------------------------------------------------------------------
# bath correlation functions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class BathCorrelation:
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray


def oscillatory_panels(J: SpectralDensity, t_max: float) -> int:
    return max(1, int(math.ceil(abs(t_max) * J.bandwidth / (2 * math.pi))) * 4)


def bath_correlations(J: SpectralDensity, tp: ThermalParams, t) -> BathCorrelation:
    """``a(t) = int dw/2pi J e^{iwt}`` and ``b(t) = int dw/2pi J n e^{iwt}``."""
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(times < 0):
        raise SpectralError("correlation times must be non-negative")
    tp.check_support(J)
    panels = max(2, oscillatory_panels(J, times.max()))
    x, w = J.quadrature(panels=panels, split=(tp.mu,))
    if tp.statistics is Statistics.BOSE:
        keep = x > tp.mu
        x, w = x[keep], w[keep]
    jw = J(x) * w / (2 * math.pi)
    nw = jw * occupation(tp, x)
    a = _kernels.fourier_sum(x, jw.astype(np.complex128), times)
    b = _kernels.fourier_sum(x, nw.astype(np.complex128), times)
    return BathCorrelation(times, a, b)


class MemoryHorizonError(RuntimeError):
    def __init__(self, message, profile: BathCorrelation):
        super().__init__(message)
        self.profile = profile


def memory_time(J: SpectralDensity, tp: ThermalParams, threshold: float = 0.05, t_max: float = 20.0) -> float:
    """Earliest scan time after which |a| and |b| stay below ``threshold`` of their maxima."""
    if not 0 < threshold < 1:
        raise ValueError("threshold must lie in (0, 1)")
    if t_max <= 0:
        raise ValueError("t_max must be positive")
    n = int(round(t_max / SCAN_STEP))
    times = np.arange(n + 1) * SCAN_STEP
    prof = bath_correlations(J, tp, times)
    above = np.zeros(times.size, dtype=bool)
    for f in (prof.a, prof.b):
        mag = np.abs(f)
        peak = mag.max()
        if peak > 0:
            above |= mag / peak >= threshold
    if above[-1]:
        raise MemoryHorizonError(f"correlations still above {threshold} at t_max={t_max}", prof)
    last = np.flatnonzero(above)
    if last.size == 0:
        return 0.0
    return float(times[last[-1] + 1])


def refresh_error_bound(
    J: SpectralDensity, tp: ThermalParams, tau_m: float, prefactor: float = 4.0, t_max: float = 50.0
) -> float:
    """``prefactor * int_{tau_m}^{t_max} (|a| + 2|b|) dt`` by Gauss-Legendre panels."""
    if tau_m < 0 or prefactor < 0:
        raise ValueError("tau_m and prefactor must be non-negative")
    if prefactor == 0 or tau_m >= t_max:
        return 0.0
    # |a(t)| is oscillatory with period ~ 2pi/bandwidth; resolve it per panel
    panels = max(4, int(math.ceil((t_max - tau_m) * J.bandwidth / math.pi)))
    ts, wt = composite_gl(tau_m, t_max, panels, order=16)
    prof = bath_correlations(J, tp, ts)
    return float(prefactor * (wt @ (np.abs(prof.a) + 2 * np.abs(prof.b))))


def density_from_dict(spec: dict, base=None) -> SpectralDensity:
    kind = spec["kind"]
    if kind == "semicircle":
        return Semicircle(float(spec["Gamma"]), float(spec["g_B"]))
    if kind == "ohmic":
        return OhmicGaussian(float(spec["coupling"]), float(spec["cutoff"]))
    if kind == "tabulated":
        if "csv" in spec:
            from pathlib import Path

            p = Path(spec["csv"])
            if base is not None and not p.is_absolute():
                p = Path(base) / p
            return Tabulated.from_csv(p)
        return Tabulated(np.asarray(spec["omega"]), np.asarray(spec["values"]))
    raise SpectralError(f"unknown spectral density kind {kind!r}")
