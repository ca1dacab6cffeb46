"""The periodically-refreshed-bath recursion over interchangeable backends.

A backend evolves a *system* state for a time ``t`` in contact with freshly
prepared thermal baths and returns the new system state; refreshing the
baths is therefore implicit in every call.  Convergence is certified
empirically by doubling the refresh period.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from prebsim import freefermion as ff
from prebsim import liouville, tebd
from prebsim.chainmap import ChainCache, make_bath, required_bath_size
from prebsim.freefermion import SystemSpec
from prebsim.spectral import SpectralDensity, ThermalParams, memory_time

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-2
TIME_DIGITS = 9


class BackendError(RuntimeError):
    def __init__(self, message, cycle: int):
        super().__init__(f"cycle {cycle}: {message}")
        self.cycle = cycle


class InconsistencyError(RuntimeError):
    def __init__(self, t, t1_a, t1_b, deviation):
        super().__init__(f"runs t1={t1_a} and t1={t1_b} disagree by {deviation:.3e} at t={t}")
        self.t, self.pair, self.deviation = t, (t1_a, t1_b), deviation


@dataclass(frozen=True)
class OpenSetup:
    """System, two bath spectral densities, their thermal states and the
    initial system occupation pattern."""

    system: SystemSpec
    densities: tuple
    thermals: tuple
    pattern: tuple

    @classmethod
    def create(cls, system: SystemSpec, densities, thermals, pattern=None) -> "OpenSetup":
        if pattern is None:
            pattern = ff.half_filled(system.L_S)
        pattern = tuple(float(x) for x in pattern)
        if len(pattern) != system.L_S:
            raise ValueError("initial pattern length differs from L_S")
        return cls(system, tuple(densities), tuple(thermals), pattern)

    def bath_sizes(self, t: float) -> tuple:
        return tuple(required_bath_size(t, J.asymptotic_hopping) for J in self.densities)

    def baths(self, sizes, cache: ChainCache | None = None) -> tuple:
        out = []
        for J, tp, L in zip(self.densities, self.thermals, sizes):
            out.append(None if L == 0 or J.total_weight() == 0 else make_bath(J, tp, L, cache))
        return tuple(out)

    def memory_time(self, threshold: float = 0.05) -> float:
        return max(memory_time(J, tp, threshold) for J, tp in zip(self.densities, self.thermals))


def _obs_equal_shape(obs):
    return {"n": np.asarray(obs["n"], float), "I": np.asarray(obs["I"], float)}


class FreeFermionBackend:
    """System correlation block evolved exactly with finite Gaussian baths."""

    name = "freefermion"

    def __init__(self, setup: OpenSetup, bath_sizes, cache=None):
        self.setup = setup
        self.baths = setup.baths(bath_sizes, cache)
        self.evo = ff.FreeFermionEvolution(setup.system, self.baths)

    def initial(self):
        return np.diag(np.asarray(self.setup.pattern)).astype(complex)

    def evolve(self, state, t: float, samples=()):
        times = sorted(set([float(s) for s in samples if 0 < s < t]) | {float(t)})
        blocks = self.evo.run(state, times)
        records = [(s, self.observables(b)) for s, b in zip(times[:-1], blocks[:-1])]
        return blocks[-1], records

    def observables(self, state) -> dict:
        return {"n": ff.occupations(state), "I": ff.currents(state)}


class TebdBackend:
    """System density-matrix MPS evolved by mixed-basis TEBD."""

    name = "tebd"

    def __init__(self, setup: OpenSetup, bath_sizes, dt=0.1, chi_max=128, svd_cutoff=1e-10, order="energy", cache=None):
        self.setup = setup
        self.baths = setup.baths(bath_sizes, cache)
        self.engine = tebd.TebdEvolution(setup.system, self.baths, dt, chi_max, svd_cutoff, order)

    def initial(self):
        return tebd.product_system(self.setup.pattern, self.engine.chi_max, self.engine.svd_cutoff)

    def evolve(self, state, t: float, samples=()):
        eng = self.engine
        steps = {eng.steps_for(s) for s in samples if 0 < s < t}
        n_total = eng.steps_for(t)
        if steps:
            stride = math.gcd(*steps)
        else:
            stride = None
        out, recs = eng.run(state, t, stride=stride)
        keep = {round(s * eng.dt, TIME_DIGITS) for s in steps}
        records = [(s, o) for s, o in recs if round(s, TIME_DIGITS) in keep and s < n_total * eng.dt]
        return out, records

    def observables(self, state) -> dict:
        return tebd.system_observables(state)

    def truncation(self, state) -> dict:
        return state.trunc.to_dict()


class DenseBackend:
    """System density matrix evolved with the full many-body Hamiltonian (M <= 12)."""

    name = "dense"

    def __init__(self, setup: OpenSetup, bath_sizes, cache=None):
        self.setup = setup
        self.baths = setup.baths(bath_sizes, cache)
        self.H = liouville.build_many_body_hamiltonian(setup.system, self.baths)
        self.evo = liouville.DenseEvolution(self.H)
        n1 = self.baths[0].size if self.baths[0] is not None else 0
        self.keep = list(range(n1, n1 + setup.system.L_S))

    def initial(self):
        return liouville.product_state(self.setup.pattern)

    def evolve(self, state, t: float, samples=()):
        rho0 = liouville.attach_baths(state, self.baths)
        times = sorted(set([float(s) for s in samples if 0 < s < t]) | {float(t)})
        reduced = [liouville.partial_trace(self.evo.evolve(rho0, s), self.keep) for s in times]
        records = [(s, self.observables(r)) for s, r in zip(times[:-1], reduced[:-1])]
        return reduced[-1], records

    def observables(self, state) -> dict:
        C = liouville.correlation_matrix(state)
        return {"n": ff.occupations(C), "I": ff.currents(C)}


BACKENDS = {"freefermion": FreeFermionBackend, "tebd": TebdBackend, "dense": DenseBackend}


@dataclass(frozen=True)
class PrebSchedule:
    tau: float
    n_steps: int
    t1: float = 0.0
    dt: float = 0.1
    record_stride: float | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if not 0 <= self.t1 < self.tau:
            raise ValueError("need 0 <= t1 < tau")
        if self.n_steps < 0:
            raise ValueError("n_steps must be non-negative")

    def check_dt(self):
        for name, val in (("tau", self.tau), ("t1", self.t1)):
            k = round(val / self.dt)
            if abs(k * self.dt - val) > 1e-9 * max(1.0, val):
                raise ValueError(f"{name}={val} is not a multiple of dt={self.dt}")

    @property
    def horizon(self) -> float:
        return self.t1 + self.n_steps * self.tau


@dataclass
class Timeline:
    """Observables of the system at increasing times."""

    t: np.ndarray
    n: np.ndarray
    I: np.ndarray
    source: np.ndarray  # t1 of the run that produced each row
    boundary: np.ndarray  # True at refresh boundaries
    meta: dict = field(default_factory=dict)

    @classmethod
    def from_records(cls, records, t1=0.0, meta=None) -> "Timeline":
        records = sorted(records, key=lambda r: r[0])
        t = np.array([r[0] for r in records])
        n = np.array([r[1]["n"] for r in records])
        I = np.array([r[1]["I"] for r in records])
        src = np.full(t.size, float(t1))
        bnd = np.array([bool(r[2]) if len(r) > 2 else True for r in records])
        return cls(t, n, I, src, bnd, meta or {})

    def __len__(self):
        return self.t.size

    def at_boundaries(self) -> "Timeline":
        m = self.boundary
        return Timeline(self.t[m], self.n[m], self.I[m], self.source[m], self.boundary[m], self.meta)

    def values(self) -> np.ndarray:
        return np.hstack([self.n, self.I])

    def sample(self, times) -> np.ndarray:
        """Rows at the requested times (exact match up to rounding)."""
        index = {round(float(x), TIME_DIGITS): i for i, x in enumerate(self.t)}
        try:
            rows = [index[round(float(x), TIME_DIGITS)] for x in times]
        except KeyError as exc:
            raise KeyError(f"time {exc.args[0]} not in timeline") from None
        return self.values()[rows]

    def to_csv(self, path) -> None:
        L = self.n.shape[1] if self.n.ndim == 2 else 0
        header = ["t"] + [f"n_{i + 1}" for i in range(L)] + [f"I_{i + 1}" for i in range(max(L - 1, 0))]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header + ["t1", "boundary"])
            for k in range(len(self)):
                w.writerow(
                    [repr(float(self.t[k]))]
                    + [repr(float(x)) for x in self.n[k]]
                    + [repr(float(x)) for x in self.I[k]]
                    + [repr(float(self.source[k])), int(self.boundary[k])]
                )

    @classmethod
    def from_csv(cls, path) -> "Timeline":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        data = np.array([[float(x) for x in r] for r in body]) if body else np.zeros((0, len(head)))
        n_cols = [i for i, h in enumerate(head) if h.startswith("n_")]
        i_cols = [i for i, h in enumerate(head) if h.startswith("I_")]
        src = data[:, head.index("t1")] if "t1" in head else np.zeros(len(data))
        bnd = data[:, head.index("boundary")].astype(bool) if "boundary" in head else np.ones(len(data), bool)
        return cls(data[:, 0], data[:, n_cols], data[:, i_cols], src, bnd)


def run_preb(backend, schedule: PrebSchedule, state=None) -> Timeline:
    """Evolve ``t1``, refresh, then ``n_steps`` times (evolve ``tau``, refresh).

    Rows at refresh boundaries are always recorded; ``record_stride`` adds
    samples inside each evolution segment.
    """
    if backend.name == "tebd":
        schedule.check_dt()
    state = backend.initial() if state is None else state
    records = [(0.0, backend.observables(state), True)]
    t = 0.0
    segments = ([schedule.t1] if schedule.t1 > 0 else []) + [schedule.tau] * schedule.n_steps
    final_state = state
    for cycle, seg in enumerate(segments):
        samples = []
        if schedule.record_stride:
            k = int(math.floor(seg / schedule.record_stride + 1e-9))
            samples = [j * schedule.record_stride for j in range(1, k + 1) if j * schedule.record_stride < seg - 1e-9]
        try:
            final_state, inner = backend.evolve(final_state, seg, samples)
            obs = backend.observables(final_state)
        except Exception as exc:  # noqa: BLE001 - re-raised with the cycle attached
            raise BackendError(str(exc), cycle) from exc
        records += [(round(t + s, TIME_DIGITS), o, False) for s, o in inner]
        t = round(t + seg, TIME_DIGITS)
        records.append((t, obs, True))
    tl = Timeline.from_records(records, schedule.t1)
    tl.meta.update({"tau": schedule.tau, "t1": schedule.t1, "n_steps": schedule.n_steps, "backend": backend.name})
    if hasattr(backend, "truncation"):
        tl.meta["truncation"] = backend.truncation(final_state)
    tl.meta["final_state"] = final_state
    return tl


def continuous_timeline(setup: OpenSetup, times, cache=None) -> Timeline:
    """Free-fermion reference without refreshing, baths sized for ``max(times)``."""
    times = np.asarray(sorted(times), dtype=float)
    back = FreeFermionBackend(setup, setup.bath_sizes(float(times[-1])), cache)
    blocks = back.evo.run(back.initial(), times)
    recs = [(float(s), back.observables(b), True) for s, b in zip(times, blocks)]
    return Timeline.from_records(recs, 0.0, {"backend": "continuous"})


def max_deviation(a: Timeline, b: Timeline, times=None) -> float:
    """Largest absolute difference over all observables at common times."""
    if times is None:
        ta = {round(float(x), TIME_DIGITS) for x in a.t}
        tb = {round(float(x), TIME_DIGITS) for x in b.t}
        times = sorted(ta & tb)
    if len(times) == 0:
        raise ValueError("timelines share no sample times")
    return float(np.max(np.abs(a.sample(times) - b.sample(times))))


def _pool_size() -> int:
    try:
        return max(1, int(os.environ.get("PREB_SIM_THREADS", os.cpu_count() or 1)))
    except ValueError:
        return 1


def run_many(jobs: list[Callable[[], Timeline]]) -> list[Timeline]:
    """Execute independent runs on a bounded pool; results keep job order."""
    n = min(_pool_size(), len(jobs)) or 1
    if n == 1:
        return [job() for job in jobs]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(lambda f: f(), jobs))


def reconstruct_timeline(backend, tau: float, t1_list, n_steps: int, tol: float = DEFAULT_TOL, dt: float = 0.1, record_stride=None) -> Timeline:
    """Merge PReB runs with offsets ``t1_list``; shared times must agree within ``tol``."""
    t1_list = sorted(set(float(x) for x in t1_list))
    for t1 in t1_list:
        if not 0 <= t1 < tau:
            raise ValueError(f"offset t1={t1} outside [0, {tau})")
    jobs = [lambda t1=t1: run_preb(backend, PrebSchedule(tau, n_steps, t1, dt, record_stride)) for t1 in t1_list]
    runs = run_many(jobs)
    merged: dict = {}
    for t1, tl in zip(t1_list, runs):
        vals = tl.values()
        for k, x in enumerate(tl.t):
            key = round(float(x), TIME_DIGITS)
            if key in merged:
                other_t1, other = merged[key][0], merged[key][1]
                dev = float(np.max(np.abs(other - vals[k]))) if vals.shape[1] else 0.0
                if dev > tol:
                    raise InconsistencyError(key, other_t1, t1, dev)
                continue
            merged[key] = (t1, vals[k], bool(tl.boundary[k]))
    keys = sorted(merged)
    L = runs[0].n.shape[1]
    vals = np.array([merged[k][1] for k in keys])
    out = Timeline(
        np.array(keys),
        vals[:, :L],
        vals[:, L:],
        np.array([merged[k][0] for k in keys]),
        np.array([merged[k][2] for k in keys]),
        {"tau": tau, "t1": t1_list, "backend": getattr(backend, "name", "?")},
    )
    return out


@dataclass
class ConvergenceReport:
    taus: list
    traces: dict
    deviations: dict
    converged: bool
    pair: tuple | None
    tolerance: float
    tau_m: float | None = None

    def to_dict(self) -> dict:
        return {
            "taus": self.taus,
            "tolerance": None if math.isinf(self.tolerance) else self.tolerance,
            "tau_M": self.tau_m,
            "verdict": "converged" if self.converged else "not-converged",
            "certifying_pair": list(self.pair) if self.pair else None,
            "deviations": {f"{a}:{b}": d for (a, b), d in self.deviations.items()},
            "traces": {
                str(tau): {"t": tl.t.tolist(), "n": tl.n.tolist(), "I": tl.I.tolist()} for tau, tl in self.traces.items()
            },
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def certify_convergence(
    factory: Callable[[float], object],
    tau0: float,
    tolerance: float = DEFAULT_TOL,
    max_doublings: int = 3,
    horizon: float | None = None,
    tau_m: float | None = None,
    dt: float = 0.1,
) -> ConvergenceReport:
    """Run ``tau0, 2 tau0, ...`` (``factory(tau)`` builds a backend sized for
    ``tau``) until successive traces agree within ``tolerance`` at the
    refresh times of the longer period, up to ``horizon``."""
    if tau_m is not None and tau0 <= tau_m:
        warnings.warn(
            f"tau0={tau0} does not exceed the memory time {tau_m}; refreshing that often cannot converge",
            RuntimeWarning,
            stacklevel=2,
        )
    top = tau0 * 2**max_doublings
    horizon = top if horizon is None else horizon
    traces: dict = {}
    deviations: dict = {}

    def trace(tau):
        if tau not in traces:
            n = int(math.floor(horizon / tau + 1e-9))
            traces[tau] = run_preb(factory(tau), PrebSchedule(tau, n, 0.0, dt))
            traces[tau].meta.pop("final_state", None)
        return traces[tau]

    tau = tau0
    taus = [tau0]
    for _ in range(max_doublings):
        a, b = trace(tau), trace(2 * tau)
        taus.append(2 * tau)
        dev = max_deviation(a, b)
        deviations[(tau, 2 * tau)] = dev
        log.info("tau=%g vs %g: deviation %.3e", tau, 2 * tau, dev)
        if dev < tolerance:
            return ConvergenceReport(taus, traces, deviations, True, (tau, 2 * tau), tolerance, tau_m)
        tau *= 2
    if max_doublings == 0:
        trace(tau0)
    return ConvergenceReport(taus, traces, deviations, False, None, tolerance, tau_m)


def ness_detector(tl: Timeline, window: float, eps: float) -> float | None:
    """Earliest time after which every trailing ``window`` varies by less than
    ``eps`` in all observables and the bond currents are uniform within ``eps``."""
    t = np.asarray(tl.t, float)
    if t.size == 0:
        return None
    vals = tl.values()
    if t.size > 1 and np.min(np.diff(t)) > window:
        raise ValueError("window is shorter than the sampling interval")
    good = np.zeros(t.size, dtype=bool)
    for j in range(t.size):
        lo = np.searchsorted(t, t[j] - window - 1e-12)
        blk = vals[lo : j + 1]
        steady = np.all(np.ptp(blk, axis=0) < eps) if blk.size else True
        uniform = tl.I.shape[1] < 2 or np.ptp(tl.I[j]) < eps
        good[j] = steady and uniform
    if not good[-1]:
        return None
    bad = np.flatnonzero(~good)
    start = 0 if bad.size == 0 else bad[-1] + 1
    return float(t[start])
