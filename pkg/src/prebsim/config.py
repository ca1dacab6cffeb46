"""TOML experiment configuration with validation and round-tripping."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib
import tomli_w

from prebsim.chainmap import required_bath_size
from prebsim.freefermion import SystemSpec, half_filled
from prebsim.liouville import MAX_MODES
from prebsim.spectral import SpectralDensity, SpectralError, ThermalParams, density_from_dict

MODES = ("continuous", "preb")
BACKENDS = ("freefermion", "tebd", "dense")
DENSITY_KEYS = {
    "semicircle": ("Gamma", "g_B"),
    "ohmic": ("coupling", "cutoff"),
    "tabulated": ("csv", "omega", "values"),
}


class ConfigError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class SystemSection:
    L_S: int
    V: float = 0.0
    h: float = 0.0
    initial: str | tuple = "half-filled"

    def spec(self) -> SystemSpec:
        return SystemSpec(self.L_S, self.V, self.h)

    def pattern(self):
        if self.initial == "half-filled":
            return half_filled(self.L_S)
        if self.initial == "half-filled-shifted":
            return half_filled(self.L_S, phase=1)
        return tuple(self.initial)


@dataclass(frozen=True)
class BathSection:
    kind: str
    params: tuple  # sorted (key, value) pairs of the density parameters
    beta: float
    mu: float = 0.0
    statistics: str = "fermi"

    def density(self, base=None) -> SpectralDensity:
        return density_from_dict({"kind": self.kind, **dict(self.params)}, base)

    def thermal(self) -> ThermalParams:
        return ThermalParams(self.beta, self.mu, self.statistics)


@dataclass(frozen=True)
class RunSection:
    mode: str = "preb"
    backend: str = "freefermion"
    tau: float = 6.0
    n_steps: int = 1
    t1: tuple = (0.0,)
    dt: float = 0.1
    chi: int = 128
    svd_cutoff: float = 1e-10
    t_max: float = 10.0
    threshold: float = 0.05
    tolerance: float = 1e-2
    L_B: int | None = None
    bath_order: str = "energy"


@dataclass(frozen=True)
class OutputSection:
    directory: str = "out"
    stride: float | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    system: SystemSection
    baths: tuple
    run: RunSection = field(default_factory=RunSection)
    output: OutputSection = field(default_factory=OutputSection)
    base: str | None = field(default=None, compare=False)

    def densities(self):
        return tuple(b.density(self.base) for b in self.baths)

    def thermals(self):
        return tuple(b.thermal() for b in self.baths)

    def bath_sizes(self, t: float) -> tuple:
        if self.run.L_B is not None:
            return (self.run.L_B, self.run.L_B)
        return tuple(required_bath_size(t, J.asymptotic_hopping) for J in self.densities())

    def evolution_time(self) -> float:
        return self.run.tau if self.run.mode == "preb" else self.run.t_max

    def to_dict(self) -> dict:
        out = {
            "system": {k: v for k, v in asdict(self.system).items()},
            "baths": [],
            "run": {k: v for k, v in asdict(self.run).items() if v is not None},
            "output": {k: v for k, v in asdict(self.output).items() if v is not None},
        }
        if isinstance(self.system.initial, tuple):
            out["system"]["initial"] = list(self.system.initial)
        out["run"]["t1"] = list(self.run.t1)
        for b in self.baths:
            d = {"kind": b.kind, **{k: (list(v) if isinstance(v, tuple) else v) for k, v in b.params}}
            d.update({"beta": b.beta, "mu": b.mu, "statistics": b.statistics})
            out["baths"].append(d)
        return out

    def dumps(self) -> str:
        return tomli_w.dumps(self.to_dict())


def _take(table: dict, allowed, path: str) -> dict:
    if not isinstance(table, dict):
        raise ConfigError(path, "expected a table")
    unknown = sorted(set(table) - set(allowed))
    if unknown:
        raise ConfigError(f"{path}.{unknown[0]}", "unknown key")
    return table


def _number(table, key, path, kind=float, default=None, required=False):
    if key not in table:
        if required:
            raise ConfigError(f"{path}.{key}", "missing required key")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ConfigError(f"{path}.{key}", f"expected a number, got {val!r}")
    if kind is int:
        if isinstance(val, float) and not val.is_integer():
            raise ConfigError(f"{path}.{key}", f"expected an integer, got {val!r}")
        return int(val)
    return float(val)


def _is_multiple(x: float, dt: float) -> bool:
    k = round(x / dt)
    return abs(k * dt - x) <= 1e-9 * max(1.0, abs(x))


def config_from_dict(raw: dict, base=None) -> ExperimentConfig:
    _take(raw, ("system", "baths", "run", "output"), "config")
    if "system" not in raw:
        raise ConfigError("system", "missing section")
    s = _take(raw["system"], [f.name for f in fields(SystemSection)], "system")
    L_S = _number(s, "L_S", "system", int, required=True)
    if L_S < 2:
        raise ConfigError("system.L_S", "need at least two sites")
    initial = s.get("initial", "half-filled")
    if isinstance(initial, list):
        if len(initial) != L_S or any(not 0 <= float(x) <= 1 for x in initial):
            raise ConfigError("system.initial", "explicit pattern needs L_S occupations in [0, 1]")
        initial = tuple(float(x) for x in initial)
    elif initial not in ("half-filled", "half-filled-shifted"):
        raise ConfigError("system.initial", f"unknown initial state {initial!r}")
    system = SystemSection(L_S, _number(s, "V", "system", default=0.0), _number(s, "h", "system", default=0.0), initial)

    blist = raw.get("baths")
    if not isinstance(blist, list) or len(blist) != 2:
        raise ConfigError("baths", "exactly two [[baths]] tables are required")
    baths = []
    for i, b in enumerate(blist):
        path = f"baths[{i}]"
        kind = b.get("kind") if isinstance(b, dict) else None
        if kind not in DENSITY_KEYS:
            raise ConfigError(f"{path}.kind", f"unknown spectral density kind {kind!r}")
        _take(b, ("kind", "beta", "mu", "statistics") + DENSITY_KEYS[kind], path)
        params = tuple(
            sorted((k, tuple(v) if isinstance(v, list) else v) for k, v in b.items() if k in DENSITY_KEYS[kind])
        )
        stats = b.get("statistics", "fermi")
        if stats not in ("fermi", "bose"):
            raise ConfigError(f"{path}.statistics", "must be 'fermi' or 'bose'")
        bath = BathSection(
            kind, params, _number(b, "beta", path, required=True), _number(b, "mu", path, default=0.0), stats
        )
        try:
            J = bath.density(base)
            tp = bath.thermal()
            tp.check_support(J)
        except (SpectralError, KeyError, OSError, ValueError) as exc:
            raise ConfigError(path, str(exc)) from None
        baths.append(bath)

    r = _take(raw.get("run", {}), [f.name for f in fields(RunSection)], "run")
    d = RunSection()
    t1 = r.get("t1", list(d.t1))
    if not isinstance(t1, list):
        t1 = [t1]
    run = RunSection(
        mode=r.get("mode", d.mode),
        backend=r.get("backend", d.backend),
        tau=_number(r, "tau", "run", default=d.tau),
        n_steps=_number(r, "n_steps", "run", int, default=d.n_steps),
        t1=tuple(float(x) for x in t1),
        dt=_number(r, "dt", "run", default=d.dt),
        chi=_number(r, "chi", "run", int, default=d.chi),
        svd_cutoff=_number(r, "svd_cutoff", "run", default=d.svd_cutoff),
        t_max=_number(r, "t_max", "run", default=d.t_max),
        threshold=_number(r, "threshold", "run", default=d.threshold),
        tolerance=_number(r, "tolerance", "run", default=d.tolerance),
        L_B=_number(r, "L_B", "run", int, default=None),
        bath_order=r.get("bath_order", d.bath_order),
    )
    o = _take(raw.get("output", {}), [f.name for f in fields(OutputSection)], "output")
    output = OutputSection(str(o.get("directory", "out")), _number(o, "stride", "output", default=None))
    cfg = ExperimentConfig(system, tuple(baths), run, output, None if base is None else str(base))
    validate(cfg)
    return cfg


def validate(cfg: ExperimentConfig) -> None:
    run = cfg.run
    if run.mode not in MODES:
        raise ConfigError("run.mode", f"must be one of {MODES}")
    if run.backend not in BACKENDS:
        raise ConfigError("run.backend", f"must be one of {BACKENDS}")
    if run.backend == "freefermion" and cfg.system.V != 0:
        raise ConfigError("system.V", "interacting system requires tebd or dense backend")
    for key in ("tau", "dt", "t_max", "tolerance"):
        if not getattr(run, key) > 0:
            raise ConfigError(f"run.{key}", "must be positive")
    if run.n_steps < 0:
        raise ConfigError("run.n_steps", "must be non-negative")
    if not 0 < run.threshold < 1:
        raise ConfigError("run.threshold", "must lie in (0, 1)")
    if run.chi < 1:
        raise ConfigError("run.chi", "must be at least 1")
    if run.svd_cutoff < 0:
        raise ConfigError("run.svd_cutoff", "must be non-negative")
    if run.L_B is not None and run.L_B < 1:
        raise ConfigError("run.L_B", "must be at least 1")
    if run.bath_order not in ("energy", "reverse"):
        raise ConfigError("run.bath_order", "must be 'energy' or 'reverse'")
    for i, t1 in enumerate(run.t1):
        if not 0 <= t1 < run.tau:
            raise ConfigError(f"run.t1[{i}]", f"offset must lie in [0, tau={run.tau})")
    if run.backend == "tebd":
        if not _is_multiple(run.tau, run.dt):
            raise ConfigError("run.tau", f"tau={run.tau} is not a multiple of dt={run.dt}")
        for i, t1 in enumerate(run.t1):
            if not _is_multiple(t1, run.dt):
                raise ConfigError(f"run.t1[{i}]", f"t1={t1} is not a multiple of dt={run.dt}")
        if run.mode == "continuous" and not _is_multiple(run.t_max, run.dt):
            raise ConfigError("run.t_max", f"t_max={run.t_max} is not a multiple of dt={run.dt}")
    if run.backend == "dense":
        sizes = cfg.bath_sizes(cfg.evolution_time())
        M = cfg.system.L_S + sum(sizes)
        if M > MAX_MODES:
            raise ConfigError("run.backend", f"dense backend needs L_S + 2 L_B <= {MAX_MODES}, got {M}")
    stride = cfg.output.stride
    if stride is not None and not stride > 0:
        raise ConfigError("output.stride", "must be positive")
    if not math.isfinite(run.tau):
        raise ConfigError("run.tau", "must be finite")


def parse_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(str(path), "file not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"malformed TOML: {exc}") from None
    return config_from_dict(raw, base=path.parent)


def loads(text: str, base=None) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("<string>", f"malformed TOML: {exc}") from None
    return config_from_dict(raw, base)
