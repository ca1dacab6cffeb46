"""``preb-sim`` command line.

Exit codes: 0 ok, 1 configuration error, 2 backend error, 3 comparison failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
import traceback
from pathlib import Path

import numpy as np

from prebsim import __version__
from prebsim import driver as dr
from prebsim import negf
from prebsim.chainmap import ChainCache, chain_coefficients, star_basis
from prebsim.config import ConfigError, ExperimentConfig, parse_config
from prebsim.spectral import bath_correlations, memory_time

EXIT_OK, EXIT_CONFIG, EXIT_BACKEND, EXIT_COMPARE = 0, 1, 2, 3

log = logging.getLogger("prebsim")


def setup_from(cfg: ExperimentConfig) -> dr.OpenSetup:
    return dr.OpenSetup.create(cfg.system.spec(), cfg.densities(), cfg.thermals(), cfg.system.pattern())


def backend_factory(cfg: ExperimentConfig, setup: dr.OpenSetup, cache=None):
    run = cfg.run

    def make(tau: float):
        sizes = cfg.bath_sizes(tau)
        if run.backend == "freefermion":
            return dr.FreeFermionBackend(setup, sizes, cache)
        if run.backend == "tebd":
            return dr.TebdBackend(setup, sizes, run.dt, run.chi, run.svd_cutoff, run.bath_order, cache)
        return dr.DenseBackend(setup, sizes, cache)

    return make


def _sample_times(cfg: ExperimentConfig) -> np.ndarray:
    stride = cfg.output.stride or cfg.run.tau
    n = int(math.floor(cfg.run.t_max / stride + 1e-9))
    times = np.arange(n + 1) * stride
    if times[-1] < cfg.run.t_max - 1e-9:
        times = np.append(times, cfg.run.t_max)
    return times


def run_continuous(cfg: ExperimentConfig, setup: dr.OpenSetup, cache=None) -> dr.Timeline:
    times = _sample_times(cfg)
    if cfg.run.backend == "freefermion":
        sizes = cfg.bath_sizes(cfg.run.t_max)
        back = dr.FreeFermionBackend(setup, sizes, cache)
        blocks = back.evo.run(back.initial(), times)
        recs = [(float(t), back.observables(b), True) for t, b in zip(times, blocks)]
        return dr.Timeline.from_records(recs, 0.0, {"backend": "freefermion", "mode": "continuous"})
    # a single segment without refreshing is one PReB cycle of length t_max
    back = backend_factory(cfg, setup, cache)(cfg.run.t_max)
    tl = dr.run_preb(back, dr.PrebSchedule(cfg.run.t_max, 1, 0.0, cfg.run.dt, cfg.output.stride))
    tl.meta["mode"] = "continuous"
    return tl


def run_experiment(cfg: ExperimentConfig) -> dr.Timeline:
    setup = setup_from(cfg)
    cache = ChainCache(Path(cfg.output.directory) / ".chains")
    if cfg.run.mode == "continuous":
        return run_continuous(cfg, setup, cache)
    back = backend_factory(cfg, setup, cache)(cfg.run.tau)
    if len(cfg.run.t1) == 1:
        sched = dr.PrebSchedule(cfg.run.tau, cfg.run.n_steps, cfg.run.t1[0], cfg.run.dt, cfg.output.stride)
        return dr.run_preb(back, sched)
    return dr.reconstruct_timeline(
        back, cfg.run.tau, cfg.run.t1, cfg.run.n_steps, cfg.run.tolerance, cfg.run.dt, cfg.output.stride
    )


def _outdir(cfg, args) -> Path:
    return Path(args.out) if getattr(args, "out", None) else Path(cfg.output.directory)


def _check_overwrite(paths, force: bool):
    existing = [str(p) for p in paths if p.exists()]
    if existing and not force:
        raise ConfigError("output", f"refusing to overwrite {', '.join(existing)} (use --force)")


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    return str(o)


def _write_meta(path: Path, cfg: ExperimentConfig, wall: float, extra: dict):
    meta = {"version": __version__, "config": cfg.to_dict(), "wall_time": wall, **extra}
    path.write_text(json.dumps(meta, indent=1, default=_json_default))


def cmd_run(args, reconstruct=False) -> int:
    cfg = parse_config(args.config)
    if reconstruct:
        if args.t1:
            cfg = _replace_run(cfg, t1=tuple(float(x) for x in args.t1))
        elif len(cfg.run.t1) < 2:
            tau = cfg.run.tau
            step = cfg.run.dt if cfg.run.backend == "tebd" else 1.0
            n = max(1, int(round(tau / max(step, tau / 64))))
            cfg = _replace_run(cfg, t1=tuple(round(k * tau / n, 9) for k in range(n)))
    out = _outdir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    files = [out / "timeline.csv", out / "meta.json"]
    _check_overwrite(files, args.force)
    t0 = time.perf_counter()
    try:
        tl = run_experiment(cfg)
    except Exception as exc:  # noqa: BLE001 - reported through meta.json and the exit code
        _write_meta(files[1], cfg, time.perf_counter() - t0, {"error": str(exc), "traceback": traceback.format_exc()})
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    tl.to_csv(files[0])
    extra = {"truncation": tl.meta.get("truncation"), "backend": cfg.run.backend, "rows": len(tl)}
    _write_meta(files[1], cfg, time.perf_counter() - t0, extra)
    print(f"wrote {files[0]} ({len(tl)} rows)")
    return EXIT_OK


def _replace_run(cfg, **kw):
    from dataclasses import replace

    from prebsim.config import validate

    new = replace(cfg, run=replace(cfg.run, **kw))
    validate(new)
    return new


def cmd_certify(args) -> int:
    cfg = parse_config(args.config)
    setup = setup_from(cfg)
    out = _outdir(cfg, args)
    out.mkdir(parents=True, exist_ok=True)
    target = out / "convergence.json"
    _check_overwrite([target], args.force)
    tau0 = args.tau0 if args.tau0 is not None else cfg.run.tau
    tol = args.tol if args.tol is not None else cfg.run.tolerance
    horizon = args.horizon if args.horizon is not None else max(cfg.run.t_max, tau0 * 2**args.max_doublings)
    try:
        tau_m = setup.memory_time(cfg.run.threshold)
    except RuntimeError:
        tau_m = None
    try:
        rep = dr.certify_convergence(
            backend_factory(cfg, setup, ChainCache(out / ".chains")), tau0, tol, args.max_doublings, horizon, tau_m, cfg.run.dt
        )
    except Exception as exc:  # noqa: BLE001
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    rep.to_json(target)
    verdict = "converged" if rep.converged else "not converged"
    print(f"{verdict}; deviations: " + ", ".join(f"{a:g}/{b:g}={d:.3e}" for (a, b), d in rep.deviations.items()))
    return EXIT_OK


def cmd_compare(args) -> int:
    ness = negf.ness_from_json(args.ness)
    tl = dr.Timeline.from_csv(args.timeline)
    if len(tl) == 0:
        raise ConfigError(str(args.timeline), "empty timeline")
    tail = tl.t >= tl.t[-1] - args.tail - 1e-12
    n_avg = tl.n[tail].mean(axis=0)
    I_avg = tl.I[tail].mean(axis=0)
    if n_avg.shape != ness["n"].shape:
        raise ConfigError("compare", "timeline and NESS sizes differ")
    dev_n = float(np.max(np.abs(n_avg - ness["n"])))
    dev_I = float(np.max(np.abs(I_avg - ness["I"]))) if I_avg.size else 0.0
    try:
        t_ss = dr.ness_detector(tl, args.tail, args.tol)
    except ValueError:  # tail shorter than the sampling interval
        t_ss = None
    report = {
        "tail": args.tail,
        "rows": int(tail.sum()),
        "max_dev_n": dev_n,
        "max_dev_I": dev_I,
        "tolerance": args.tol,
        "t_ss": t_ss,
        "ok": max(dev_n, dev_I) <= args.tol,
    }
    text = json.dumps(report, indent=1)
    if args.report:
        Path(args.report).write_text(text)
    print(text)
    return EXIT_OK if report["ok"] else EXIT_COMPARE


def cmd_chainmap(args) -> int:
    cfg = parse_config(args.config)
    out = []
    sizes = cfg.bath_sizes(cfg.evolution_time()) if args.L_B is None else (args.L_B, args.L_B)
    for J, tp, L in zip(cfg.densities(), cfg.thermals(), sizes):
        cb = star_basis(chain_coefficients(J, L, tp))
        out.append(cb.to_dict())
    text = json.dumps({"baths": out}, indent=1)
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(text)
    return EXIT_OK


def cmd_memory(args) -> int:
    cfg = parse_config(args.config)
    times = np.arange(int(round(args.t_max / args.step)) + 1) * args.step
    res = []
    for J, tp in zip(cfg.densities(), cfg.thermals()):
        prof = bath_correlations(J, tp, times)
        try:
            tm = memory_time(J, tp, cfg.run.threshold, args.t_max)
        except RuntimeError as exc:
            tm = None
            log.warning("%s", exc)
        res.append(
            {
                "tau_M": tm,
                "t": times.tolist(),
                "a": [[z.real, z.imag] for z in prof.a],
                "b": [[z.real, z.imag] for z in prof.b],
            }
        )
    known = [r["tau_M"] for r in res if r["tau_M"] is not None]
    text = json.dumps({"threshold": cfg.run.threshold, "tau_M": max(known) if known else None, "baths": res})
    if args.output:
        Path(args.output).write_text(text)
    else:
        print(json.dumps({"threshold": cfg.run.threshold, "tau_M": [r["tau_M"] for r in res]}))
    return EXIT_OK


def cmd_ness(args) -> int:
    cfg = parse_config(args.config)
    if cfg.system.V != 0:
        raise ConfigError("system.V", "the NEGF steady state needs V = 0")
    J1, J2 = cfg.densities()
    tp1, tp2 = cfg.thermals()
    try:
        C = negf.ness_correlations(cfg.system.spec().hamiltonian(), J1, J2, tp1, tp2)
    except (negf.NEGFConvergenceError, np.linalg.LinAlgError) as exc:
        print(f"backend error: {exc}", file=sys.stderr)
        return EXIT_BACKEND
    text = negf.ness_to_json(C, args.output, {"L_S": cfg.system.L_S})
    if not args.output:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="preb-sim", description="Periodically refreshed bath simulations")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    for name in ("run", "reconstruct"):
        sp = sub.add_parser(name, help="run the configured experiment" if name == "run" else "merge runs over t1 offsets")
        sp.add_argument("config")
        sp.add_argument("--out", help="output directory (default from config)")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")
        if name == "reconstruct":
            sp.add_argument("--t1", nargs="+", type=float, help="offsets (default: evenly spaced in [0, tau))")

    sp = sub.add_parser("certify", help="tau-doubling convergence check")
    sp.add_argument("config")
    sp.add_argument("--tau0", type=float)
    sp.add_argument("--tol", type=float)
    sp.add_argument("--max-doublings", type=int, default=3)
    sp.add_argument("--horizon", type=float)
    sp.add_argument("--out")
    sp.add_argument("--force", action="store_true")

    sp = sub.add_parser("compare", help="tail-averaged timeline vs a NEGF steady state")
    sp.add_argument("ness")
    sp.add_argument("timeline")
    sp.add_argument("--tail", type=float, default=5.0)
    sp.add_argument("--tol", type=float, default=1e-2)
    sp.add_argument("--report")

    sp = sub.add_parser("chainmap", help="dump chain coefficients and eigenbasis")
    sp.add_argument("config")
    sp.add_argument("--L-B", dest="L_B", type=int)
    sp.add_argument("-o", "--output")

    sp = sub.add_parser("memory", help="dump a(t), b(t) and the memory time")
    sp.add_argument("config")
    sp.add_argument("--t-max", type=float, default=20.0)
    sp.add_argument("--step", type=float, default=0.01)
    sp.add_argument("-o", "--output")

    sp = sub.add_parser("ness", help="NEGF steady state of the non-interacting system")
    sp.add_argument("config")
    sp.add_argument("-o", "--output")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    handlers = {
        "run": cmd_run,
        "reconstruct": lambda a: cmd_run(a, reconstruct=True),
        "certify": cmd_certify,
        "compare": cmd_compare,
        "chainmap": cmd_chainmap,
        "memory": cmd_memory,
        "ness": cmd_ness,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
