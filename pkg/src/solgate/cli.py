"""Command-line entry point: ``solgate <command> [flags]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time

import numpy as np

from . import analysis, experiments
from .config import RunConfig, dump_config, load_config
from .dynamics import integrate_ode
from .model import GateSpec, State
from .serialization import (atomic_write, format_table, make_report, write_report,
                            write_trajectory)

log = logging.getLogger("solgate")

COMMANDS = ("simulate", "noise", "critical", "instanton", "sweep-memory", "temperature",
            "calibrate")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML run configuration")
    common.add_argument("--seed", type=int)
    common.add_argument("--gate", choices=["AND", "OR", "and", "or"])
    common.add_argument("--gamma", type=float, action="append",
                        help="noise intensity in 1/s (repeatable)")
    common.add_argument("--ratio", type=float, help="memory ratio R_on/R_off")
    common.add_argument("--delta-v2", type=float, help="perturbation of v2 in volts")
    common.add_argument("--t-end", type=float, help="integration horizon in seconds")
    common.add_argument("--tol", type=float, help="relative integration tolerance")
    common.add_argument("--method", choices=["rk45", "rosenbrock"])
    common.add_argument("--runs", type=int, help="noise ensemble size")
    common.add_argument("--n-seeds", type=int, help="critical-point search seeds")
    common.add_argument("--out", help="output directory")
    common.add_argument("--tag", default=None, help="output file stem")
    common.add_argument("--force", action="store_true", help="overwrite existing files")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="solgate", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    changes = {"seed": args.seed, "gate": args.gate and args.gate.upper(), "ratio": args.ratio,
               "delta_v2": args.delta_v2, "t_end": args.t_end, "rel_tol": args.tol,
               "integrator": args.method, "n_seeds": args.n_seeds, "output_dir": args.out}
    if args.gamma:
        changes["gammas"] = args.gamma
    if args.runs is not None:
        changes["noise"] = {**cfg.noise, "n_runs": args.runs}
    return cfg.updated(**changes)


def _initial_state(cfg: RunConfig, gate: GateSpec) -> State:
    if cfg.initial == "reference-point":
        state = experiments.initial_state(gate, cfg.delta_v2, cfg.polarity)
    else:
        state = State.from_vector(gate.pinned_v1, np.asarray(cfg.initial, dtype=float))
    if cfg.v1 is not None:
        state = State(cfg.v1, state.v2, state.v3, state.x)
    return state


class Outputs:
    def __init__(self, cfg: RunConfig, stem: str, force: bool):
        self.dir = cfg.resolved_output_dir()
        self.stem, self.force = stem, force
        self.files: list[str] = []

    def path(self, suffix: str):
        return self.dir / f"{self.stem}{suffix}"

    def trajectory(self, traj, suffix=".csv"):
        self.files.append(str(write_trajectory(traj, self.path(suffix), self.force)))

    def table(self, header, rows, suffix=".csv"):
        self.files.append(str(atomic_write(self.path(suffix), format_table(header, rows),
                                           self.force)))

    def report(self, doc, suffix=".json"):
        doc["outputs"] = self.files + [str(self.path(suffix))]
        self.files.append(str(write_report(doc, self.path(suffix), self.force)))


def cmd_simulate(cfg, out):
    gate = GateSpec.make(cfg.gate)
    params = cfg.circuit_params()
    traj = integrate_ode(gate, params, _initial_state(cfg, gate), cfg.t_end, rel_tol=cfg.rel_tol,
                         abs_tol=cfg.abs_tol, method=cfg.integrator, record_dt=cfg.record_dt)
    out.trajectory(traj)
    return {"final_state": traj.states[-1], "metadata": traj.metadata}


def cmd_instanton(cfg, out):
    gate = GateSpec.make(cfg.gate)
    res = experiments.run_instanton_scenario(
        gate, cfg.delta_v2, cfg.circuit_params(), polarity=cfg.polarity, t_end=cfg.t_end,
        method=cfg.integrator, rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
        record_dt=cfg.record_dt)
    out.trajectory(res.trajectory)
    points = [res.start] + ([res.end] if res.end is not None else [])
    return {"critical_points": points,
            "instantons": [res.instanton] if res.instanton is not None else [],
            "scenario": res.report}


def cmd_critical(cfg, out):
    gate = GateSpec.make(cfg.gate)
    params = cfg.circuit_params()
    v1 = gate.pinned_v1 if cfg.v1 is None else cfg.v1
    points = analysis.enumerate_critical_points(gate, params, cfg.n_seeds, cfg.seed, v1=v1)
    return {"critical_points": points,
            "summary": {"found": len(points),
                        "consistent": sum(cp.consistent for cp in points),
                        "spurious": sum(not cp.consistent for cp in points),
                        "signatures": sorted({cp.signature for cp in points})}}


def cmd_noise(cfg, out):
    params = cfg.circuit_params()
    results = []
    for gamma in cfg.gammas:
        stats = experiments.run_noise_ensemble(
            gamma, cfg.noise["n_runs"], cfg.seed, params, dt=cfg.noise["dt"],
            record_dt=cfg.record_dt, delta_v2=cfg.delta_v2, project=cfg.noise["project"])
        rows = np.column_stack([stats.times, stats.mean, stats.std])
        out.table("t,mean_v2,mean_v3,std_v2,std_v3", rows, suffix=f"_gamma{gamma:g}.csv")
        results.append({"gamma": gamma, "n_runs": stats.n_runs, "horizon": stats.horizon,
                        "final_mean": stats.final_mean, "peak_std_time": stats.peak_std_time,
                        "clamp_fraction": stats.clamp_fraction})
    return {"tables": {"noise": results}}


def cmd_sweep(cfg, out):
    rows = experiments.sweep_memory_ratio(cfg.ratios, cfg.circuit_params(),
                                          resistance_mode=cfg.resistance_mode)
    ok = [(r.ratio, r.equilibrium_time) for r in rows if r.status == "ok"]
    out.table("ratio,equilibrium_time", ok)
    failed = [r for r in rows if r.status != "ok"]
    return {"tables": {"sweep": rows}, "failed_ratios": [r.ratio for r in failed]}


def cmd_temperature(cfg, out):
    rows = [(g, experiments.gamma_to_temperature(g)) for g in cfg.gammas]
    for g, t in rows:
        print(f"gamma = {g:g} 1/s -> T = {t:.1f} K")
    out.table("gamma,temperature", rows)
    return {"tables": {"temperature": rows}}


def cmd_calibrate(cfg, out):
    entries: list = []
    survivors = analysis.calibrate_orientations(cfg.circuit_params(), report=entries)
    return {"survivors": survivors, "candidates": entries}


HANDLERS = {"simulate": cmd_simulate, "noise": cmd_noise, "critical": cmd_critical,
            "instanton": cmd_instanton, "sweep-memory": cmd_sweep,
            "temperature": cmd_temperature, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        out = Outputs(cfg, args.tag or args.command, args.force)
        t0 = time.perf_counter()
        result = HANDLERS[args.command](cfg, out)
        failed = result.pop("failed_ratios", [])
        points = result.pop("critical_points", [])
        instantons = result.pop("instantons", [])
        doc = make_report(cfg.to_dict(), cfg.seed, points, instantons,
                          result.pop("tables", {}), command=args.command,
                          config_yaml=dump_config(cfg),
                          runtime_seconds=time.perf_counter() - t0, **result)
        out.report(doc)
        if failed:
            raise RuntimeError(f"ratios without an equilibrium time: {failed}")
    except Exception as exc:  # every failure becomes a machine-readable block
        log.debug("command failed", exc_info=True)
        block = {"error": {"command": args.command, "type": type(exc).__name__,
                           "message": str(exc)}}
        print(json.dumps(block), file=sys.stderr)
        return 1
    for f in out.files:
        print(f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
