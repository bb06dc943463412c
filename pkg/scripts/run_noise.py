"""Noisy AND ensembles: mean and spread of v2, v3 for each noise intensity.

One CSV per gamma with columns ``t,mean_v2,mean_v3,std_v2,std_v3``, plus
the noiseless reference trajectory for overlay.
"""
import argparse
import os
from pathlib import Path

import numpy as np

from solgate.experiments import (NOISE_GAMMAS, equilibrium_scenario, gamma_to_temperature,
                                 run_noise_ensemble)
from solgate.model import CircuitParams
from solgate.serialization import (atomic_write, format_table, make_report, write_report,
                                   write_trajectory)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--gamma", type=float, nargs="+", default=list(NOISE_GAMMAS))
    ap.add_argument("--runs", type=int, default=100)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--dt", type=float, default=1e-6)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    out = Path(args.data)

    params = CircuitParams()
    horizon, ref = equilibrium_scenario(params, record_dt=1e-4)
    write_trajectory(ref, out / "noise_reference.csv", args.force)
    summary = []
    for gamma in args.gamma:
        stats = run_noise_ensemble(gamma, args.runs, args.seed, params, dt=args.dt,
                                   horizon=horizon)
        rows = np.column_stack([stats.times, stats.mean, stats.std])
        atomic_write(out / f"noise_gamma{gamma:g}.csv",
                     format_table("t,mean_v2,mean_v3,std_v2,std_v3", rows), args.force)
        summary.append({"gamma": gamma, "temperature": gamma_to_temperature(gamma),
                        "final_mean": stats.final_mean, "peak_std_time": stats.peak_std_time,
                        "clamp_fraction": stats.clamp_fraction})
        print(summary[-1])
    write_report(make_report({"runs": args.runs, "dt": args.dt, "horizon": horizon},
                             args.seed, tables={"noise": summary}),
                 out / "noise.json", args.force)


if __name__ == "__main__":
    main()
