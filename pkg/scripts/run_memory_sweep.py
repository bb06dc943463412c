"""Equilibrium time of the perturbed AND run against R_on / R_off."""
import argparse
import os
from pathlib import Path

from solgate.experiments import SWEEP_RATIOS, sweep_memory_ratio
from solgate.serialization import atomic_write, format_table, make_report, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--ratios", type=float, nargs="+", default=list(SWEEP_RATIOS))
    ap.add_argument("--resistance-mode", default="track", choices=["track", "fixed"])
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    out = Path(args.data)

    rows = sweep_memory_ratio(args.ratios, resistance_mode=args.resistance_mode)
    for r in rows:
        print(f"ratio {r.ratio:g}: {r.status}, t_eq = {r.equilibrium_time}")
    ok = [(r.ratio, r.equilibrium_time) for r in rows if r.status == "ok"]
    atomic_write(out / "memory_sweep.csv", format_table("ratio,equilibrium_time", ok),
                 args.force)
    write_report(make_report({"resistance_mode": args.resistance_mode},
                             tables={"sweep": rows}), out / "memory_sweep.json", args.force)


if __name__ == "__main__":
    main()
