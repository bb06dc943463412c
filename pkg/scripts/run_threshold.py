"""v3 leaving the logic interval versus x4 starting to move (AND, 10 mV nudge)."""
import argparse
import os
from pathlib import Path

import numpy as np

from solgate.experiments import run_threshold_scenario
from solgate.serialization import atomic_write, format_table, make_report, write_report


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--delta-v2", type=float, default=1e-2)
    ap.add_argument("--t-end", type=float, default=0.05)
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    out = Path(args.data)

    res = run_threshold_scenario(delta_v2=args.delta_v2, t_end=args.t_end)
    rows = np.column_stack([res.times, res.v3, res.x4])
    atomic_write(out / "threshold.csv", format_table("t,v3,x4", rows), args.force)
    write_report(make_report(tables={"threshold": res.report}), out / "threshold.json",
                 args.force)
    print(res.report)


if __name__ == "__main__":
    main()
