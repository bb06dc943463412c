"""Equilibrium time against the memory ratio on log-log axes."""
import argparse
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--out", default="memory_sweep.png")
    args = ap.parse_args()

    ratio, t_eq = np.loadtxt(Path(args.data) / "memory_sweep.csv", delimiter=",", skiprows=1,
                             unpack=True, ndmin=2)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(ratio, t_eq, "o-")
    ax.set_xlabel("R_on / R_off")
    ax.set_ylabel("equilibrium time [s]")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
