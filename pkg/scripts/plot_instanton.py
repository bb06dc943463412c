"""Terminal voltages and memristor states for each perturbed run."""
import argparse
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from solgate.experiments import PERTURBATION_DELTAS  # noqa: E402
from solgate.serialization import read_trajectory  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--out", default="instanton.png")
    args = ap.parse_args()
    data = Path(args.data)

    fig, axes = plt.subplots(2, 3, figsize=(12, 6), sharex="col", squeeze=False)
    for col, delta in enumerate(PERTURBATION_DELTAS["AND"]):
        traj = read_trajectory(data / f"instanton_and_{delta:g}.csv")
        t = traj.times
        ax_v, ax_x = axes[0, col], axes[1, col]
        ax_v.plot(t, traj.v2, label="v2")
        ax_v.plot(t, traj.v3, label="v3")
        ax_v.set_title(f"AND, dv2 = {delta:g} V")
        for i in range(5):
            ax_x.plot(t, traj.x[:, i], label=f"x{i + 1}")
        ax_x.set_xscale("log")
        ax_x.set_xlabel("t [s]")
    axes[0, 0].set_ylabel("voltage [V]")
    axes[1, 0].set_ylabel("memristor state")
    axes[0, 0].legend()
    axes[1, 0].legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
