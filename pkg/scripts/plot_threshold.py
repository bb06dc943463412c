"""v3 against the logic interval, with x4 on a twin axis."""
import argparse
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--out", default="threshold.png")
    args = ap.parse_args()
    data = Path(args.data)

    t, v3, x4 = np.loadtxt(data / "threshold.csv", delimiter=",", skiprows=1, unpack=True)
    info = json.loads((data / "threshold.json").read_text())["tables"]["threshold"]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.plot(t, v3, color="C0", label="v3")
    ax.axhspan(-1, 1, color="0.9", zorder=0)
    ax.set_xlabel("t [s]")
    ax.set_ylabel("v3 [V]")
    twin = ax.twinx()
    twin.plot(t, x4, color="C3", label="x4")
    twin.set_ylabel("x4")
    for key, style in (("t_exit", "--"), ("t_move", ":")):
        if info[key] is not None:
            ax.axvline(info[key], color="k", ls=style, label=key)
    ax.legend(loc="upper left")
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
