"""Ensemble mean and one-sigma band of v2, v3 for each noise intensity."""
import argparse
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from solgate.experiments import gamma_to_temperature  # noqa: E402
from solgate.serialization import read_trajectory  # noqa: E402


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--out", default="noise.png")
    args = ap.parse_args()
    data = Path(args.data)

    files = sorted(data.glob("noise_gamma*.csv"),
                   key=lambda p: float(p.stem.removeprefix("noise_gamma")))
    ref = read_trajectory(data / "noise_reference.csv")
    fig, axes = plt.subplots(1, len(files), figsize=(4 * len(files), 3.5), sharey=True,
                             squeeze=False)
    for ax, path in zip(axes[0], files):
        gamma = float(path.stem.removeprefix("noise_gamma"))
        t, m2, m3, s2, s3 = np.loadtxt(path, delimiter=",", skiprows=1, unpack=True)[:, 1:]
        for m, s, name, c in ((m2, s2, "v2", "C0"), (m3, s3, "v3", "C1")):
            ax.plot(t, m, color=c, label=f"<{name}>")
            ax.fill_between(t, m - s, m + s, color=c, alpha=0.3)
        ax.plot(ref.times[1:], ref.v2[1:], "k:", lw=1, label="noiseless")
        ax.set_title(f"G = {gamma:g} 1/s ({gamma_to_temperature(gamma):.0f} K)")
        ax.set_xscale("log")
        ax.set_xlabel("t [s]")
    axes[0, 0].set_ylabel("voltage [V]")
    axes[0, 0].legend()
    fig.tight_layout()
    fig.savefig(args.out, dpi=150)


if __name__ == "__main__":
    main()
