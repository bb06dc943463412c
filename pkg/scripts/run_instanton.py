"""Perturbed AND and OR runs from the reference critical point.

Writes one trajectory CSV per (gate, delta) and a JSON summary into the data
directory (``--data`` or ``$SOLGATE_OUTPUT_DIR``).
"""
import argparse
import os
from pathlib import Path

from solgate.experiments import PERTURBATION_DELTAS, run_instanton_scenario
from solgate.model import GateSpec
from solgate.serialization import make_report, write_report, write_trajectory


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--data", default=os.environ.get("SOLGATE_OUTPUT_DIR", "data"))
    ap.add_argument("--method", default="rosenbrock", choices=["rk45", "rosenbrock"])
    ap.add_argument("--force", action="store_true")
    args = ap.parse_args()
    out = Path(args.data)

    instantons, scenarios = [], []
    for kind, deltas in PERTURBATION_DELTAS.items():
        gate = GateSpec.make(kind)
        for delta in deltas:
            # tight settling so the final states of all perturbations can be compared
            res = run_instanton_scenario(gate, delta, method=args.method, settle_tol=1e-9)
            name = f"instanton_{kind.lower()}_{delta:g}.csv"
            write_trajectory(res.trajectory, out / name, args.force)
            if res.instanton is not None:
                instantons.append(res.instanton)
            scenarios.append({"gate": kind, "delta_v2": delta, "file": name, **res.report})
            print(f"{kind} delta={delta:g}: final v = {res.trajectory.states[-1, :2]}, "
                  f"t_end = {res.trajectory.times[-1]:g} s")
    doc = make_report({"method": args.method}, None, instantons=instantons,
                      scenarios=scenarios)
    write_report(doc, out / "instanton.json", args.force)


if __name__ == "__main__":
    main()
