"""Overlap and outlier position against spike strength, theory vs simulation.

    python3 scripts/overlap_sweep.py --N 1000 --trials 5 --out sweep.csv

Columns: theta, rho, tau, mean top eigenvalue, mean overlap.  Below the
threshold the theory columns are empty and the top eigenvalue sticks to the
bulk edge.
"""

import argparse
import csv
import sys

import numpy as np

from ipn.ensemble import EnsembleConfig, assemble_m, build_a, sample_x
from ipn.equilibrium import ModelParams
from ipn.measure import AtomicMeasure
from ipn.spectra import eig_h, spike_projection
from ipn.spikes import classify


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sigma", type=float, default=1.0)
    ap.add_argument("--c", type=float, default=0.5)
    ap.add_argument("--N", type=int, default=1000)
    ap.add_argument("--trials", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--thetas", default="0.25,0.5,0.75,1,1.5,2,3,4,6")
    ap.add_argument("--out", help="CSV path (default stdout)")
    args = ap.parse_args(argv)

    rows = []
    for theta in (float(t) for t in args.thetas.split(",")):
        p = ModelParams(args.sigma, args.c, AtomicMeasure.dirac(0.0), ((theta, 1),))
        (pred,) = classify(p)
        cfg = EnsembleConfig(args.N, args.c, seed=args.seed)
        a = build_a(p, cfg)
        tops, ovs = [], []
        for t in range(args.trials):
            vals, vecs = eig_h(assemble_m(a, sample_x(cfg, trial=t), p.sigma))
            tops.append(vals[0])
            ovs.append(spike_projection(vecs, a, 0)[0])
        rows.append([theta, pred.rho, pred.tau, float(np.mean(tops)), float(np.mean(ovs))])
        print(f"theta={theta:g} done", file=sys.stderr)

    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    w = csv.writer(fh)
    w.writerow(["theta", "rho", "tau", "mean_lambda1", "mean_overlap"])
    for r in rows:
        w.writerow(["" if v is None else f"{v:.6g}" for v in r])
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
