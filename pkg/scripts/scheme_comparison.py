#!/usr/bin/env python3
"""Closed-form scheme comparison.

Writes difference_map.csv (ASH minus TGF efficiency over the yield plane),
rate_curves.csv (single-photon rate against exciton lifetime) and
crossovers.json (lifetimes below which TIMED or TGF overtake ASH).
"""

import argparse
import csv
import json
from dataclasses import replace
from pathlib import Path

import numpy as np

from hsps import budget, presets


def write_csv(path, rows):
    with open(path, "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=40, help="grid points per yield axis")
    ap.add_argument("--alpha", type=float, default=1.0)
    ap.add_argument("--out", default="comparison")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    grid = np.linspace(1.0 / args.n, 1.0, args.n)
    dmap = budget.scheme_difference_map(grid, grid, alpha=args.alpha)
    write_csv(out / "difference_map.csv", dmap.rows())

    template = replace(presets.model_system().emitter, alpha=0.72)
    curves = budget.rate_vs_lifetime_curve(template, np.geomspace(0.05, 10, 200))
    write_csv(out / "rate_curves.csv", curves.rows())
    (out / "crossovers.json").write_text(json.dumps(curves.crossovers_ns, indent=1))
    print(f"unreachable TGF cells: {int(dmap.unreachable.sum())} of {dmap.unreachable.size}")
    for k, v in curves.crossovers_ns.items():
        print(f"{k}: {'none' if v is None else f'{v:.3f} ns'}")


if __name__ == "__main__":
    main()
