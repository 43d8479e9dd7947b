"""Plot rate-region curves from a region.csv file (needs matplotlib).

Usage: python3 scripts/plot_region.py out/fig1/region.csv [--save region.png]
"""

import argparse
from collections import defaultdict

from ehmac.results import read_region_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("csv")
    ap.add_argument("--save", help="write the figure here instead of showing it")
    args = ap.parse_args()

    import matplotlib.pyplot as plt

    curves = defaultdict(list)
    for row in read_region_csv(args.csv):
        curves[(row.mode.value, row.m_slots)].append(row.rates)
    fig, ax = plt.subplots(figsize=(6, 5))
    for (mode, m), pts in sorted(curves.items()):
        r1, r2 = zip(*pts)
        ax.plot(r1, r2, "-" if mode == "FDT" else "--", marker=".", label=f"{mode}, M={m:g}")
    ax.set_xlabel("R1 (bits/symbol)")
    ax.set_ylabel("R2 (bits/symbol)")
    ax.legend()
    ax.grid(alpha=0.3)
    if args.save:
        fig.savefig(args.save, dpi=150, bbox_inches="tight")
    else:
        plt.show()


if __name__ == "__main__":
    main()
