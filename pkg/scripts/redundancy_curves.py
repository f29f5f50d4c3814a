"""Input BER vs estimated output BER for a sweep of RS correction capabilities.

CSV always; a log-log plot as well when matplotlib happens to be installed.
"""
import argparse
import os

from link_enhancer.analysis import CONVERSIONS, DEFAULT_BER_GRID, DEFAULT_T_SWEEP, curves_csv, redundancy_curves


def plot(rows, path):
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        print("matplotlib not installed, skipping plot")
        return
    fig, ax = plt.subplots(figsize=(6, 4.5))
    for t in sorted({r.t for r in rows}):
        pts = [(r.input_ber, max(r.output_estimate, 1e-30)) for r in rows if r.t == t]
        ax.loglog(*zip(*pts), marker=".", label=f"t={t}")
    ax.invert_xaxis()
    ax.set_xlabel("input BER")
    ax.set_ylabel("output BER")
    ax.set_ylim(1e-20, 1)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    print(f"wrote {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--t", type=int, nargs="+", default=list(DEFAULT_T_SWEEP))
    ap.add_argument("--conversion", choices=CONVERSIONS, default="inverse")
    ap.add_argument("--output", default=os.environ.get("LINK_ENHANCER_OUTPUT", "results/redundancy_curves.csv"))
    ap.add_argument("--plot", action="store_true")
    args = ap.parse_args()
    rows = redundancy_curves(list(DEFAULT_BER_GRID), args.t, conversion=args.conversion)
    os.makedirs(os.path.dirname(args.output) or ".", exist_ok=True)
    with open(args.output, "w") as fh:
        fh.write(curves_csv(rows))
    print(f"wrote {args.output} ({len(rows)} rows)")
    if args.plot:
        plot(rows, os.path.splitext(args.output)[0] + ".png")


if __name__ == "__main__":
    main()
