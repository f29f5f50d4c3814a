"""Measured CER with and without the enhancer across channel BERs, next to theory."""
import argparse
import os

from link_enhancer.analysis import predicted_output_cer, theoretical_cer
from link_enhancer.channel import ChannelConfig
from link_enhancer.measurement import TrafficConfig
from link_enhancer.pipeline import run_link


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ber", type=float, nargs="+", default=[3e-3, 2e-3, 1e-3, 5e-4, 1e-4])
    ap.add_argument("--cells", type=int, default=200_000)
    ap.add_argument("--seed", type=int, default=int(os.environ.get("LINK_ENHANCER_SEED", 1)))
    ap.add_argument("--output", default=os.environ.get("LINK_ENHANCER_OUTPUT", "results/baseline_vs_enhanced.csv"))
    args = ap.parse_args()

    traffic = TrafficConfig(utilization=0.5, cells=args.cells)
    lines = ["ber,baseline_cer,theory_cer,enhanced_cer,enhanced_clr,predicted_cer,output_ber,sync_losses"]
    for p in args.ber:
        base = run_link(traffic, ChannelConfig.bsc(p, args.seed), mode="baseline").metrics
        enh = run_link(traffic, ChannelConfig.bsc(p, args.seed))
        m = enh.metrics
        lines.append(f"{p:.1e},{base.cer:.5g},{theoretical_cer(p):.5g},{m.cer:.4g},{m.clr:.4g},"
                     f"{predicted_output_cer(p):.4g},{enh.coding.output_ber:.4g},{enh.sync_lost}")
        print(lines[-1], flush=True)
    os.makedirs(os.path.dirname(args.output) or ".", exist_ok=True)
    with open(args.output, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.output}")


if __name__ == "__main__":
    main()
