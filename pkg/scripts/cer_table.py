"""Raw-link cell error ratio for a list of bit error rates (closed form vs binomial sum)."""
import argparse

from link_enhancer.analysis import cer_binomial_sum, theoretical_cer


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ber", type=float, nargs="+", default=[1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8])
    args = ap.parse_args()
    print("ber,cer_closed_form,cer_binomial_sum")
    for p in args.ber:
        print(f"{p:.1e},{theoretical_cer(p):.8g},{cer_binomial_sum(p):.8g}")


if __name__ == "__main__":
    main()
