"""Rejection rate of the SDID placebo-variance test under the null factor DGP.

Example: python3 scripts/sdid_size.py --reps 100
"""

import argparse

import numpy as np

from counterfact import sdid
from counterfact.oracle import FactorDgpSpec, simulate_panel


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--reps", type=int, default=100)
    ap.add_argument("--sigma", type=float, default=0.1)
    ap.add_argument("--level", type=float, default=0.05)
    a = ap.parse_args()
    p_values = []
    for rep in range(a.reps):
        p = simulate_panel(FactorDgpSpec(J=15, T=30, T0=19, r=2, noise_sigma=a.sigma, seed=rep))
        p_values.append(sdid.estimate_att(p).p_value)
    p_values = np.array(p_values)
    print(f"rejection rate at {a.level}: {np.mean(p_values < a.level):.3f} over {a.reps} reps")


if __name__ == "__main__":
    main()
