"""Leading eigenvalues of the Gauss transfer operator and the invariant density check."""

import argparse
import math

import numpy as np

from rpfcones.function_space import DiscreteFunction
from rpfcones.statistics import gauss_spectrum_oracle
from rpfcones.systems import gauss_stage
from rpfcones.transfer import TransferStage, apply_L0


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--nodes", type=int, default=64)
    ap.add_argument("--N", type=int, default=10_000)
    ap.add_argument("--count", type=int, default=8)
    args = ap.parse_args()

    st = gauss_stage(nodes=args.nodes, N=args.N)
    h = DiscreteFunction(st.grid, 1.0 / (math.log(2.0) * (1.0 + st.grid.coords)))
    err = np.max(np.abs(apply_L0(TransferStage(st), h).values - h.values))
    print(f"|L0 h - h|_inf = {err:.3e}")

    rep = gauss_spectrum_oracle(args.nodes, args.N)
    for k, lam in enumerate(rep.eigenvalues[: args.count]):
        print(f"{k:2d}  {lam.real:+.12f}  {lam.imag:+.1e}")


if __name__ == "__main__":
    main()
