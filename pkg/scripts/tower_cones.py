"""Birkhoff contraction and the complex-cone radius on a geometric-tails tower."""

import argparse
from pathlib import Path

from rpfcones.config import load_config
from rpfcones.experiments import run_cones

CONFIG = Path(__file__).resolve().parent.parent / "configs" / "tower-cones.toml"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", default=str(CONFIG))
    ap.add_argument("--seed", type=int)
    args = ap.parse_args()

    cfg = load_config(args.config)
    seed = cfg.statistics.seed if args.seed is None else args.seed
    res, _, _ = run_cones(cfg, seed)
    cone, b, r = res["cone"], res["birkhoff"], res["radius"]
    print(f"cone a={cone['a']:.3g} b={cone['b']:.3g} c={cone['c']:.3g}  {res['functionals']} functionals, window {res['window']}")
    print(f"image diameter {b['diameter']:.4g}, tanh bound {b['tanh_bound']:.4g}, violations {b['violations']}/{b['pairs']}")
    print(f"C0 {res['C0']:.4g}  r {r['r']:.4g}  delta_r {r['delta']:.3g}  d1 {r['d1']:.4g}")
    for c in res["complex"]:
        z = complex(*c["z"])
        print(f"  z={z:.3e}  members {c['members']}/{c['samples']}  delta-diameter {c['delta_diameter']:.3e}")


if __name__ == "__main__":
    main()
