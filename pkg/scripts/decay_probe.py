"""Image ring-family moduli against the funnel bound on shrinking dyadic rings.

    python scripts/decay_probe.py --n-theta 64 --k-max 6
"""

import argparse
import math
from dataclasses import dataclass

from ringmod.fmo import PsiProfile
from ringmod.qmap import get_map, modulus_decay_probe
from ringmod.space import log_polar_domain


@dataclass
class DecayConfig:
    n_theta: int = 64
    k_max: int = 6
    log_scale: float = 2.0
    stretches: tuple[float, ...] = (1.0, 2.0)


def run(cfg: DecayConfig):
    d = 2 * math.pi / cfg.n_theta
    radii = [2.0**-k for k in range(1, cfg.k_max + 1)]
    prof = PsiProfile("log", scale=cfg.log_scale)
    print("K,eps,observed,bound,holds")
    for K in cfg.stretches:
        f = get_map("identity") if K == 1.0 else get_map("radial_stretch", K=K)
        dom = log_polar_domain(radii[-1] * math.exp(-3 * d), math.exp(3 * d), cfg.n_theta)
        img = dom if K == 1.0 else log_polar_domain(radii[-1] ** K * math.exp(-3 * d), math.exp(3 * d), cfg.n_theta)
        rep = modulus_decay_probe(f, f.Q, (0.0, 0.0), radii, prof, 2, 2, dom, img, 1.0)
        for row in rep.rows():
            print(f"{K:g},{row['eps']:g},{row['observed']:.6f},{row['bound']:.6f},{row['holds']}")
        print(f"# K={K:g} strictly decreasing (observed, bound): {rep.strictly_decreasing(4)}", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-theta", type=int, default=64)
    ap.add_argument("--k-max", type=int, default=6)
    a = ap.parse_args()
    run(DecayConfig(a.n_theta, a.k_max))
