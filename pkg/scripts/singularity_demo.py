"""Cluster sets of exp(1/z) and sin(z)/z at the origin on shrinking circles.

    python scripts/singularity_demo.py --samples 4096
"""

import argparse
from dataclasses import dataclass

from ringmod.qmap import get_map
from ringmod.singlab import SingularityExperiment, annulus_targets, attach_closed_forms, cluster_density_scan, extension_check


@dataclass
class DemoConfig:
    samples: int = 4096
    exp_radii: tuple[float, ...] = (0.049, 0.04, 0.032, 0.025)
    sinc_radii: tuple[float, ...] = tuple(0.2 * 2.0**-k for k in range(8))


def run(cfg: DemoConfig):
    exp = SingularityExperiment(get_map("exp_reciprocal"), 0j, cfg.exp_radii, annulus_targets())
    scan = attach_closed_forms(cluster_density_scan(exp, samples_per_shell=cfg.samples))
    print("target,best_distance,witness,closed_form_gap")
    for r in scan.results:
        print(f"{r.target:.4f},{r.best_distance:.3e},{r.witness:.6f},{r.closed_form_gap:.1e}")
    ext = extension_check(SingularityExperiment(get_map("exp_reciprocal"), 0j, cfg.exp_radii), samples_per_shell=cfg.samples)
    print(f"# exp(1/z): extends {ext.extends}, finest-shell separation {ext.witness_separation:.4f}")
    sinc = extension_check(SingularityExperiment(get_map("sinc"), 0j, cfg.sinc_radii), samples_per_shell=cfg.samples)
    print(f"# sin(z)/z: extends {sinc.extends}, limit {sinc.limit:.8f}, log-log slope {sinc.slope:.3f}")


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=4096)
    a = ap.parse_args()
    run(DemoConfig(a.samples))
