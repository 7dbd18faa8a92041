"""Ring inequality battery for the identity and a radial stretch on a planar disk.

    python scripts/ring_battery.py --h 0.125 --K 2.0
"""

import argparse
import csv
import math
import sys
import time
from dataclasses import dataclass

from ringmod.qmap import get_map, eta_battery, ring_battery
from ringmod.space import disk_domain


@dataclass
class BatteryConfig:
    h: float = 0.125
    K: float = 2.0
    rings: tuple[tuple[float, float], ...] = ((1.0, 2.0), (1.0, math.e), (1.5, 3.0))
    log_scale: float = 6.0


def run(cfg: BatteryConfig):
    space = disk_domain(3 + 3 * cfg.h, cfg.h, stencil=16)
    image = disk_domain(3.0**cfg.K + 3 * cfg.h, cfg.h, stencil=16)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["map", "r1", "r2", "eta", "lhs", "rhs", "margin", "holds"])
    for f, img in ((get_map("identity"), space), (get_map("radial_stretch", K=cfg.K), image)):
        t = time.perf_counter()
        out = ring_battery(f, cfg.rings, lambda a, b: eta_battery(a, b, cfg.log_scale), (0.0, 0.0), space, img)
        for r in out:
            w.writerow([f.name, f"{r.ring.r1:g}", f"{r.ring.r2:g}", r.eta_name, f"{float(r.lhs):.5f}", f"{r.rhs:.5f}", f"{r.margin:.5f}", int(r.holds)])
        print(f"# {f.name}: {time.perf_counter() - t:.1f}s", flush=True)


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.125)
    ap.add_argument("--K", type=float, default=2.0)
    a = ap.parse_args()
    run(BatteryConfig(a.h, a.K))
