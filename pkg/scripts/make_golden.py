"""Regenerate the golden files pinned by the capacity-floor and funnel tests.

    python scripts/make_golden.py            # writes tests/golden/*.json
"""

import json
import os
import sys
import time

HERE = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, os.path.join(HERE, "..", "tests"))

from _fixtures import (  # noqa: E402
    FUNNEL_EPS0,
    FUNNEL_STEPS,
    GOLDEN_DIR,
    capacity_floor_setup,
    funnel_space,
    separation_floor_setups,
)

from ringmod.chordal import chordal_diameter  # noqa: E402
from ringmod.fmo import ScalarField, fmo_implies_funnel_check  # noqa: E402
from ringmod.modulus import capacity_floor_check, pr2_floor  # noqa: E402


def capacity_floor():
    space, F, trials, params = capacity_floor_setup()
    diams = [chordal_diameter(C, params, space).value for C in trials]
    a = min(diams)
    rep = capacity_floor_check(space, F, params, a, 2.0, trials)
    return {"a": a, "p": 2.0, "chordal_diameters": diams, "capacities": rep.capacities, "delta": rep.delta}


def separation_floor():
    out = {}
    for name, space, E, F, R, center, p in separation_floor_setups():
        rep = pr2_floor(space, E, F, R, p, center=center)
        out[name] = {"R": R, "p": p, "bound": rep.bound, "observed": rep.observed, "C": rep.ratio}
    return out


def funnel_log():
    rep = fmo_implies_funnel_check(ScalarField("log_inverse"), (0.0, 0.0), funnel_space(), 2.0, 2.0, FUNNEL_EPS0, FUNNEL_STEPS)
    return {"eps": rep.eps.tolist(), "ratios": rep.ratios.tolist(), "trend_slope": rep.trend_slope}


GOLDEN = {
    "capacity_floor.json": capacity_floor,
    "separation_floor.json": separation_floor,
    "funnel_log.json": funnel_log,
}


def main():
    os.makedirs(GOLDEN_DIR, exist_ok=True)
    t = time.perf_counter()
    for fname, fn in GOLDEN.items():
        data = fn()
        with open(os.path.join(GOLDEN_DIR, fname), "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)
            fh.write("\n")
        print(f"wrote {fname}: {json.dumps(data)[:160]}")
    print(f"done in {time.perf_counter() - t:.1f}s")


if __name__ == "__main__":
    main()
