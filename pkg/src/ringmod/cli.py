"""Command-line front end: ``ringmod <command> --config run.yaml --out DIR``.

Each run writes ``manifest.txt`` first (config echo, versions, status), then the
result tables as CSV (17 significant digits), a line-delimited JSON record file
and a plot-data CSV, and finally appends timings and the exit status to the
manifest.  Exit status: 0 success, 1 a checked property failed, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import logging
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from . import __version__
from .chordal import (
    INFINITY,
    ChordalParams,
    PreconditionError,
    all_quadruples,
    all_triples,
    chordal_diameter,
    chordal_matrix,
    ptolemy_check,
    tail_diameter,
    triangle_audit,
)
from .config import COMMANDS, ConfigError, RunConfig, parse_config
from .fmo import PsiProfile, ScalarField, dyadic_radii, fmo_classify, psi_integral
from .modulus import (
    INFINITE,
    Condenser,
    PathFamily,
    SolverError,
    capacity_floor_check,
    compute_p_modulus,
    condenser_capacity,
    conductance_oracle,
    ring_family,
)
from .qmap import eta_battery, get_map, modulus_decay_probe, ring_battery
from .singlab import (
    SingularityExperiment,
    annulus_targets,
    attach_closed_forms,
    cluster_density_scan,
    extension_check,
    omitted_continuum_check,
)
from .space import (
    BuildError,
    DiscreteSpace,
    DomainSpec,
    Region,
    RingSpec,
    build_grid_domain,
    closed_ball,
    cycle_graph,
    disk_domain,
    graph_space,
    lattice_box,
    log_polar_domain,
    read_space_records,
    ring_subset,
    sphere_nodes,
    table_space,
)

log = logging.getLogger("ringmod")

EXIT_OK, EXIT_FAIL, EXIT_INPUT = 0, 1, 2


class InputError(ValueError):
    """Config is well formed but does not fit the space or the command."""


# --------------------------------------------------------------------------- builders


def build_space(spec: dict) -> DiscreteSpace:
    kind = spec["kind"]
    if kind == "grid":
        shape = Region(**spec["shape"]) if spec["shape"] else None
        return build_grid_domain(
            DomainSpec(
                lower=spec["lower"],
                upper=spec["upper"],
                step=spec["step"],
                shape=shape,
                puncture=spec["puncture"],
                exclude=tuple(Region(**r) for r in spec["exclude"]),
                stencil=spec["stencil"],
                alpha=spec["alpha"],
            )
        )
    if kind == "disk":
        return disk_domain(spec["radius"], spec["step"], spec["center"], spec["puncture"], spec["stencil"])
    if kind == "log_polar":
        return log_polar_domain(spec["r_min"], spec["r_max"], spec["n_theta"], spec["center"], spec["stencil"])
    if kind == "graph":
        return graph_space(spec["n"], spec["edges"], spec["lengths"], spec["measure"], spec["alpha"])
    if kind == "table":
        return table_space(spec["table"], spec["edges"], spec["measure"], spec["alpha"])
    if kind == "cycle":
        return cycle_graph(spec["n"], spec["side"])
    if kind == "lattice":
        return lattice_box(spec["n"], spec["step"], spec["dim"], spec["stencil"])
    if kind == "file":
        return read_space_records(spec["path"])
    raise InputError(f"unknown space kind {kind!r}")


def select_nodes(space: DiscreteSpace, sel: dict | None) -> frozenset[int]:
    """Resolve a validated node selector; ``None`` means every node."""
    if sel is None:
        return frozenset(range(space.n_nodes))
    (kind, arg), = sel.items()
    if kind == "nodes":
        for v in arg:
            if v >= space.n_nodes:
                raise InputError(f"node {v} does not exist (space has {space.n_nodes} nodes)")
        return frozenset(arg)
    if kind == "all":
        return frozenset(range(space.n_nodes)) if arg else frozenset()
    if kind == "ball":
        return closed_ball(space, arg["center"], arg["radius"])
    if kind == "sphere":
        return sphere_nodes(space, arg["center"], arg["radius"], arg["tol"], arg["side"])
    if kind == "ring":
        return ring_subset(space, RingSpec(arg["center"], arg["r1"], arg["r2"]))
    if kind == "region":
        if space.coords is None:
            raise InputError("region selectors need node coordinates")
        return frozenset(np.flatnonzero(Region(**arg).contains(space.coords)).tolist())
    raise InputError(f"unknown selector {kind!r}")


def resolve_point(space: DiscreteSpace, p) -> int:
    if isinstance(p, (list, tuple)):
        if space.coords is None:
            raise InputError("coordinate base points need node coordinates")
        return space.nearest_node(p)
    return space.check_node(int(p))


def chordal_params(space: DiscreteSpace, spec: dict) -> ChordalParams:
    return ChordalParams(resolve_point(space, spec["basepoint"]), spec["alpha"], spec["beta"], spec["p"])


def scalar_field(spec: dict | None, fallback: ScalarField | None = None) -> ScalarField:
    if spec is None:
        return fallback if fallback is not None else ScalarField.constant()
    center = tuple(spec["center"]) if spec["center"] is not None else None
    return ScalarField(spec["kind"], spec["value"], spec["exponent"], center)


def psi_profile(spec: dict) -> PsiProfile:
    return PsiProfile(spec["kind"], spec["value"], spec["scale"], spec["exponent"], spec["epsilon0"])


def make_map(spec: dict):
    try:
        return get_map(spec["name"], **spec["params"])
    except TypeError as exc:
        raise InputError(f"map {spec['name']!r}: {exc}") from None


# --------------------------------------------------------------------------- outputs


@dataclass
class Outcome:
    tables: dict[str, list[dict]] = field(default_factory=dict)
    records: list[dict] = field(default_factory=list)
    plot: list[dict] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    failures: list[str] = field(default_factory=list)


def fmt(x) -> str:
    if x is INFINITE or x is INFINITY:
        return "+inf"
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "+inf" if x > 0 else "-inf"
        return "%.17g" % x
    if isinstance(x, (tuple, list)):
        return " ".join(fmt(v) for v in x)
    return str(x)


def write_csv(path: str, rows: Sequence[dict]) -> None:
    cols: list[str] = []
    for r in rows:
        for k in r:
            if k not in cols:
                cols.append(k)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([fmt(r.get(c, "")) if c in r else "" for c in cols])


def _jsonable(x):
    if x is INFINITE or x is INFINITY:
        return "+inf"
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("+inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, complex):
        return [x.real, x.imag]
    return x


class Manifest:
    """Plain-text manifest, appended to as the run progresses."""

    def __init__(self, path: str):
        self.path = path

    def start(self, cfg: RunConfig, threads: int) -> None:
        lines = [
            "ringmod run manifest",
            f"status: started",
            f"command: {cfg.command}",
            f"config_source: {cfg.source}",
            f"seed: {cfg.seed}",
            f"threads: {threads}",
            f"started: {_dt.datetime.now().isoformat(timespec='seconds')}",
            f"version.ringmod: {__version__}",
            f"version.python: {platform.python_version()}",
            f"version.numpy: {np.__version__}",
            f"version.scipy: {_version('scipy')}",
            "config:",
        ]
        lines += ["  " + ln for ln in cfg.echo().splitlines()]
        with open(self.path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    def append(self, **items) -> None:
        with open(self.path, "a") as fh:
            for k, v in items.items():
                fh.write(f"{k}: {v}\n")


def _version(mod: str) -> str:
    try:
        return __import__(mod).__version__
    except Exception:  # pragma: no cover
        return "unknown"


# --------------------------------------------------------------------------- commands


def cmd_metric_check(cfg: RunConfig, space: DiscreteSpace, rng: np.random.Generator) -> Outcome:
    prm = cfg.params
    out = Outcome()
    nodes = list(range(space.n_nodes))
    if prm["sample_triples"]:
        triples = [tuple(int(v) for v in t) for t in rng.integers(0, space.n_nodes, size=(prm["sample_triples"], 3))]
    else:
        triples = all_triples(nodes)
    ptol = None
    if prm["ptolemy"]:
        if prm["sample_quadruples"]:
            quads = [tuple(int(v) for v in q) for q in rng.integers(0, space.n_nodes, size=(prm["sample_quadruples"], 4))]
        else:
            quads = all_quadruples(nodes)
        ptol = ptolemy_check(space, quads)
        out.summary["ptolemy_min_slack"] = ptol.min_slack
        out.summary["ptolemaic"] = ptol.min_slack >= -1e-12
        out.records.append({"kind": "ptolemy", "min_slack": ptol.min_slack, "worst_quadruple": list(ptol.worst_quadruple), "n": ptol.n_quadruples})
    rows = []
    worst = 0.0
    for k, spec in enumerate(prm["parameter_sets"]):
        params = chordal_params(space, spec)
        rep = triangle_audit(params, space, triples)
        ok = rep.passed(prm["tol"])
        worst = max(worst, rep.max_relative_defect)
        row = {
            "set": k,
            "basepoint": params.basepoint,
            "alpha": params.alpha,
            "beta": params.beta,
            "p": params.p,
            "n_triples": rep.n_triples,
            "max_defect": rep.max_defect,
            "max_relative_defect": rep.max_relative_defect,
            "worst_triple": rep.worst_triple,
            "passed": ok,
        }
        if params.is_standard:
            # h(x, inf) <= h(x, y) + h(y, inf) over all finite pairs, and diam of the compactification
            H = chordal_matrix(nodes, nodes, params, space)
            hinf = chordal_matrix(nodes, [INFINITY], params, space)[:, 0]
            row["infinity_defect"] = float(np.max(hinf[:, None] - H - hinf[None, :]))
            row["diameter_bar"] = chordal_diameter(nodes + [INFINITY], params, space).value
        rows.append(row)
        if not ok:
            msg = f"parameter set {k}: triangle defect {rep.max_defect:.3e} at triple {rep.worst_triple}"
            if ptol is not None and ptol.min_slack < 0:
                msg += f"; space is not Ptolemaic (slack {ptol.min_slack:.6g} at quadruple {ptol.worst_quadruple})"
            out.failures.append(msg)
        for R in prm["tail_radii"]:
            if params.is_standard:
                out.plot.append({"set": k, "R": R, "tail_diameter": tail_diameter(space, params, R)})
    out.tables["results"] = rows
    out.summary["max_relative_defect"] = worst
    out.summary["all_passed"] = not out.failures
    return out


def _family(space: DiscreteSpace, spec: dict) -> PathFamily:
    kind = spec["kind"]
    if kind == "explicit":
        return PathFamily.explicit(spec["paths"])
    if kind == "connecting":
        E, F = select_nodes(space, spec["E"]), select_nodes(space, spec["F"])
        G = select_nodes(space, spec["G"])
        return PathFamily.connecting(E, F, G)
    return ring_family(space, RingSpec(spec["center"], spec["r1"], spec["r2"]))


def cmd_modulus(cfg: RunConfig, space: DiscreteSpace, rng) -> Outcome:
    prm = cfg.params
    out = Outcome()
    fam = _family(space, prm["family"])
    res = compute_p_modulus(space, fam, prm["p"], prm["tol"], method=prm["method"])
    head = res.records()[0]
    row = {k: v for k, v in head.items() if k != "kind"}
    row["family"] = prm["family"]["kind"]
    if prm["conductance"]:
        if fam.is_explicit or prm["p"] != 2:
            raise InputError("the conductance oracle needs a connecting family and p = 2")
        row["conductance"] = conductance_oracle(space, fam.sources, fam.targets, fam.through)
        row["relative_gap"] = abs(float(res.value) - row["conductance"]) / row["conductance"]
        out.summary["conductance"] = row["conductance"]
        out.summary["relative_gap"] = row["relative_gap"]
    out.tables["results"] = [row]
    out.records = res.records() if prm["write_density"] else res.records()[:1]
    if res.optimal_density is not None:
        out.plot = [{"node": v, "rho": float(r)} for v, r in enumerate(res.optimal_density.rho)]
    out.summary.update(value=res.value, gap=res.certified_gap, iterations=res.iterations)
    return out


def cmd_capacity(cfg: RunConfig, space: DiscreteSpace, rng) -> Outcome:
    prm = cfg.params
    out = Outcome()
    if prm["mode"] == "condenser":
        if prm["A"] is None or prm["C"] is None:
            raise InputError("condenser mode needs both A and C")
        res = condenser_capacity(space, Condenser(select_nodes(space, prm["A"]), select_nodes(space, prm["C"])), prm["p"], prm["tol"])
        head = res.records()[0]
        out.tables["results"] = [{k: v for k, v in head.items() if k != "kind"}]
        out.records = res.records()
        out.summary.update(value=res.value, gap=res.certified_gap)
        return out
    if prm["F"] is None or prm["a"] is None or not prm["trials"]:
        raise InputError("floor mode needs F, a and at least one trial continuum")
    params = chordal_params(space, prm["chordal"])
    trials = [select_nodes(space, t) for t in prm["trials"]]
    rep = capacity_floor_check(space, select_nodes(space, prm["F"]), params, prm["a"], prm["p"], trials, prm["tol"])
    skipped = dict(rep.skipped)
    it = iter(rep.capacities)
    rows = []
    for k in range(len(trials)):
        rows.append({"trial": k, "capacity": next(it) if k not in skipped else float("nan"), "skipped": skipped.get(k, "")})
    out.tables["results"] = rows
    out.summary.update(delta=rep.delta, all_positive=rep.all_positive, n_skipped=len(rep.skipped))
    if not rep.all_positive:
        out.failures.append(f"capacity floor not positive: delta = {rep.delta}")
    return out


def cmd_fmo(cfg: RunConfig, space: DiscreteSpace, rng) -> Outcome:
    prm = cfg.params
    out = Outcome()
    Q = scalar_field(prm["field"])
    rd = prm["radii"]
    radii = dyadic_radii(rd["r0"], rd["k_min"], rd["k_max"])
    rep = fmo_classify(Q, tuple(prm["x0"]), radii, space, prm["rate_threshold"])
    rows = rep.rows()
    for k, r in enumerate(rows):
        r["ratio"] = float(rep.ratios[k - 1]) if k > 0 else float("nan")
    out.tables["results"] = rows
    out.plot = [{"log_inv_radius": -math.log(r["radius"]), "log_oscillation": math.log(r["oscillation"]) if r["oscillation"] > 0 else float("-inf")} for r in rows]
    out.summary.update(verdict=rep.verdict, fmo_consistent=rep.fmo_consistent, divergence_rate=rep.divergence_rate, limsup=rep.limsup_estimate)
    if prm["psi"] is not None:
        prof = psi_profile(prm["psi"])
        e0 = prof.eps0
        prow = []
        for e in prm["psi_eps"]:
            closed = psi_integral(prof, e, e0)
            quad_v = psi_integral(prof, e, e0, use_closed_form=False)
            prow.append({"eps": e, "eps0": e0, "closed_form": closed, "quadrature": quad_v})
        out.tables["psi"] = prow
        if prow:
            out.summary["psi_max_discrepancy"] = max(abs(float(r["closed_form"]) - float(r["quadrature"])) for r in prow)
    return out


def cmd_qmap_verify(cfg: RunConfig, space: DiscreteSpace, rng, image_space: DiscreteSpace) -> Outcome:
    prm = cfg.params
    out = Outcome()
    f = make_map(prm["map"])
    Q = scalar_field(prm["Q"], f.Q)
    L = prm["eta_log_scale"]
    for r1, r2 in prm["rings"]:
        if not 0 < r1 < r2 < L:
            raise InputError(f"ring ({r1}, {r2}) must satisfy 0 < r1 < r2 < eta_log_scale")
    results = ring_battery(f, [tuple(r) for r in prm["rings"]], lambda a, b: {k: v for k, v in eta_battery(a, b, L).items() if k in prm["etas"]}, tuple(prm["x0"]), space, image_space, Q, prm["p"], prm["q"], prm["tol"])
    rows = []
    for r in results:
        row = r.row()
        row["status"] = "battery-verified" if r.holds else "violated"
        rows.append(row)
        if not r.holds:
            out.failures.append(f"ring ({r.ring.r1}, {r.ring.r2}) eta={r.eta_name}: lhs {row['lhs']} > rhs {r.rhs}")
    out.tables["results"] = rows
    out.plot = [{"r1": r["r1"], "r2": r["r2"], "eta": r["eta"], "lhs": r["lhs"], "rhs": r["rhs"]} for r in rows]
    margins = [r.margin for r in results]
    out.summary.update(n_cases=len(results), all_hold=not out.failures, min_margin=min(margins))
    return out


def cmd_decay_probe(cfg: RunConfig, space: DiscreteSpace, rng, image_space: DiscreteSpace) -> Outcome:
    prm = cfg.params
    out = Outcome()
    f = make_map(prm["map"])
    Q = scalar_field(prm["Q"], f.Q)
    rd = prm["radii"]
    radii = dyadic_radii(rd["r0"], rd["k_min"], rd["k_max"])
    rep = modulus_decay_probe(f, Q, tuple(prm["x0"]), radii, psi_profile(prm["profile"]), prm["p"], prm["q"], space, image_space, prm["r_outer"], prm["tol"])
    out.tables["results"] = rep.rows()
    out.plot = [{"eps": r["eps"], "observed": r["observed"], "bound": r["bound"]} for r in rep.rows()]
    dec_obs, dec_bound = rep.strictly_decreasing(4)
    for r in rep.rows():
        if not r["holds"]:
            out.failures.append(f"eps={r['eps']}: observed {r['observed']} exceeds bound {r['bound']}")
    out.summary.update(
        all_hold=all(rep.holds),
        observed_decreasing=dec_obs,
        bound_decreasing=dec_bound,
        n_eps=len(rep.eps),
        stopped_at=rep.stopped_at if rep.stopped_at is not None else float("nan"),
    )
    return out


def cmd_singularity(cfg: RunConfig, rng: np.random.Generator) -> Outcome:
    prm = cfg.params
    out = Outcome()
    f = make_map(prm["map"])
    targets = [INFINITY if t == "inf" else complex(*t) for t in prm["targets"]]
    if prm["annulus_targets"] is not None:
        a = prm["annulus_targets"]
        targets += list(annulus_targets(a["n"], a["r_in"], a["r_out"]))
    n = prm["samples_per_shell"]
    offset = float(rng.uniform(0.0, 2 * math.pi / n)) if prm["jitter"] else 0.0
    z0 = complex(*prm["zeta0"])
    exp = SingularityExperiment(f, z0, tuple(prm["radii"]), tuple(targets), phase_offset=offset)
    if prm["scan"] and targets:
        rep = cluster_density_scan(exp, n)
        if f.name == "exp_reciprocal":
            attach_closed_forms(rep, z0)
        rows = rep.rows()
        out.tables["results"] = rows
        out.plot = [
            {"target_re": r["target_re"], "target_im": r["target_im"], "best_distance": r["best_distance"], "radius": r["witness_radius"]}
            for r in rows
        ]
        nonzero = [r for r in rep.results if r.target is INFINITY or r.target != 0]
        out.summary.update(
            max_distance=max((r.best_distance for r in nonzero), default=0.0),
            max_witness_modulus=max((abs(r.witness - z0) for r in nonzero), default=0.0),
            skipped=rep.skipped,
        )
        gaps = [r.closed_form_gap for r in rep.results if not math.isnan(r.closed_form_gap)]
        if gaps:
            out.summary["max_closed_form_gap"] = max(gaps)
        out.records += [{"kind": "target", **r} for r in rows]
    if prm["extension"]:
        ext = extension_check(exp, n, prm["extension_tol"])
        out.tables["extension"] = ext.rows()
        out.summary.update(
            extends=ext.extends,
            finest_separation=ext.witness_separation,
            oscillation_slope=ext.slope,
            limit_re=ext.limit.real if ext.limit is not None else float("nan"),
            limit_im=ext.limit.imag if ext.limit is not None else float("nan"),
        )
        out.records.append({"kind": "extension", "extends": ext.extends, "diameters": ext.diameters, "witness_pair": [ext.witness_pair[0], ext.witness_pair[1]]})
    if prm["omitted"] is not None:
        seg = prm["omitted"]["segment"]
        a, b = complex(*seg["start"]), complex(*seg["end"])
        K = [a + (b - a) * t for t in np.linspace(0.0, 1.0, seg["n"])]
        om = omitted_continuum_check(exp, K, prm["omitted"]["margin"], n)
        out.summary.update(omitted_holds=om.holds, omitted_closest=om.closest)
        out.records.append({"kind": "omitted", "holds": om.holds, "closest": om.closest, "witness": om.witness})
    return out


# --------------------------------------------------------------------------- run


def _check_expectations(summary: dict, expect: dict) -> list[str]:
    failures = []
    for key, spec in expect.items():
        if key not in summary:
            raise InputError(f"expect.{key}: no such summary metric (available: {', '.join(sorted(summary))})")
        val = summary[key]
        if spec.get("equals") is not None:
            want = spec["equals"]
            if isinstance(want, bool) or isinstance(val, (bool, np.bool_, str)):
                ok = val == want
            else:
                ok = abs(float(val) - float(want)) <= spec.get("tol", 0.0)
            if not ok:
                failures.append(f"expect.{key}: got {val}, wanted {want}")
        if spec.get("min") is not None and not float(val) >= spec["min"]:
            failures.append(f"expect.{key}: {val} below {spec['min']}")
        if spec.get("max") is not None and not float(val) <= spec["max"]:
            failures.append(f"expect.{key}: {val} above {spec['max']}")
    return failures


def run(cfg: RunConfig, out_dir: str, threads: int = 0) -> int:
    """Execute one configured command; returns the exit status."""
    os.makedirs(out_dir, exist_ok=True)
    man = Manifest(os.path.join(out_dir, "manifest.txt"))
    man.start(cfg, threads)
    t0 = time.perf_counter()
    timings = {}
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=threads or None):
            rng = np.random.default_rng(cfg.seed)
            space = image_space = None
            if cfg.space is not None:
                space = build_space(cfg.space)
                image_space = build_space(cfg.image_space) if cfg.image_space is not None else space
                timings["build"] = time.perf_counter() - t0
                man.append(n_nodes=space.n_nodes, n_edges=space.n_edges)
            t1 = time.perf_counter()
            if cfg.command == "metric-check":
                res = cmd_metric_check(cfg, space, rng)
            elif cfg.command == "modulus":
                res = cmd_modulus(cfg, space, rng)
            elif cfg.command == "capacity":
                res = cmd_capacity(cfg, space, rng)
            elif cfg.command == "fmo":
                res = cmd_fmo(cfg, space, rng)
            elif cfg.command == "qmap-verify":
                res = cmd_qmap_verify(cfg, space, rng, image_space)
            elif cfg.command == "decay-probe":
                res = cmd_decay_probe(cfg, space, rng, image_space)
            else:
                res = cmd_singularity(cfg, rng)
            timings["compute"] = time.perf_counter() - t1
            res.failures += _check_expectations(res.summary, cfg.params.get("expect", {}))
    except (ConfigError, InputError, BuildError, PreconditionError, ValueError) as exc:
        man.append(status="input-error", error=str(exc).replace("\n", " "))
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except SolverError as exc:
        man.append(status="solver-error", error=str(exc), bounds=exc.bounds)
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_FAIL

    for name, rows in res.tables.items():
        write_csv(os.path.join(out_dir, f"{name}.csv"), rows)
    if res.plot:
        write_csv(os.path.join(out_dir, "plot_data.csv"), res.plot)
    summary_rows = [{"metric": k, "value": v} for k, v in res.summary.items()]
    write_csv(os.path.join(out_dir, "summary.csv"), summary_rows)
    with open(os.path.join(out_dir, "records.jsonl"), "w") as fh:
        for rec in res.records:
            fh.write(json.dumps(_jsonable(rec), sort_keys=True) + "\n")
        fh.write(json.dumps(_jsonable({"kind": "summary", **res.summary}), sort_keys=True) + "\n")
    for k, v in timings.items():
        man.append(**{f"timing.{k}_s": f"{v:.3f}"})
    for msg in res.failures:
        man.append(failure=msg)
        print(f"FAIL: {msg}", file=sys.stderr)
    status = EXIT_FAIL if res.failures else EXIT_OK
    man.append(status="failed" if res.failures else "ok", finished=_dt.datetime.now().isoformat(timespec="seconds"))
    return status


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ringmod", description="Discrete moduli, chordal metrics and ring-Q-map experiments.")
    ap.add_argument("command", help=f"one of: {', '.join(COMMANDS)}")
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", default=None, help="output directory (default: config 'out' or ./runs/<command>)")
    ap.add_argument("--threads", type=int, default=0, help="BLAS worker cap, 0 = auto")
    ap.add_argument("--seed", type=int, default=None, help="override the config seed")
    ap.add_argument("--verbose", action="store_true")
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.command not in COMMANDS:
        print(f"error: unknown command {args.command!r} (allowed: {', '.join(COMMANDS)})", file=sys.stderr)
        return EXIT_INPUT
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return EXIT_INPUT
    try:
        cfg = parse_config(args.config, is_path=True)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    if cfg.command != args.command:
        print(f"error: config is for {cfg.command!r}, command line asked for {args.command!r}", file=sys.stderr)
        return EXIT_INPUT
    if args.seed is not None:
        cfg.seed = args.seed
    out = args.out or cfg.out or os.path.join("runs", cfg.command)
    return run(cfg, out, args.threads)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
