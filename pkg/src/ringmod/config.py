"""Strict run configuration: YAML in, validated dataclasses out.

Every mapping is checked against a fixed schema.  Unknown keys, duplicate keys,
missing required fields and type mismatches raise :class:`ConfigError` with the
dotted field path and, where the YAML node is known, the line number.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable

import yaml

__all__ = ["ConfigError", "RunConfig", "COMMANDS", "parse_config", "load_config"]

COMMANDS = ("metric-check", "modulus", "capacity", "fmo", "qmap-verify", "decay-probe", "singularity")


class ConfigError(ValueError):
    """Malformed configuration; the message names the field and line."""


# --------------------------------------------------------------------------- strict loader


class _StrictLoader(yaml.SafeLoader):
    """SafeLoader that rejects duplicate keys and remembers key line numbers."""


def _construct_mapping(loader: _StrictLoader, node: yaml.MappingNode, deep: bool = False):
    loader.flatten_mapping(node)
    out: dict = {}
    seen: dict = {}
    lines: dict = {}
    for key_node, value_node in node.value:
        key = loader.construct_object(key_node, deep=True)
        try:
            hash(key)
        except TypeError:
            raise ConfigError(f"line {key_node.start_mark.line + 1}: unhashable mapping key") from None
        line = key_node.start_mark.line + 1
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}: first at line {seen[key]}, again at line {line}")
        seen[key] = line
        out[key] = loader.construct_object(value_node, deep=True)
        lines[key] = line
    return _Mapping(out, lines)


class _Mapping(dict):
    def __init__(self, data: dict, lines: dict):
        super().__init__(data)
        self.lines = lines


_StrictLoader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_mapping)


def _load_yaml(text: str) -> Any:
    try:
        return yaml.load(text, Loader=_StrictLoader)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark
        where = f"line {mark.line + 1}, column {mark.column + 1}: " if mark else ""
        raise ConfigError(f"{where}{exc.problem}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(str(exc)) from None


# --------------------------------------------------------------------------- schema


REQUIRED = object()


@dataclass(frozen=True)
class Field:
    check: Callable[[Any, str], Any]
    default: Any = REQUIRED


def _where(path: str, ctx: dict | None = None, key: str | None = None) -> str:
    line = getattr(ctx, "lines", {}).get(key) if ctx is not None and key is not None else None
    return f"{path} (line {line})" if line else path


def _num(v, path):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if not math.isfinite(v):
        raise ConfigError(f"{path}: must be finite")
    return float(v)


def _pos(v, path):
    v = _num(v, path)
    if not v > 0:
        raise ConfigError(f"{path}: must be positive, got {v}")
    return v


def _int(v, path):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    return int(v)


def _nonneg_int(v, path):
    v = _int(v, path)
    if v < 0:
        raise ConfigError(f"{path}: must be nonnegative")
    return v


def _bool(v, path):
    if not isinstance(v, bool):
        raise ConfigError(f"{path}: expected true/false, got {v!r}")
    return v


def _str(v, path):
    if not isinstance(v, str):
        raise ConfigError(f"{path}: expected a string, got {v!r}")
    return v


def _choice(*options):
    def check(v, path):
        v = _str(v, path)
        if v not in options:
            raise ConfigError(f"{path}: expected one of {', '.join(options)}, got {v!r}")
        return v

    return check


def _opt(check):
    def inner(v, path):
        return None if v is None else check(v, path)

    return inner


def _list(check, min_len: int = 0):
    def inner(v, path):
        if not isinstance(v, list):
            raise ConfigError(f"{path}: expected a list, got {v!r}")
        if len(v) < min_len:
            raise ConfigError(f"{path}: needs at least {min_len} entries")
        return [check(x, f"{path}[{i}]") for i, x in enumerate(v)]

    return inner


def _point(v, path):
    pts = _list(_num, 1)(v, path)
    return tuple(pts)


def _nonneg(v, path):
    v = _num(v, path)
    if v < 0:
        raise ConfigError(f"{path}: must be nonnegative, got {v}")
    return v


def _chordal_p(v, path):
    v = _num(v, path)
    if v < 1:
        raise ConfigError(f"{path}: chordal exponent must be >= 1, got {v}")
    return v


def _basepoint(v, path):
    return _point(v, path) if isinstance(v, list) else _nonneg_int(v, path)


def _any_mapping(v, path):
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected a mapping, got {v!r}")
    return dict(v)


def _anything(v, path):
    return v


def _exponent_p(v, path):
    if isinstance(v, float) and math.isinf(v):
        raise ConfigError(f"{path}: p must be finite and > 1 (p = 1 and p = inf are not supported)")
    v = _num(v, path)
    if not v > 1:
        raise ConfigError(f"{path}: p must be > 1 (p = 1 and p = inf are not supported), got {v}")
    return v


def _q(v, path):
    v = _num(v, path)
    if not v >= 1:
        raise ConfigError(f"{path}: q must be >= 1, got {v}")
    return v


def _dict(schema: dict[str, Field]):
    def inner(v, path):
        return _validate(v, schema, path)

    return inner


def _validate(data, schema: dict[str, Field], path: str) -> dict:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected a mapping, got {data!r}")
    for key in data:
        if key not in schema:
            known = ", ".join(sorted(schema))
            raise ConfigError(f"{_where(_join(path, key), data, key)}: unknown key (allowed: {known})")
    out = {}
    for key, fld in schema.items():
        sub = _join(path, key)
        if key in data:
            try:
                out[key] = fld.check(data[key], sub)
            except ConfigError as exc:
                line = getattr(data, "lines", {}).get(key)
                if line and "(line " not in str(exc):
                    raise ConfigError(f"{exc} (line {line})") from None
                raise
        elif fld.default is REQUIRED:
            raise ConfigError(f"{sub}: missing required field")
        else:
            out[key] = fld.default() if callable(fld.default) else fld.default
    return out


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _tagged(schemas: dict[str, dict[str, Field]], tag: str = "kind"):
    """Mapping whose schema is selected by the value of ``tag``."""

    def inner(v, path):
        if not isinstance(v, dict):
            raise ConfigError(f"{path}: expected a mapping, got {v!r}")
        if tag not in v:
            raise ConfigError(f"{path}.{tag}: missing required field")
        kind = _choice(*schemas)(v[tag], f"{path}.{tag}")
        schema = {tag: Field(_str)} | schemas[kind]
        return _validate(v, schema, path)

    return inner


# node selectors: a list of ids, or a single-key mapping naming a region of the space
_REGION = {
    "kind": Field(_choice("disk", "ball", "annulus", "box")),
    "center": Field(_point, ()),
    "radius": Field(_num, 0.0),
    "inner_radius": Field(_num, 0.0),
    "lower": Field(_point, ()),
    "upper": Field(_point, ()),
}

_SELECTOR_FORMS = {
    "nodes": _list(_nonneg_int, 1),
    "ball": _dict({"center": Field(_point), "radius": Field(_pos)}),
    "sphere": _dict({"center": Field(_point), "radius": Field(_pos), "side": Field(_choice("both", "inner", "outer"), "both"), "tol": Field(_opt(_pos), None)}),
    "ring": _dict({"center": Field(_point), "r1": Field(_pos), "r2": Field(_pos)}),
    "region": _dict(_REGION),
    "all": _bool,
}


def _selector(v, path):
    if isinstance(v, list):
        return {"nodes": _list(_nonneg_int, 1)(v, path)}
    if not isinstance(v, dict) or len(v) != 1:
        raise ConfigError(f"{path}: node selector must be a list of ids or a mapping with one of {', '.join(_SELECTOR_FORMS)}")
    (key, val), = v.items()
    if key not in _SELECTOR_FORMS:
        raise ConfigError(f"{_where(_join(path, key), v, key)}: unknown selector (allowed: {', '.join(_SELECTOR_FORMS)})")
    return {key: _SELECTOR_FORMS[key](val, _join(path, key))}


def _existing_file(v, path):
    v = _str(v, path)
    if not os.path.isfile(v):
        raise ConfigError(f"{path}: file {v!r} does not exist")
    return v


SPACE_SCHEMAS: dict[str, dict[str, Field]] = {
    "grid": {
        "lower": Field(_point),
        "upper": Field(_point),
        "step": Field(_pos),
        "stencil": Field(_opt(_int), None),
        "shape": Field(_opt(_dict(_REGION)), None),
        "puncture": Field(_opt(_point), None),
        "exclude": Field(_list(_dict(_REGION)), list),
        "alpha": Field(_opt(_pos), None),
    },
    "disk": {
        "radius": Field(_pos),
        "step": Field(_pos),
        "center": Field(_point, (0.0, 0.0)),
        "puncture": Field(_bool, False),
        "stencil": Field(_opt(_int), None),
    },
    "log_polar": {
        "r_min": Field(_pos),
        "r_max": Field(_pos),
        "n_theta": Field(_int),
        "center": Field(_point, (0.0, 0.0)),
        "stencil": Field(_int, 16),
    },
    "graph": {
        "n": Field(_int),
        "edges": Field(_list(_list(_nonneg_int, 2))),
        "lengths": Field(_opt(_list(_pos)), None),
        "measure": Field(_opt(_list(_pos)), None),
        "alpha": Field(_pos, 2.0),
    },
    "table": {
        "table": Field(_list(_list(_num))),
        "edges": Field(_list(_list(_nonneg_int, 2)), list),
        "measure": Field(_opt(_list(_pos)), None),
        "alpha": Field(_pos, 2.0),
    },
    "cycle": {"n": Field(_int), "side": Field(_pos, 1.0)},
    "lattice": {"n": Field(_int), "step": Field(_pos, 1.0), "dim": Field(_int, 2), "stencil": Field(_opt(_int), None)},
    "file": {"path": Field(_existing_file)},
}

_CHORDAL = {
    "basepoint": Field(_basepoint, 0),
    "alpha": Field(_pos, 1.0),
    "beta": Field(_nonneg, 1.0),
    "p": Field(_chordal_p, 2.0),
}

_FIELD = {
    "kind": Field(_choice("constant", "log_inverse", "power"), "constant"),
    "value": Field(_num, 1.0),
    "exponent": Field(_num, 0.0),
    "center": Field(_opt(_point), None),
}

_PROFILE = {
    "kind": Field(_choice("constant", "zero", "log", "power"), "log"),
    "value": Field(_num, 1.0),
    "scale": Field(_pos, 1.0),
    "exponent": Field(_num, -1.0),
    "epsilon0": Field(_opt(_pos), None),
}

_MAP = {"name": Field(_str), "params": Field(_any_mapping, dict)}

_DYADIC = {"r0": Field(_pos), "k_min": Field(_int), "k_max": Field(_int)}


def _expect(v, path):
    if not isinstance(v, dict):
        raise ConfigError(f"{path}: expected a mapping of summary metric to bounds")
    out = {}
    for key, spec in v.items():
        sub = _where(_join(path, key), v, key)
        if isinstance(spec, bool):
            out[key] = {"equals": spec}
        elif isinstance(spec, (int, float)):
            out[key] = {"equals": float(spec), "tol": 0.0}
        else:
            out[key] = _validate(spec, {"min": Field(_opt(_num), None), "max": Field(_opt(_num), None), "equals": Field(_anything, None), "tol": Field(_num, 0.0)}, sub)
    return out


def _target(v, path):
    if v == "inf" or v == "infinity":
        return "inf"
    pt = _point(v, path)
    if len(pt) != 2:
        raise ConfigError(f"{path}: a target is [re, im] or 'inf'")
    return pt


COMMAND_SCHEMAS: dict[str, dict[str, Field]] = {
    "metric-check": {
        "parameter_sets": Field(_list(_dict(_CHORDAL), 1)),
        "tol": Field(_pos, 1e-12),
        "sample_triples": Field(_nonneg_int, 0),
        "ptolemy": Field(_bool, True),
        "sample_quadruples": Field(_nonneg_int, 0),
        "tail_radii": Field(_list(_pos), list),
        "expect": Field(_expect, dict),
    },
    "modulus": {
        "family": Field(
            _tagged(
                {
                    "explicit": {"paths": Field(_list(_list(_nonneg_int, 1)))},
                    "connecting": {"E": Field(_selector), "F": Field(_selector), "G": Field(_opt(_selector), None)},
                    "ring": {"center": Field(_point), "r1": Field(_pos), "r2": Field(_pos)},
                }
            )
        ),
        "p": Field(_exponent_p, 2.0),
        "tol": Field(_pos, 1e-6),
        "method": Field(_choice("auto", "paths", "potential"), "auto"),
        "conductance": Field(_bool, False),
        "write_density": Field(_bool, True),
        "expect": Field(_expect, dict),
    },
    "capacity": {
        "mode": Field(_choice("condenser", "floor"), "condenser"),
        "A": Field(_opt(_selector), None),
        "C": Field(_opt(_selector), None),
        "F": Field(_opt(_selector), None),
        "a": Field(_opt(_pos), None),
        "trials": Field(_list(_selector), list),
        "chordal": Field(_dict(_CHORDAL), dict),
        "p": Field(_exponent_p, 2.0),
        "tol": Field(_pos, 1e-6),
        "expect": Field(_expect, dict),
    },
    "fmo": {
        "field": Field(_dict(_FIELD)),
        "x0": Field(_point),
        "radii": Field(_dict(_DYADIC), lambda: {"r0": 1.0, "k_min": 1, "k_max": 7}),
        "rate_threshold": Field(_pos, 0.1),
        "psi": Field(_opt(_dict(_PROFILE)), None),
        "psi_eps": Field(_list(_pos), list),
        "expect": Field(_expect, dict),
    },
    "qmap-verify": {
        "map": Field(_dict(_MAP)),
        "x0": Field(_point, (0.0, 0.0)),
        "rings": Field(_list(_list(_pos, 2), 1)),
        "eta_log_scale": Field(_pos),
        "etas": Field(_list(_choice("constant", "log", "inverse"), 1), lambda: ["constant", "log", "inverse"]),
        "Q": Field(_opt(_dict(_FIELD)), None),
        "p": Field(_exponent_p, 2.0),
        "q": Field(_q, 2.0),
        "tol": Field(_pos, 1e-6),
        "expect": Field(_expect, dict),
    },
    "decay-probe": {
        "map": Field(_dict(_MAP)),
        "x0": Field(_point, (0.0, 0.0)),
        "radii": Field(_dict(_DYADIC)),
        "r_outer": Field(_pos),
        "profile": Field(_dict(_PROFILE)),
        "Q": Field(_opt(_dict(_FIELD)), None),
        "p": Field(_exponent_p, 2.0),
        "q": Field(_q, 2.0),
        "tol": Field(_pos, 1e-6),
        "expect": Field(_expect, dict),
    },
    "singularity": {
        "map": Field(_dict(_MAP)),
        "zeta0": Field(_point, (0.0, 0.0)),
        "radii": Field(_list(_pos, 1)),
        "targets": Field(_list(_target), list),
        "annulus_targets": Field(_opt(_dict({"n": Field(_int, 8), "r_in": Field(_pos, 0.5), "r_out": Field(_pos, 2.0)})), None),
        "samples_per_shell": Field(_int, 4096),
        "jitter": Field(_bool, False),
        "scan": Field(_bool, True),
        "extension": Field(_bool, True),
        "extension_tol": Field(_pos, 1e-3),
        "omitted": Field(
            _opt(_dict({"segment": Field(_dict({"start": Field(_point), "end": Field(_point), "n": Field(_int, 50)})), "margin": Field(_pos)})),
            None,
        ),
        "expect": Field(_expect, dict),
    },
}

# commands that do not need a space section
_SPACELESS = {"singularity"}


@dataclass
class RunConfig:
    command: str
    params: dict
    space: dict | None = None
    image_space: dict | None = None
    seed: int = 0
    out: str | None = None
    source: str = "<inline>"
    raw: dict = field(default_factory=dict, repr=False)

    def echo(self) -> str:
        """Canonical YAML of the validated config (defaults filled)."""
        doc = {"command": self.command, "seed": self.seed}
        if self.space is not None:
            doc["space"] = self.space
        if self.image_space is not None:
            doc["image_space"] = self.image_space
        doc[self.command] = self.params
        return yaml.safe_dump(_plain(doc), sort_keys=True, default_flow_style=None)


def _plain(x):
    if isinstance(x, dict):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


def _space_section(v, path):
    return _tagged(SPACE_SCHEMAS)(v, path)


def parse_config(source: str, is_path: bool | None = None) -> RunConfig:
    """Validate a YAML config given as a path or as inline text."""
    if is_path is None:
        is_path = "\n" not in source and os.path.exists(source)
    if is_path:
        try:
            with open(source) as fh:
                text = fh.read()
        except OSError as exc:
            raise ConfigError(f"cannot read config {source!r}: {exc.strerror}") from None
        origin = source
    else:
        text, origin = source, "<inline>"
    data = _load_yaml(text)
    if not isinstance(data, dict):
        raise ConfigError("config must be a mapping with a 'command' key")
    if "command" not in data:
        raise ConfigError("command: missing required field")
    command = data["command"]
    if command not in COMMANDS:
        raise ConfigError(f"{_where('command', data, 'command')}: unknown command {command!r} (allowed: {', '.join(COMMANDS)})")
    top = {
        "command": Field(_str),
        "seed": Field(_int, 0),
        "out": Field(_opt(_str), None),
        "space": Field(_opt(_space_section), None),
        "image_space": Field(_opt(_space_section), None),
        command: Field(_dict(COMMAND_SCHEMAS[command]), None),
    }
    vals = _validate(data, top, "")
    if vals["space"] is None and command not in _SPACELESS:
        raise ConfigError("space: missing required field")
    params = vals[command] if vals[command] is not None else _validate({}, COMMAND_SCHEMAS[command], command)
    return RunConfig(command, params, vals["space"], vals["image_space"], vals["seed"], vals["out"], origin, data)


def load_config(path: str) -> RunConfig:
    return parse_config(path, is_path=True)
