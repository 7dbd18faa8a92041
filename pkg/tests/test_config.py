import textwrap

import pytest
import yaml

from ringmod.config import COMMANDS, ConfigError, parse_config

MINIMAL = """
command: modulus
space: {kind: graph, n: 3, edges: [[0, 1], [1, 2]]}
modulus:
  family: {kind: explicit, paths: [[0, 1, 2]]}
"""


def test_minimal_modulus_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.command == "modulus" and cfg.seed == 0 and cfg.out is None
    assert cfg.params["p"] == 2.0
    assert cfg.params["tol"] == 1e-6
    assert cfg.params["method"] == "auto"
    assert cfg.params["expect"] == {}
    assert cfg.space["lengths"] is None and cfg.space["alpha"] == 2.0
    again = parse_config(cfg.echo())
    assert again.params == cfg.params and again.space == cfg.space


def test_config_from_path(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text(MINIMAL)
    cfg = parse_config(str(path))
    assert cfg.source == str(path)
    with pytest.raises(ConfigError, match="cannot read"):
        parse_config(str(tmp_path / "missing.yaml"), is_path=True)


@pytest.mark.parametrize("p", [1, 1.0, 0.5, ".inf"])
def test_unsupported_exponent_rejected(p):
    text = MINIMAL + f"  p: {p}\n"
    with pytest.raises(ConfigError, match=r"p must be (finite and )?> 1"):
        parse_config(text)


def test_duplicate_key_names_both_lines():
    text = MINIMAL + "  tol: 1.0e-6\n  tol: 1.0e-7\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    msg = str(exc.value)
    assert "duplicate key 'tol'" in msg
    assert "line 6" in msg and "line 7" in msg


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config(MINIMAL + "  colour: red\n")
    with pytest.raises(ConfigError, match="space.*radius"):
        parse_config(MINIMAL.replace("n: 3,", "n: 3, radius: 2,"))
    with pytest.raises(ConfigError, match="unknown command"):
        parse_config("command: plot\n")


def test_type_and_required_diagnostics():
    with pytest.raises(ConfigError, match="modulus.tol"):
        parse_config(MINIMAL + "  tol: small\n")
    with pytest.raises(ConfigError, match="family"):
        parse_config("command: modulus\nspace: {kind: lattice, n: 3}\n")
    with pytest.raises(ConfigError, match="space"):
        parse_config("command: fmo\nfmo: {field: {kind: constant}, x0: [0, 0]}\n")
    with pytest.raises(ConfigError, match="line 3, column 1"):
        parse_config("command: modulus\nspace: [1, 2\n")


def test_singularity_needs_no_space():
    cfg = parse_config("command: singularity\nsingularity: {map: {name: sinc}, radii: [0.1, 0.05], targets: [inf, [1, 0]]}\n")
    assert cfg.space is None
    assert cfg.params["targets"] == ["inf", (1.0, 0.0)]
    assert cfg.params["samples_per_shell"] == 4096


@pytest.mark.parametrize("name", COMMANDS)
def test_every_command_has_a_schema(name):
    # an empty section must fail only on required fields, never crash
    with pytest.raises(ConfigError):
        parse_config(f"command: {name}\nspace: {{kind: lattice, n: 3}}\n{name}: {{bogus: 1}}\n")


def test_shipped_configs_parse():
    import glob
    import os

    root = os.path.join(os.path.dirname(__file__), "..", "configs")
    paths = sorted(glob.glob(os.path.join(root, "*", "*.yaml")))
    assert len(paths) >= 9
    for path in paths:
        cfg = parse_config(path, is_path=True)
        with open(path) as fh:
            assert yaml.safe_load(fh)["command"] == cfg.command


def test_expect_shorthands():
    text = textwrap.dedent(
        """
        command: fmo
        space: {kind: lattice, n: 3}
        fmo:
          field: {kind: constant}
          x0: [1, 1]
          expect:
            fmo_consistent: true
            limsup: 0.0
            rate: {max: 0.1}
        """
    )
    exp = parse_config(text).params["expect"]
    assert exp["fmo_consistent"] == {"equals": True}
    assert exp["limsup"] == {"equals": 0.0, "tol": 0.0}
    assert exp["rate"]["max"] == 0.1 and exp["rate"]["min"] is None
