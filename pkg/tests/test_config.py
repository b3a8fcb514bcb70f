import pytest
import yaml

from brokenpde.config import config_from_dict, load_config
from brokenpde.errors import ConfigError

BASE = {
    "grid": {"bounds": [[-1, 1], [-1, 1]], "n": 33},
    "coefficients": {"s": 0, "a_plus": "2", "a_minus": "1", "lambda": 0.4},
    "boundary": "x",
    "solver": {"tol_picard": 1e-10, "max_picard": 50},
    "analysis": {"z": [0.1, 0.0], "r_fit": 0.2},
}


def _with(section, key, value):
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in BASE.items()}
    data[section][key] = value
    return data


def test_round_trip(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text(yaml.safe_dump(BASE))
    cfg = load_config(path)
    assert cfg.grid_spec().n == 33
    assert cfg.model().lam == 0.4
    assert cfg.analysis.z == (0.1, 0.0)
    prob = cfg.problem()
    assert prob.max_picard == 50
    assert cfg.digest() == load_config(path).digest()


@pytest.mark.parametrize(
    "section, key",
    [("grid", "spacing"), ("coefficients", "beta"), ("solver", "tolerance"), ("analysis", "radius")],
)
def test_unknown_key_named(section, key):
    with pytest.raises(ConfigError, match=f"{section}.{key}"):
        config_from_dict(_with(section, key, 1))


def test_unknown_top_level_key():
    data = dict(BASE, extras={"a": 1})
    with pytest.raises(ConfigError, match="extras"):
        config_from_dict(data)


@pytest.mark.parametrize(
    "section, key, value",
    [
        ("coefficients", "a_plus", "2 +"),
        ("coefficients", "lambda", 2.0),
        ("solver", "theta", 0.0),
        ("grid", "n", 5),
    ],
)
def test_invalid_values(section, key, value):
    with pytest.raises(ConfigError):
        config_from_dict(_with(section, key, value))


def test_bad_boundary_expression():
    with pytest.raises(ConfigError):
        config_from_dict(dict(BASE, boundary="tan(x)"))


def test_missing_sections():
    with pytest.raises(ConfigError, match="coefficients"):
        config_from_dict({"grid": {"n": 33}})


def test_malformed_yaml(tmp_path):
    path = tmp_path / "bad.yaml"
    path.write_text("grid: [n: 33\n")
    with pytest.raises(ConfigError):
        load_config(path)


def test_checked_in_configs_load():
    from pathlib import Path

    paths = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))
    assert paths
    for p in paths:
        load_config(p)
