import json
import math

import pytest

from bicindex.cli import (
    BUNDLED,
    CONFIG_SCHEMA,
    bundled_config_path,
    dumps,
    load_config,
    main,
    parse_grid,
    validate_config,
)
from bicindex.errors import ConfigInvalid
from hypothesis import given, settings
from hypothesis import strategies as st

CIRCLE = {"family": "circle", "eps_background": 1.0, "eps_inclusion": 10.0, "base_radius": 0.6 * math.pi}
VACUUM = {"family": "slab", "eps_background": 1.0, "layers": []}


def _write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def _error(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_configs_validate(name):
    cfg = load_config(f"{name}.json")
    validate_config(cfg, "probe")
    assert bundled_config_path(name).exists()


@settings(max_examples=200)
@given(st.floats(allow_nan=False, allow_infinity=False))
def test_float_text_round_trips(x):
    assert json.loads(dumps({"x": x}))["x"] == x


def test_dumps_layout():
    text = dumps({"a": [1, 2.5], "b": {"c": None, "d": [[0.1, 0.2]]}, "e": True})
    assert json.loads(text) == {"a": [1, 2.5], "b": {"c": None, "d": [[0.1, 0.2]]}, "e": True}
    assert "0.10000000000000001" in text


def test_grid_parsing():
    assert parse_grid("64x128") == (64, 128)
    for bad in ("64", "axb", "2x2"):
        with pytest.raises(ConfigInvalid):
            parse_grid(bad)


def test_smatrix_vacuum(tmp_path, capsys):
    cfg = {"structure": VACUUM, "grid": [32, 32], "point": {"beta": 0.0, "k": 0.5}}
    out = tmp_path / "run"
    assert main(["smatrix", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["s"][0][1][0] == pytest.approx(-1.0, abs=1e-12)
    assert result["unitarity_defect"] < 1e-12
    assert (out / "samples.csv").read_text().startswith("row,col,re_s,im_s")
    assert json.loads((out / "config.json").read_text())["point"] == {"beta": 0.0, "k": 0.5}


def test_smatrix_defect_decreases_with_resolution(tmp_path):
    cfg = {"structure": CIRCLE, "point": {"beta": 0.0, "k": 0.45}}
    path = _write(tmp_path, cfg)
    s = {}
    for n in (32, 64, 128):
        out = tmp_path / f"g{n}"
        assert main(["smatrix", "--config", path, "--out", str(out), "--grid", f"{n}x{n}"]) == 0
        s[n] = json.loads((out / "result.json").read_text())["s"]
    diff = lambda a, b: max(abs(complex(*x) - complex(*y)) for ra, rb in zip(a, b) for x, y in zip(ra, rb))  # noqa: E731
    assert diff(s[32], s[64]) / diff(s[64], s[128]) > 3.0


def test_output_is_deterministic(tmp_path):
    cfg = {"structure": CIRCLE, "grid": [32, 32], "point": {"beta": 0.1, "k": 0.5}}
    path = _write(tmp_path, cfg)
    for run in ("a", "b"):
        assert main(["smatrix", "--config", path, "--out", str(tmp_path / run)]) == 0
    for name in ("config.json", "result.json", "samples.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


@pytest.mark.parametrize(
    "cfg",
    [
        {"structure": CIRCLE, "point": {"beta": 0.0, "k": 0.5}, "extra": 1},
        {"structure": {**CIRCLE, "radius": 1.0}, "point": {"beta": 0.0, "k": 0.5}},
        {"structure": CIRCLE, "point": {"beta": 0.0}},
        {"structure": CIRCLE},
        {"structure": CIRCLE, "point": {"beta": 0.0, "k": 0.5}, "grid": [32]},
    ],
)
def test_malformed_config_exits_2(tmp_path, capsys, cfg):
    assert main(["smatrix", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["error"] == "config-invalid"


def test_unparseable_and_missing_files(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["probe", "--config", str(bad)]) == 2
    assert main(["probe", "--config", str(tmp_path / "nope.json")]) == 2
    assert main(["bogus"]) == 2


def test_case4_on_asymmetric_structure_is_config_invalid(tmp_path, capsys):
    spec = {**CIRCLE, "family": "perturbed_circle"}
    cfg = {"structure": spec, "grid": [32, 32], "probe": {"beta_c": 0.2, "k_seed": 0.6, "r": 0.01, "case": "IV"}}
    assert main(["probe", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["error"] == "config-invalid"


def test_probe_example1(tmp_path, capsys):
    out = tmp_path / "ex1"
    assert main(["probe", "--config", "example1.json", "--grid", "128x128", "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    assert result["indices"] == [-1, -1, -1, -1]
    rows = (out / "samples.csv").read_text().splitlines()
    assert rows[0] == "r,n,beta,delta,k,re_a_hat,im_a_hat" and len(rows) == 9
    assert "index -1" in capsys.readouterr().out


def test_derivs_without_point_or_probe(tmp_path, capsys):
    cfg = {"structure": CIRCLE, "derivs": {"case": "IV"}}
    assert main(["derivs", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 2
    assert _error(capsys)["error"] == "config-invalid"


def test_derivs_not_a_bic(tmp_path, capsys):
    cfg = {"structure": CIRCLE, "grid": [64, 64], "point": {"beta": 0.1, "k": 0.5}, "derivs": {"case": "IV"}}
    assert main(["derivs", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "o")]) == 5
    err = _error(capsys)
    assert err["error"] == "not-a-bic" and "localize" in err["details"]["hint"]


def test_derivs_symmetry_point(tmp_path, capsys):
    spec = {**CIRCLE, "family": "perturbed_circle", "bump_angle": math.pi / 2}
    cfg = {
        "structure": spec,
        "grid": [128, 128],
        "probe": {"beta_c": 0.0, "k_seed": 0.4414, "r": 0.004, "case": "IV"},
        "localize": {"depth": 2, "polish": 0},
        "derivs": {"case": "II"},
    }
    out = tmp_path / "d"
    assert main(["derivs", "--config", _write(tmp_path, cfg), "--out", str(out)]) == 0
    result = json.loads((out / "result.json").read_text())
    det = abs(complex(*result["mu_det"]))
    assert det < 1e-4 * result["mu_scale"]
    assert result["index_prediction"] == 0


def test_derivs_example2_finite_difference(tmp_path, capsys):
    spec = {**CIRCLE, "family": "perturbed_circle"}
    cfg = {
        "structure": spec,
        "grid": [128, 128],
        "probe": {"beta_c": 0.2206, "k_seed": 0.6173, "r": 0.004, "case": "IV"},
        "derivs": {"case": "III", "fd_check": True},
    }
    out = tmp_path / "d2"
    assert main(["derivs", "--config", _write(tmp_path, cfg), "--out", str(out), "--threads", "2"]) == 0
    checks = json.loads((out / "result.json").read_text())["checks"]["finite_difference"]
    assert all(v["relative_error"] <= 1e-3 for v in checks.values())


def test_schema_rejects_unknown_keys_everywhere():
    def walk(node):
        if node.get("type") == "object":
            assert node.get("additionalProperties") is False
            for child in node.get("properties", {}).values():
                walk(child)

    walk(CONFIG_SCHEMA)
