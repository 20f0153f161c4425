from pathlib import Path

import pytest
import yaml

from mdiqkd.config import ConfigError, load, parse

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def test_defaults():
    cfg = parse({})
    assert cfg.settings.eps_total == 1e-10 and cfg.settings.eps_cor == 1e-15
    assert cfg.settings.channel.misalignment == 0.015
    assert cfg.space.a_d2 == cfg.space.b_d2 == 5e-4
    assert cfg.point is None and cfg.sweeps == []


@pytest.mark.parametrize("name", ["example.yaml", "fig3.yaml", "fig4.yaml", "coverage.yaml"])
def test_shipped_configs_load(name):
    cfg = load(CONFIGS / name)
    assert cfg.source.endswith(name)


def test_counts_path_relative_to_config():
    cfg = load(CONFIGS / "example.yaml")
    assert Path(cfg.counts) == CONFIGS / "counts_25km.csv"


def test_grids():
    cfg = parse({"sweeps": [
        {"name": "a", "axis": "distance", "grid": {"start": 0, "stop": 200, "step": 5}},
        {"name": "b", "axis": "N", "grid": {"log_start": 10, "log_stop": 15, "num": 6}},
        {"name": "c", "axis": "N", "grid": [1e11, 1e12]},
    ]})
    a, b, c = cfg.sweeps
    assert len(a.grid) == 41 and a.grid[-1] == 200
    assert b.grid[0] == pytest.approx(1e10) and b.grid[-1] == pytest.approx(1e15)
    assert c.grid == [1e11, 1e12]


@pytest.mark.parametrize("raw,match", [
    ({"bogus": 1}, "unknown top-level"),
    ({"channel": {"los": 0.2}}, "channel: unknown keys"),
    ({"channel": {"det_efficiency": 2.0}}, "det_efficiency"),
    ({"security": {"eps_total": 1e-20}}, "eps_cor"),
    ({"protocol": {"point": {"a_s": 0.3}}}, "needs exactly"),
    ({"protocol": {"N": "many"}}, "expected a number"),
    ({"protocol": {"N": 0.5}}, "N must be"),
    ({"estimator": "magic"}, "estimator"),
    ({"sweeps": [{"name": "x", "axis": "angle", "grid": [1]}]}, "axis"),
    ({"sweeps": [{"name": "x", "axis": "N", "grid": [1]}, {"name": "x", "axis": "N", "grid": [2]}]}, "unique"),
    ({"sweeps": [{"name": "../x", "axis": "N", "grid": [1]}]}, "alphanumeric"),
    ({"sweeps": [{"name": "x", "axis": "N", "grid": {"start": 0, "stop": 1, "step": 0}}]}, "step"),
    ({"coverage": {"levels": [1.5]}}, "levels"),
    ({"search": {"bounds": {"a_s": [0.5, 0.1]}}}, "empty range"),
    ({"search": {"budget": {"speed": 3}}}, "search.budget"),
    ([1, 2], "mapping"),
])
def test_rejections(raw, match):
    with pytest.raises(ConfigError, match=match):
        parse(raw)


def test_inadmissible_point_rejected():
    point = dict(a_s=0.2, a_d1=0.3, b_s=0.2, b_d1=0.03, q_signal=0.5, q_decoy1=0.3,
                 pz_signal=0.9, pz_decoy=0.3, n_k_fraction=0.99)
    with pytest.raises(ConfigError, match="not a valid"):
        parse({"protocol": {"point": point}})


def test_load_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load(tmp_path / "missing.yaml")
    bad = tmp_path / "bad.yaml"
    bad.write_text("a: [1, 2\n")
    with pytest.raises(ConfigError, match="invalid YAML"):
        load(bad)
    empty = tmp_path / "empty.yaml"
    empty.write_text("")
    assert load(empty).N == 1e13


def test_budget_overrides(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump({"search": {"budget": {"starts": 2, "compass_step": 0.5}}}))
    cfg = load(p)
    assert cfg.budget.starts == 2 and cfg.budget.compass_step == 0.5
