import json
import math
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bitround.generators import CflpRecipe, KnapsackRecipe
from bitround.harness import (
    AGGREGATE_FIELDS,
    ORIGINAL,
    RECORD_FIELDS,
    ConfigError,
    ExperimentConfig,
    InstanceSource,
    emit_report,
    format_loss_percent,
    load_config,
    load_config_file,
    records_csv,
    run_experiment,
    shifted_geometric_mean,
    write_outputs,
)
from bitround.model import save_opb
from oracles import mp_sgm
from programs import knapsack


@pytest.mark.parametrize("values, shift, expected", [
    ([1, 1, 1], 1, 1.0),
    ([0, 3], 1, 1.0),
    ([7], 1, 7.0),
    ([7], Fraction(1, 100), 7.0),
    ([2, 8], 0, 4.0),
    ([0, 0], 1, 0.0),
])
def test_sgm_examples(values, shift, expected):
    assert shifted_geometric_mean(values, shift) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("values, shift", [([], 1), ([-1, 2], 1), ([1], -1), ([0, 2], 0)])
def test_sgm_errors(values, shift):
    with pytest.raises(ValueError):
        shifted_geometric_mean(values, shift)


nonneg = st.floats(min_value=0, max_value=1e6, allow_nan=False)
shifts = st.sampled_from([Fraction(1), Fraction(1, 100), Fraction(10)])


@settings(max_examples=200)
@given(st.lists(nonneg, min_size=1, max_size=30), shifts)
def test_sgm_matches_high_precision(values, shift):
    got = shifted_geometric_mean(values, shift)
    ref = mp_sgm(values, shift)
    assert abs(got - ref) <= 1e-12 * abs(ref)
    assert min(values) * (1 - 1e-12) <= got <= max(values) * (1 + 1e-12)


@pytest.mark.parametrize("percent, text", [
    (0, "+0.00"),
    (0.341, "3.41e-1"),
    (0.00341, "3.41e-3"),
    (12.345, "12.35"),
    (1, "1.00"),
    (None, "n/a"),
])
def test_format_loss_percent(percent, text):
    assert format_loss_percent(percent) == text


def test_empty_report_is_header_only():
    assert emit_report([], format="csv") == ",".join(AGGREGATE_FIELDS) + "\n"
    assert records_csv([]) == ",".join(RECORD_FIELDS) + "\n"


def test_unknown_report_format():
    with pytest.raises(ValueError):
        emit_report([], format="xml")


def test_minimal_experiment(tmp_path):
    path = tmp_path / "kp.opb"
    save_opb(knapsack([13, 5, 9], [2, 1, 2], 3), path)
    cfg = ExperimentConfig((InstanceSource(path=str(path)),), levels=(ORIGINAL,), seeds=1)
    records, rows = run_experiment(cfg)
    assert len(records) == 1 and len(rows) == 1
    rec = records[0]
    assert rec.status == "optimal" and rec.value == 18 and rec.loss == 0
    assert rows[0].solved_count == 1 and rows[0].loss_sample_size == 1
    assert rows[0].sgm_loss_percent == 0.0


def test_zero_noise_generators_do_not_change():
    recipe = KnapsackRecipe(n=12, k=3, noise_sigma=0, seed=1)
    cfg = ExperimentConfig((InstanceSource(recipe=recipe),), levels=(ORIGINAL, 5, 3, 2), seeds=3)
    _, rows = run_experiment(cfg)
    assert len({r.sgm_generators for r in rows}) == 1
    assert rows[0].sgm_generators == pytest.approx(9.0)


def test_rounding_adds_generators_and_bounds_hold():
    recipe = KnapsackRecipe(n=16, k=2, noise_sigma=2**12, seed=3)
    cfg = ExperimentConfig((InstanceSource(recipe=recipe),), levels=(ORIGINAL, 2), seeds=3)
    records, rows = run_experiment(cfg)
    assert rows[1].sgm_generators > rows[0].sgm_generators
    assert all(r.bound_ok for r in records if r.level == "2")
    assert all(r.bound_ok is None for r in records if r.level == ORIGINAL)


def test_cflp_records():
    cfg = ExperimentConfig((InstanceSource(recipe=CflpRecipe(n=2, m=4, seed=0)),), levels=(ORIGINAL, 3), seeds=2)
    records, rows = run_experiment(cfg)
    assert len(records) == 4
    assert all(r.status == "optimal" for r in records)
    # minimization: the traditional bound is not applied
    assert all(r.bound_ok is None for r in records)
    assert [r.level for r in rows] == [ORIGINAL, "3"]


def test_missing_instance_is_recorded(tmp_path):
    cfg = ExperimentConfig((InstanceSource(path=str(tmp_path / "gone.opb")),), levels=(ORIGINAL, 2), seeds=1)
    records, rows = run_experiment(cfg)
    assert [r.status for r in records] == ["error", "error"]
    assert rows[0].sgm_generators is None and rows[0].solved_count == 0
    assert "unavailable" in emit_report(rows, records, "markdown")


def test_timing_off_is_reproducible(tmp_path):
    data = {
        "instance_sources": [{"generator": "knapsack", "n": 10, "k": 2, "seed": 4}],
        "levels": ["original", 3],
        "seeds": 2,
        "timing": "off",
    }
    cfg = load_config(data)
    for name in ("a", "b"):
        records, rows = run_experiment(cfg)
        write_outputs(cfg, records, rows, tmp_path / name)
    for f in ("records.csv", "aggregates.csv", "report.md"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    assert "n/a" in (tmp_path / "a" / "aggregates.csv").read_text()


def test_wall_timing_records_times():
    recipe = KnapsackRecipe(n=8, k=2, seed=2)
    cfg = ExperimentConfig((InstanceSource(recipe=recipe),), levels=(ORIGINAL, 3), seeds=1, timing="wall")
    records, rows = run_experiment(cfg)
    assert all(r.time_s is not None and r.time_s >= 0 for r in records)
    assert all(r.sgm_time is not None for r in rows)
    default = ExperimentConfig((InstanceSource(recipe=recipe),), levels=(ORIGINAL,), seeds=1)
    assert run_experiment(default)[0][0].time_s is None


def test_load_config_paths_are_relative(tmp_path):
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps({"instance_sources": ["inst/a.opb"], "seeds": 2,
                                    "sgm_shift_loss": 0.01, "budget": {"max_nodes": 50}}))
    cfg = load_config_file(cfg_path)
    assert cfg.instance_sources[0].path == str(tmp_path / "inst" / "a.opb")
    assert cfg.seeds == 2 and cfg.budget.max_nodes == 50
    assert cfg.sgm_shift_loss == Fraction(1, 100)
    assert cfg.levels == (ORIGINAL, 5, 4, 3, 2)


@pytest.mark.parametrize("data", [
    {},
    {"instance_sources": []},
    {"instance_sources": ["a.opb"], "levels": []},
    {"instance_sources": ["a.opb"], "levels": [-1]},
    {"instance_sources": ["a.opb"], "seeds": 0},
    {"instance_sources": ["a.opb"], "colour": "red"},
    {"instance_sources": [{"generator": "tsp"}]},
    {"instance_sources": [{"generator": "knapsack", "n": 3, "k": 5}]},
    {"instance_sources": [{"name": "x"}]},
    {"instance_sources": ["a.opb"], "timing": "cpu"},
    {"instance_sources": ["a.opb"], "budget": {"max_nodes": 0}},
    [],
])
def test_config_errors(data):
    with pytest.raises(ConfigError):
        load_config(data)


def test_config_file_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_config_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config_file(bad)


def test_markdown_report_mentions_settings():
    cfg = ExperimentConfig((InstanceSource(recipe=KnapsackRecipe(n=6, k=2)),), levels=(ORIGINAL,), seeds=1,
                           timing="off")
    records, rows = run_experiment(cfg)
    text = emit_report(rows, records, "markdown", cfg)
    assert "| level | # Gen. | % Obj. Loss |" in text
    assert "symmetry budget" in text
    assert math.isfinite(rows[0].sgm_generators)
