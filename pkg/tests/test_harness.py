import csv
import json

import numpy as np
import pytest

from census.harness import (BUILTINS, TRIAL_COLUMNS, Scenario, builtin, expand, load_scenario_file,
                            parse_speed, run_scenario, token_rule)
from census.world import InvalidParameter

SMALL = Scenario(name="small", variants=("local", "gradient"), n_list=(40,), repetitions=2, seed_base=3)


def test_token_rule():
    assert token_rule("sqrt", 500) == 22
    assert token_rule("log2", 4000) == 12
    assert token_rule("fixed", 500, 1) == 1
    with pytest.raises(InvalidParameter):
        token_rule("fixed", 5, 6)
    with pytest.raises(InvalidParameter):
        token_rule("cube", 5)


def test_fig2a_builtin():
    s = builtin("fig2a")
    assert s.variants == ("pure", "local", "gradient")
    assert s.n_list == (100, 200, 300, 400, 500)
    assert s.tokens == (1,) and s.densities == (10.0,)
    with pytest.raises(InvalidParameter):
        builtin("nope")


def test_every_builtin_expands():
    for s in BUILTINS.values():
        assert len(expand(s)) > 0


def test_expand_order_and_seeds():
    specs = expand(SMALL)
    assert [(sp.variant, sp.rep) for sp in specs] == [("local", 0), ("local", 1), ("gradient", 0), ("gradient", 1)]
    assert [sp.seed for sp in specs] == [3, 4, 5, 6]


def test_scenario_validation():
    with pytest.raises(InvalidParameter):
        Scenario(union_trials=5, repetitions=10, aggregate="count")
    with pytest.raises(InvalidParameter):
        Scenario(speeds=((4.0, 2.0),))
    with pytest.raises(InvalidParameter):
        Scenario(loss_probs=(1.0,))
    with pytest.raises(ValueError):
        Scenario(variants=("levy",))
    # an impossible cell anywhere in the grid fails before anything runs
    with pytest.raises(InvalidParameter):
        expand(Scenario(n_list=(40, 3), tokens=(5,)))


def test_parse_speed():
    assert parse_speed("2:4") == (2.0, 4.0)
    assert parse_speed("15") == (15.0, 15.0)
    with pytest.raises(InvalidParameter):
        parse_speed("fast")


def test_scenario_file(tmp_path):
    p = tmp_path / "s.cfg"
    p.write_text("name = filecase\nvariants = local, gradient  # both\nn_list = 40, 80\n"
                 "speeds = 2:4, 14:16\nreliable = yes\nrepetitions = 3\n", encoding="utf-8")
    s = load_scenario_file(p)
    assert s.name == "filecase"
    assert s.variants == ("local", "gradient")
    assert s.n_list == (40, 80)
    assert s.speeds == ((2.0, 4.0), (14.0, 16.0))
    assert s.reliable is True and s.repetitions == 3
    p.write_text("colour = blue\n", encoding="utf-8")
    with pytest.raises(InvalidParameter):
        load_scenario_file(p)


def read_rows(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def test_run_scenario_outputs(tmp_path, monkeypatch):
    monkeypatch.delenv("CENSUS_SEED", raising=False)
    s = Scenario(name="small", variants=("gradient",), n_list=(40,), repetitions=2, timeline=True)
    m = run_scenario(s, tmp_path)
    rows = read_rows(tmp_path / "trials.csv")
    assert list(rows[0].keys()) == list(TRIAL_COLUMNS)
    assert [r["seed"] for r in rows] == ["1", "2"]
    assert all(r["visited"] == "40" and r["final_total"] == "40" for r in rows)
    assert read_rows(tmp_path / "timeline.csv")
    assert read_rows(tmp_path / "theory.csv")
    saved = json.loads((tmp_path / "manifest.json").read_text(encoding="utf-8"))
    assert saved["seeds"] == m["seeds"] == [1, 2]
    assert set(saved["sha256"]) == {"trials", "theory", "timeline"}


def test_env_seed_override(tmp_path, monkeypatch):
    monkeypatch.setenv("CENSUS_SEED", "100")
    m = run_scenario(Scenario(n_list=(30,), repetitions=2), tmp_path)
    assert m["seeds"] == [100, 101]


def test_union_output(tmp_path, monkeypatch):
    monkeypatch.delenv("CENSUS_SEED", raising=False)
    s = Scenario(variants=("local",), n_list=(60,), repetitions=4, union_trials=2, stop_coverage=0.5,
                 aggregate="max")
    run_scenario(s, tmp_path)
    rows = read_rows(tmp_path / "union.csv")
    assert len(rows) == 2
    assert all(0.5 <= float(r["union_coverage"]) <= 1.0 for r in rows)
    assert float(rows[0]["theory"]) == pytest.approx(0.75)


@pytest.mark.slow
def test_union_coverage_matches_independent_theory():
    from census.harness import run_specs

    s = Scenario(variants=("local",), n_list=(150,), stop_coverage=0.6, repetitions=90, union_trials=3,
                 aggregate="max", seed_base=500)
    res = run_specs(expand(s))
    cov = []
    for g in range(30):
        seen = set()
        for r in res[3 * g:3 * g + 3]:
            seen.update(r["visited"])
        cov.append(len(seen) / 150)
    se = np.std(cov, ddof=1) / np.sqrt(len(cov))
    assert abs(np.mean(cov) - (1 - 0.4 ** 3)) <= 3 * se
