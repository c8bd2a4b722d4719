import json
import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from hima.cli import main
from hima.harness import mri_like_mask, simulate_ar1
from hima.io import RunConfig, load_run_config, read_matrix, read_trace, write_incomplete, write_matrix
from hima.types import ValidationError

from conftest import make_matrix


def write_config(path, **kw):
    path.write_text(json.dumps(kw))
    return path


def synthetic_csv(path, n=20, p=12, seed=0, rate=0.15):
    rng = np.random.default_rng(seed)
    Y = simulate_ar1(n, p, 0.6, rng)
    mask = rng.random((n, p)) > rate
    mask[:3] = True
    m = make_matrix(np.where(mask, Y, np.nan), mask)
    write_incomplete(path, m)
    return m


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)), elements=finite), st.data())
def test_matrix_round_trip_is_exact(tmp_path, values, data):
    mask = data.draw(arrays(bool, values.shape))
    m = make_matrix(np.where(mask, values, np.nan), mask)
    path = tmp_path / "m.csv"
    write_incomplete(path, m)
    back = read_matrix(path)
    np.testing.assert_array_equal(back.mask, mask)
    np.testing.assert_array_equal(back.values[mask], values[mask])
    assert back.row_ids == m.row_ids and back.col_ids == m.col_ids
    assert b"\r" not in path.read_bytes()


def test_malformed_matrix_rejected(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("row_id,a,b\nr1,1,2\nr2,1\n")
    with pytest.raises(ValidationError, match="expected 3 fields"):
        read_matrix(bad)
    bad.write_text("row_id,a\nr1,x\n")
    with pytest.raises(ValidationError, match="cannot parse"):
        read_matrix(bad)


def test_config_rejects_unknown_keys_and_resolves_paths(tmp_path):
    cfg = write_config(tmp_path / "c.json", input="in.csv", output_dir="out", M=2, bogus=1)
    with pytest.raises(ValidationError, match="bogus"):
        load_run_config(cfg)
    cfg = write_config(tmp_path / "c.json", input="in.csv", output_dir="out")
    rc = load_run_config(cfg)
    assert rc.input == str(tmp_path / "in.csv")
    with pytest.raises(ValidationError):
        RunConfig(input="a", output_dir="b", baselines=["mice"])


def test_impute_end_to_end(tmp_path, capsys):
    synthetic_csv(tmp_path / "in.csv")
    cfg = write_config(
        tmp_path / "c.json", input="in.csv", output_dir="out", M=3, T=4, n_tracked=4, baselines=["mean", "dense_gibbs"]
    )
    assert main(["impute", "--config", str(cfg)]) == 0
    out = tmp_path / "out"
    names = {p.name for p in out.iterdir()}
    assert {"imputed_001.csv", "imputed_003.csv", "trace.csv", "prior_history.csv", "timing.csv"} <= names
    assert {"run_manifest.json", "baseline_mean.csv", "gibbs_001.csv"} <= names
    manifest = json.loads((out / "run_manifest.json").read_text())
    assert manifest["seed"] == 0 and len(manifest["tracked_columns"]) == 4
    assert {"numpy", "scipy", "hima"} <= set(manifest["versions"])
    trace, cols = read_trace(out / "trace.csv")
    assert len(trace) == 3 * 4 * 4


def test_region_sized_impute(tmp_path):
    rng = np.random.default_rng(1)
    n, p = 58, 622
    mask = mri_like_mask(n, p, rng)
    write_incomplete(tmp_path / "in.csv", make_matrix(np.where(mask, simulate_ar1(n, p, 0.5, rng), np.nan), mask))
    cfg = write_config(tmp_path / "c.json", input="in.csv", output_dir="out", M=15, T=20)
    assert main(["impute", "--config", str(cfg)]) == 0
    sets = sorted((tmp_path / "out").glob("imputed_*.csv"))
    assert len(sets) == 15
    first = read_matrix(sets[0])
    assert first.mask.all()
    manifest = json.loads((tmp_path / "out" / "run_manifest.json").read_text())
    assert manifest["shape"]["p_imputed"] == first.p < p


def test_fully_observed_warns(tmp_path, caplog):
    m = make_matrix(np.random.default_rng(2).normal(size=(6, 3)))
    write_incomplete(tmp_path / "in.csv", m)
    cfg = write_config(tmp_path / "c.json", input="in.csv", output_dir="out", M=2, T=2)
    with caplog.at_level(logging.WARNING, logger="hima"):
        assert main(["impute", "--config", str(cfg)]) == 0
    assert "no missing cells" in caplog.text
    for f in sorted((tmp_path / "out").glob("imputed_*.csv")):
        np.testing.assert_array_equal(read_matrix(f).values, m.values)


def test_impute_exit_codes(tmp_path, capsys):
    cfg = write_config(tmp_path / "c.json", input="nope.csv", output_dir="out")
    assert main(["impute", "--config", str(cfg)]) == 3
    assert main(["impute", "--config", str(tmp_path / "missing.json")]) == 3
    cfg = write_config(tmp_path / "c.json", input="nope.csv", output_dir="out", colour="red")
    assert main(["impute", "--config", str(cfg)]) == 1
    write_incomplete(tmp_path / "flat.csv", make_matrix([[1.0, 2.0], [1.0, 3.0], [np.nan, 4.0]]))
    cfg = write_config(tmp_path / "c.json", input="flat.csv", output_dir="out")
    assert main(["impute", "--config", str(cfg)]) == 1
    assert "zero observed variance" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, monkeypatch):
    import hima.cli as cli
    from hima.types import NonPositiveDefinite

    def boom(*a, **k):
        raise NonPositiveDefinite("chain 1, iteration 1: row 0: synthetic")

    monkeypatch.setattr(cli, "impute", boom)
    synthetic_csv(tmp_path / "in.csv")
    cfg = write_config(tmp_path / "c.json", input="in.csv", output_dir="out")
    assert main(["impute", "--config", str(cfg)]) == 2


def test_mask_command(tmp_path, capsys):
    m = make_matrix(np.random.default_rng(3).normal(size=(58, 400)))
    write_incomplete(tmp_path / "full.csv", m)
    assert main(["mask", "--input", str(tmp_path / "full.csv"), "--t-max", "8", "--seed", "5", "--out", str(tmp_path / "mk")]) == 0
    summary = json.loads((tmp_path / "mk" / "mask_summary.json").read_text())
    assert 4.0 <= summary["mean_removed_per_column"] <= 5.0
    assert "per column" in capsys.readouterr().out
    for name in ("masked.csv", "mask_plan.csv", "truth.csv"):
        assert (tmp_path / "mk" / name).exists()
    assert main(["mask", "--input", str(tmp_path / "full.csv"), "--t-max", "1", "--out", str(tmp_path / "one")]) == 0
    assert json.loads((tmp_path / "one" / "mask_summary.json").read_text())["mean_removed_per_column"] == 1.0


def test_mask_short_column_exit_1(tmp_path, capsys):
    vals = np.random.default_rng(4).normal(size=(10, 3))
    vals[:4, 2] = np.nan
    write_incomplete(tmp_path / "in.csv", make_matrix(vals))
    assert main(["mask", "--input", str(tmp_path / "in.csv"), "--t-max", "6", "--out", str(tmp_path / "o")]) == 1
    assert "v2" in capsys.readouterr().err


def test_full_pipeline_eval_and_diag(tmp_path):
    m = make_matrix(simulate_ar1(40, 15, 0.8, np.random.default_rng(5)))
    write_incomplete(tmp_path / "full.csv", m)
    assert main(["mask", "--input", str(tmp_path / "full.csv"), "--t-max", "4", "--seed", "1", "--out", str(tmp_path / "mk")]) == 0
    cfg = write_config(tmp_path / "c.json", input="mk/masked.csv", output_dir="run", M=4, T=14, n_tracked=5)
    assert main(["impute", "--config", str(cfg)]) == 0
    args = ["eval", "--imputed", str(tmp_path / "run"), "--truth", str(tmp_path / "mk" / "truth.csv")]
    assert main(args + ["--original", str(tmp_path / "full.csv"), "--out", str(tmp_path / "ev")]) == 0
    metrics = json.loads((tmp_path / "ev" / "metrics.json").read_text())
    assert set(metrics["methods"]) == {"hima", "mean"}
    assert metrics["methods"]["hima"]["n_sets"] == 4 and metrics["methods"]["hima"]["wMSE_sd"] > 0
    assert (tmp_path / "ev" / "metrics.csv").read_text().count("\n") == 3
    assert main(["diag", "--trace", str(tmp_path / "run" / "trace.csv"), "--burn-in", "10", "--out", str(tmp_path / "dg")]) == 0
    lines = (tmp_path / "dg" / "stationarity.csv").read_text().splitlines()
    assert lines[0] == "column_id,slope,t_stat,verdict" and len(lines) == 6
    assert (tmp_path / "dg" / "plotdata.csv").exists()


def test_eval_worked_example_and_empty_truth(tmp_path):
    orig = make_matrix([[0.0], [0.0], [2.0], [-2.0]])  # column sd 1.63...
    sd = float(np.std([0.0, 0.0, 2.0, -2.0], ddof=1))
    write_incomplete(tmp_path / "orig.csv", orig)
    imp = tmp_path / "imp"
    imp.mkdir()
    write_matrix(imp / "imputed_001.csv", np.array([[0.5 * sd], [1.5 * sd], [2.0], [-2.0]]), orig.row_ids, orig.col_ids)
    (tmp_path / "truth.csv").write_text("column_id,row_id,value\nv0,s0,0\nv0,s1,0\n")
    args = ["eval", "--imputed", str(imp), "--original", str(tmp_path / "orig.csv"), "--out", str(tmp_path / "ev")]
    assert main(args + ["--truth", str(tmp_path / "truth.csv")]) == 0
    assert json.loads((tmp_path / "ev" / "metrics.json").read_text())["methods"]["hima"]["wMAE_mean"] == pytest.approx(1.0)
    (tmp_path / "empty.csv").write_text("column_id,row_id,value\n")
    assert main(args + ["--truth", str(tmp_path / "empty.csv")]) == 1


def test_diag_constant_and_trend(tmp_path):
    rows = ["chain,iteration,column_id,mean"]
    for t in range(1, 21):
        rows += [f"1,{t},flat,2.5", f"1,{t},rising,{0.1 * t}"]
    (tmp_path / "trace.csv").write_text("\n".join(rows) + "\n")
    assert main(["diag", "--trace", str(tmp_path / "trace.csv"), "--burn-in", "10", "--out", str(tmp_path / "d")]) == 0
    verdicts = dict(line.split(",")[::3] for line in (tmp_path / "d" / "stationarity.csv").read_text().splitlines()[1:])
    assert verdicts == {"flat": "stationary", "rising": "non-stationary"}
    (tmp_path / "bad.csv").write_text("chain,iteration,column_id,mean\nx,1,a,2\n")
    assert main(["diag", "--trace", str(tmp_path / "bad.csv"), "--out", str(tmp_path / "d")]) == 1
