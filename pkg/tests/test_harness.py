import csv
import json
import logging

import numpy as np
import pytest

from konmf.data import Dataset, DataMatrix, load_csv, two_rings, write_csv
from konmf.errors import ConvergenceError, KonmfError, ValidationError
from konmf.factorize import HyperParams
from konmf.harness import (ExperimentConfig, SigmaGrid, dump_json, emit_results, grid_search,
                           holdout_protocol, multi_run, run_experiment)

FAST = HyperParams(max_iter=60)


@pytest.fixture(scope="module")
def rings():
    return two_rings(40, 1.0, 5.0, seed=0)


def test_sigma_grid():
    g = SigmaGrid.parse("0.1:4:0.1")
    vals = g.values()
    assert len(vals) == 40 and vals[0] == 0.1 and vals[-1] == 4.0 and vals[2] == 0.3
    assert SigmaGrid.parse("1000:10000:250").values()[-1] == 10000
    assert len(SigmaGrid.parse([10, 100, 10]).values()) == 10
    assert SigmaGrid.parse({"lo": 1, "hi": 1, "step": 1}).values() == [1.0]
    for bad in ("1:2", "a:b:c", "2:1:0.1", "1:2:0", "-1:2:1"):
        with pytest.raises(ValidationError):
            SigmaGrid.parse(bad)


def test_config_validation():
    with pytest.raises(ValidationError):
        ExperimentConfig(variant="ncut")
    with pytest.raises(ValidationError):
        ExperimentConfig(variant="ncut", sigma=1.0, sigma_grid="1:2:1")
    with pytest.raises(ValidationError):
        ExperimentConfig(variant="ncut", kernel="linear", sigma_grid="1:2:1")
    with pytest.raises(ValidationError):
        ExperimentConfig(variant="ncut", sigma=1.0, restarts=0)
    ExperimentConfig(variant="rcut", kernel="linear")


def test_multi_run_basic(rings):
    cfg = ExperimentConfig(variant="ncut", sigma=2.0, restarts=5, base_seed=10, hp=FAST)
    s = multi_run(cfg, rings)
    assert [r.seed for r in s.runs] == [10, 11, 12, 13, 14]
    assert s.mean_acc == pytest.approx(np.mean([r.accuracy for r in s.runs]))
    assert set(s.acc_by_prefix) == {2, 4}
    assert s.acc_by_prefix[2] == pytest.approx(np.mean([r.accuracy for r in s.runs[:2]]))
    objs = [r.objective for r in s.runs]
    assert s.best_index == int(np.argmin(objs))
    assert all(0 <= r.accuracy <= 1 for r in s.runs)


def test_single_restart_mean_equals_run(rings):
    s = multi_run(ExperimentConfig(variant="rcut", sigma=2.0, restarts=1, hp=FAST), rings)
    assert s.mean_acc == s.runs[0].accuracy and s.acc_by_prefix == {}


def test_multi_run_deterministic_and_chunk_independent(rings):
    cfg = ExperimentConfig(variant="kognmf", sigma=2.0, restarts=40, hp=FAST)
    a, b = multi_run(cfg, rings), multi_run(cfg, rings)
    strip = lambda s: [(r.seed, r.accuracy, r.objective, r.iterations, r.orthogonality) for r in s.runs]
    assert strip(a) == strip(b)
    c = multi_run(ExperimentConfig(variant="kognmf", sigma=2.0, restarts=40, hp=FAST, workers=2), rings)
    assert strip(a) == strip(c)


def test_prefix_means_up_to_256():
    ds = two_rings(6, seed=2)
    s = multi_run(ExperimentConfig(variant="rcut", sigma=1.0, restarts=300, hp=HyperParams(max_iter=3)), ds)
    assert sorted(s.acc_by_prefix) == [2, 4, 8, 16, 32, 64, 128, 256]


def test_multi_run_without_labels(rings):
    ds = Dataset(x=rings.x)
    s = multi_run(ExperimentConfig(variant="rcut", k=2, sigma=2.0, restarts=3, hp=FAST), ds)
    assert s.mean_acc is None and all(r.accuracy is None for r in s.runs)
    with pytest.raises(ValidationError):
        multi_run(ExperimentConfig(variant="rcut", sigma=2.0, restarts=3, hp=FAST), ds)
    with pytest.raises(ValidationError):
        grid_search(ExperimentConfig(variant="rcut", k=2, sigma_grid="1:2:1", restarts=2, hp=FAST), ds)


def test_grid_search(rings, caplog):
    cfg = ExperimentConfig(variant="ncut", sigma_grid="0.5:3.5:1.0", restarts=8, hp=FAST)
    with caplog.at_level(logging.WARNING):
        g = grid_search(cfg, rings)
    assert "supervised" in caplog.text
    assert [row["sigma"] for row in g.table] == [0.5, 1.5, 2.5, 3.5]
    best = max(row["mean_acc"] for row in g.table)
    first = next(row["sigma"] for row in g.table if row["mean_acc"] == best)
    assert g.best_sigma == first and g.best_mean_acc == best
    single = grid_search(ExperimentConfig(variant="ncut", sigma_grid="1.5:1.5:1", restarts=8, hp=FAST), rings)
    assert single.best_sigma == 1.5 and len(single.table) == 1
    assert single.best_mean_acc == pytest.approx(g.table[1]["mean_acc"])


def test_grid_search_ties_prefer_smaller_sigma():
    # with a single restart per point and k = n every sigma scores accuracy 1
    ds = Dataset(x=DataMatrix(np.array([[0.0, 10.0]])), truth=np.array([0, 1]))
    g = grid_search(ExperimentConfig(variant="rcut", sigma_grid="1:3:1", restarts=1, hp=FAST), ds)
    assert len(set(row["mean_acc"] for row in g.table)) == 1
    assert g.best_sigma == 1.0


def test_holdout_duplicated_dataset_is_symmetric(rings):
    x = rings.x.matrix
    dup = Dataset(x=DataMatrix(np.hstack([x, x])), truth=np.concatenate([rings.truth, rings.truth]))
    # every point appears twice, so both halves sample the same distribution
    cfg = ExperimentConfig(variant="ncut", sigma=2.0, restarts=16, hp=FAST)
    rep = holdout_protocol(cfg, dup)
    assert rep.tuned_sigma == 2.0
    assert abs(rep.held_out_mean_acc - rep.train_mean_acc) < 0.1
    again = holdout_protocol(cfg, dup)
    assert again.held_out_mean_acc == rep.held_out_mean_acc


def test_holdout_with_grid(rings):
    cfg = ExperimentConfig(variant="ncut", sigma_grid="1:3:1", restarts=4, hp=FAST)
    rep = holdout_protocol(cfg, rings)
    assert rep.tuned_sigma in (1.0, 2.0, 3.0)
    assert len(rep.held.runs) == 4 and rep.grid is not None


def test_linear_kernel_run(rings):
    from konmf.data import shift_nonneg
    s = multi_run(ExperimentConfig(variant="ncut", kernel="linear", restarts=4, hp=FAST), shift_nonneg(rings))
    assert all(r.sigma is None for r in s.runs)
    with pytest.raises(ValidationError):
        multi_run(ExperimentConfig(variant="ncut", kernel="linear", restarts=2, hp=FAST), rings)


def test_run_error_names_run_and_seed():
    ds = Dataset(x=DataMatrix(np.array([[0.0, 1e-300, 3.0]])), truth=np.array([0, 1, 1]))
    cfg = ExperimentConfig(variant="rcut", kernel="linear", restarts=3, base_seed=5,
                           hp=HyperParams(alpha=1e308, max_iter=5))
    with pytest.raises(ConvergenceError, match=r"run \d \(seed \d\)"):
        with np.errstate(all="ignore"):
            multi_run(cfg, ds)


def test_emit_results(rings, tmp_path):
    cfg = ExperimentConfig(variant="ncut", sigma_grid="1:2:1", restarts=6, hp=FAST)
    g = grid_search(cfg, rings)
    files = {p.name for p in emit_results(g, rings, cfg, tmp_path)}
    assert files == {"runs.csv", "summary.json", "trace_best.csv", "grid.csv", "scatter.svg"}
    with open(tmp_path / "runs.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["seed", "sigma", "acc", "objective", "iters", "orthogonality", "ms"]
    assert len(rows) == 1 + 6
    text = (tmp_path / "summary.json").read_text()
    assert dump_json(json.loads(text)) == text
    summary = json.loads(text)
    assert summary["best_sigma"] == g.best_sigma
    assert '"ms"' not in text
    trace = list(csv.reader(open(tmp_path / "trace_best.csv")))
    assert len(trace) == 1 + len(g.best.best_state.objective_trace)
    assert (tmp_path / "scatter.svg").read_text().startswith("<svg")


def test_emit_results_skips_svg_for_higher_dimensions(tmp_path, zoo_path):
    ds = load_csv(zoo_path, label_column="type")
    cfg = ExperimentConfig(variant="rcut", sigma=3.0, restarts=2, hp=FAST)
    names = {p.name for p in emit_results(multi_run(cfg, ds), ds, cfg, tmp_path)}
    assert "scatter.svg" not in names and "grid.csv" not in names


def test_emit_results_reports_unwritable_path(rings, tmp_path):
    cfg = ExperimentConfig(variant="ncut", sigma=2.0, restarts=2, hp=FAST)
    s = multi_run(cfg, rings)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(KonmfError, match="file"):
        emit_results(s, rings, cfg, blocker / "sub")


def test_run_experiment_from_csv(rings, tmp_path):
    path = tmp_path / "rings.csv"
    write_csv(rings, path)
    cfg = ExperimentConfig(variant="ncut", sigma=2.0, restarts=3, hp=FAST, data=str(path),
                           label_col="label", out=str(tmp_path / "out"), holdout=True)
    rep, ds = run_experiment(cfg)
    assert ds.n == rings.n
    summary = json.loads((tmp_path / "out" / "summary.json").read_text())
    assert summary["holdout"]["tuned_sigma"] == 2.0
