import json
import os

import numpy as np
import pytest
from click.testing import CliRunner

from elastic_paths.cli import main

from conftest import DIABETES_PATH


@pytest.fixture
def runner():
    return CliRunner()


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        rows = [ln.strip().split(",") for ln in fh if ln.strip()]
    return header, rows


class TestPathCommand:
    def test_grad_flow_starts_at_zero(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "grad-flow",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "path.csv")
        assert header[:2] == ["t_or_lambda", "l1_norm"]
        first = [float(v) for v in rows[0]]
        assert first == [0.0] * len(first)
        assert os.path.exists(tmp_path / "manifest.json")

    def test_en_path_has_descending_lambdas(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "en", "--alpha", "0.5",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        _, rows = read_csv(tmp_path / "path.csv")
        lams = [float(r[0]) for r in rows]
        assert len(lams) == 100
        assert all(a > b for a, b in zip(lams, lams[1:]))

    def test_discrete_path_with_gradients(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "egd:unnormalized",
                                   "--alpha", "0.5", "--step", "0.01",
                                   "--sample-every", "1000",
                                   "--emit-gradients",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "path.csv")
        p = 3
        assert header[-p:] == [f"grad_{j + 1}" for j in range(p)]
        assert len(rows) > 10

    def test_smooth_writes_extra_file(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "grad-flow", "--smooth", "5",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        assert os.path.exists(tmp_path / "path_smooth.csv")
        manifest = json.load(open(tmp_path / "manifest.json"))
        names = {os.path.basename(o) for o in manifest["outputs"]}
        assert {"path.csv", "path_smooth.csv"} <= names

    def test_unknown_method_fails(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "nonsense",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code != 0

    def test_requires_exactly_one_data_source(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--method", "grad-flow",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code != 0
        res = runner.invoke(main, ["path", "--method", "grad-flow",
                                   "--data", DIABETES_PATH,
                                   "--synthetic", "simple",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code != 0

    def test_diabetes_file_loads(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--data", DIABETES_PATH,
                                   "--method", "ridge",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "path.csv")
        assert len(header) == 2 + 10

    def test_bad_t_grid_rejected(self, runner, tmp_path):
        res = runner.invoke(main, ["path", "--synthetic", "simple",
                                   "--method", "grad-flow",
                                   "--t-grid", "5:1:0.1",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code != 0


class TestCompareCommand:
    def test_identical_methods_have_zero_difference(self, runner, tmp_path):
        res = runner.invoke(main, ["compare", "--synthetic", "simple",
                                   "--method", "en", "--method", "en",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "compare.csv")
        diff_cols = [i for i, h in enumerate(header) if h.startswith("absdiff")]
        for row in rows:
            for i in diff_cols:
                assert float(row[i]) == 0.0
        assert os.path.exists(tmp_path / "peaks.csv")

    def test_needs_two_methods(self, runner, tmp_path):
        res = runner.invoke(main, ["compare", "--synthetic", "simple",
                                   "--method", "en", "--out-dir", str(tmp_path)])
        assert res.exit_code != 0


class TestDeterminism:
    def run_twice(self, runner, base, args, files):
        outs = []
        for tag in ("a", "b"):
            out = os.path.join(base, tag)
            res = runner.invoke(main, args + ["--out-dir", out])
            assert res.exit_code == 0, res.output
            outs.append(out)
        for name in files:
            a = open(os.path.join(outs[0], name), "rb").read()
            b = open(os.path.join(outs[1], name), "rb").read()
            assert a == b, f"{name} differs between identical runs"

    def test_path_byte_identical(self, runner, tmp_path):
        self.run_twice(runner, str(tmp_path),
                       ["path", "--synthetic", "simple", "--method", "egd-flow",
                        "--alpha", "0.5"],
                       ["path.csv"])

    def test_experiment_byte_identical(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("ELASTIC_PATHS_THREADS", "1")
        self.run_twice(runner, str(tmp_path),
                       ["experiment", "--reps", "1", "--rho1", "0.7",
                        "--rho2", "0.2", "--seed", "3"],
                       ["experiment.csv"])


class TestExperimentCommand:
    def test_small_run_structure(self, runner, tmp_path, monkeypatch):
        monkeypatch.setenv("ELASTIC_PATHS_THREADS", "1")
        res = runner.invoke(main, ["experiment", "--reps", "2",
                                   "--rho1", "0.7", "--rho2", "0.2",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "experiment.csv")
        assert header[:3] == ["rho1", "rho2", "method"]
        methods = {r[2] for r in rows}
        assert methods == {"egd_val", "egd_cv", "en_val", "en_cv"}
        for row in rows:
            sens_mean = float(row[3])
            assert 0.0 <= sens_mean <= 1.0

    def test_invalid_cell_is_skipped_with_warning(self, runner, tmp_path,
                                                  monkeypatch):
        monkeypatch.setenv("ELASTIC_PATHS_THREADS", "1")
        res = runner.invoke(main, ["experiment", "--reps", "1",
                                   "--rho1", "0.1", "--rho2", "0.9",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        _, rows = read_csv(tmp_path / "experiment.csv")
        assert rows[0][2] == "skipped_not_psd"


class TestFlavorsCommand:
    def test_writes_one_file_per_flavor(self, runner, tmp_path):
        res = runner.invoke(main, ["flavors", "--synthetic", "simple",
                                   "--alpha", "0.5", "--step", "0.01",
                                   "--sample-every", "2000",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        names = sorted(os.listdir(tmp_path))
        flavor_files = [n for n in names if n.startswith("flavor_")]
        assert len(flavor_files) == 5
        header, rows = read_csv(tmp_path / flavor_files[0])
        assert header[-2:] == ["bound_lower", "bound_upper"]
        for row in rows:
            h, lo, hi = float(row[-3 - 2]), float(row[-2]), float(row[-1])
            assert lo - 1e-9 <= h <= hi + 1e-9


class TestSelectCommand:
    def test_cv_selection_runs(self, runner, tmp_path):
        res = runner.invoke(main, ["select", "--synthetic", "simple",
                                   "--method", "en", "--criterion", "cv",
                                   "--alpha", "0.5", "--folds", "4",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        header, rows = read_csv(tmp_path / "selection.csv")
        assert header[:3] == ["alpha_star", "t_or_lambda_star", "criterion"]
        assert rows[0][2] == "OneSE_CV"

    def test_val_selection_needs_blocks(self, runner, tmp_path):
        res = runner.invoke(main, ["select", "--synthetic", "simple",
                                   "--criterion", "val",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code != 0

    def test_val_selection_on_blocks(self, runner, tmp_path):
        res = runner.invoke(main, ["select", "--synthetic", "blocks",
                                   "--method", "egd", "--criterion", "val",
                                   "--alpha", "0.5",
                                   "--out-dir", str(tmp_path)])
        assert res.exit_code == 0, res.output
        _, rows = read_csv(tmp_path / "selection.csv")
        assert rows[0][2] == "ValMSE"
