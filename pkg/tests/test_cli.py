"""End-to-end pipeline behaviour through the command-line entry point."""

import csv

import numpy as np
import pytest
import yaml

from msfx.cli import main, read_records_csv

from conftest import make_raw_frame, write_raw_csv


def write_experiment(tmp_path, months=170, seed=123, t0="2001-06", horizons=(1, 3), grid=None, mcmc=None, out_name="out"):
    home = make_raw_frame(months=months, seed=1, start="1990-01")
    foreign = make_raw_frame(months=months, seed=2, start="1990-01", with_exr=False)
    write_raw_csv(tmp_path / "home.csv", home)
    write_raw_csv(tmp_path / "foreign.csv", foreign)
    cfg = {
        "data": {
            "home_csv": str(tmp_path / "home.csv"),
            "foreign_csv": str(tmp_path / "foreign.csv"),
            "home_schema": {c: c.upper() for c in home.columns},
            "foreign_schema": {c: c.upper() for c in foreign.columns},
            "panel_csv": str(tmp_path / out_name / "panel.csv"),
        },
        "grid": grid
        or [
            {"family": "kitchen-sink", "states": [2], "transition": ["tvp"], "variance": ["state-specific"], "shrinkage": ["ssvs"]},
            {"family": "linear", "models": ["uip"]},
        ],
        "forecast": {"t0": t0, "horizons": list(horizons)},
        "mcmc": mcmc or {"iterations": 80, "burn_in": 40, "thin": 2},
        "priors": {"omega": 0.5, "zeta": 100.0, "a0": 0.01, "A0": 0.01, "c0": 0.1, "c1": 10.0},
        "seed": seed,
        "output_dir": str(tmp_path / out_name),
        "workers": 1,
    }
    path = tmp_path / "experiment.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


class TestTransform:
    def test_writes_panel_and_log(self, tmp_path):
        cfg = write_experiment(tmp_path)
        assert main(["--config", str(cfg), "transform"]) == 0
        panel_csv = tmp_path / "out" / "panel.csv"
        assert panel_csv.exists()
        assert (tmp_path / "out" / "transform_log.txt").exists()
        first = panel_csv.read_bytes()
        assert main(["--config", str(cfg), "transform"]) == 0
        assert panel_csv.read_bytes() == first  # idempotent, byte for byte

    def test_missing_column_is_validation_error(self, tmp_path):
        cfg_path = write_experiment(tmp_path)
        cfg = yaml.safe_load(cfg_path.read_text())
        cfg["data"]["home_schema"]["cpi"] = "MISSING"
        cfg_path.write_text(yaml.safe_dump(cfg))
        assert main(["--config", str(cfg_path), "transform"]) == 1


class TestRun:
    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_run_produces_records_and_report(self, tmp_path):
        cfg = write_experiment(tmp_path, t0="2003-06")
        assert main(["--config", str(cfg), "run"]) == 0
        out = tmp_path / "out"
        records = read_records_csv(out / "records.csv")
        ids = {r.model_id for r in records}
        assert ids == {"ms-tvp-full-k2-ssvs-statevar", "linear-uip", "rw"}
        assert (out / "report" / "lbf_terminal.csv").exists()
        # checkpoints exist per (cell, origin)
        assert any((out / "records" / "linear-uip").glob("*.csv"))

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_report_rebuilds_from_records_alone(self, tmp_path):
        import json
        import shutil

        cfg = write_experiment(tmp_path, t0="2003-10")
        assert main(["--config", str(cfg), "run"]) == 0
        out = tmp_path / "out"
        before = (out / "report" / "lbf_terminal.csv").read_bytes()
        shutil.rmtree(out / "report")
        assert main(["--config", str(cfg), "report"]) == 0
        assert (out / "report" / "lbf_terminal.csv").read_bytes() == before
        summary = json.loads((out / "report" / "summary.json").read_text())
        assert {c["model_id"] for c in summary["grid"]} == {"ms-tvp-full-k2-ssvs-statevar", "linear-uip"}

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_resume_skips_finished_origins(self, tmp_path):
        cfg = write_experiment(tmp_path, t0="2003-06")
        assert main(["--config", str(cfg), "run"]) == 0
        out = tmp_path / "out"
        before = (out / "records.csv").read_bytes()
        # wipe the merged file but keep checkpoints: rerun must reproduce it
        (out / "records.csv").unlink()
        assert main(["--config", str(cfg), "run"]) == 0
        assert (out / "records.csv").read_bytes() == before


class TestWorkersAndEnv:
    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_records_independent_of_worker_count(self, tmp_path):
        (tmp_path / "w1").mkdir()
        (tmp_path / "w2").mkdir()
        cfg1 = write_experiment(tmp_path / "w1", t0="2003-09", out_name="out")
        assert main(["--config", str(cfg1), "run"]) == 0
        cfg2 = write_experiment(tmp_path / "w2", t0="2003-09", out_name="out")
        assert main(["--config", str(cfg2), "--workers", "2", "run"]) == 0
        a = (tmp_path / "w1" / "out" / "records.csv").read_bytes()
        b = (tmp_path / "w2" / "out" / "records.csv").read_bytes()
        assert a == b

    def test_output_root_env(self, tmp_path, monkeypatch):
        cfg_path = write_experiment(tmp_path)
        cfg = yaml.safe_load(cfg_path.read_text())
        cfg["output_dir"] = "nested/out"
        del cfg["data"]["panel_csv"]
        cfg_path.write_text(yaml.safe_dump(cfg))
        monkeypatch.setenv("MSFX_OUTPUT_ROOT", str(tmp_path / "root"))
        assert main(["--config", str(cfg_path), "transform"]) == 0
        assert (tmp_path / "root" / "nested" / "out" / "panel.csv").exists()

    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_store_draws_sidecars(self, tmp_path):
        cfg_path = write_experiment(tmp_path, t0="2003-11", grid=[{"family": "linear", "models": ["ppp"]}])
        cfg = yaml.safe_load(cfg_path.read_text())
        cfg["store_draws"] = True
        cfg_path.write_text(yaml.safe_dump(cfg))
        assert main(["--config", str(cfg_path), "run"]) == 0
        sidecars = sorted((tmp_path / "out" / "records" / "linear-ppp").glob("*.npz"))
        assert sidecars
        arr = np.load(sidecars[0])
        assert "h1" in arr.files


class TestDiagnose:
    @pytest.mark.filterwarnings("ignore::UserWarning")
    def test_simplex_rows_and_fixed_paths(self, tmp_path):
        grid = [{"family": "kitchen-sink", "states": [2], "transition": ["fixed"], "variance": ["common"], "shrinkage": ["ssvs"]}]
        cfg = write_experiment(tmp_path, grid=grid, mcmc={"iterations": 40, "burn_in": 20, "thin": 1})
        cell = "ms-ft-full-k2-ssvs-commonvar"
        assert main(["--config", str(cfg), "diagnose", "--cell", cell]) == 0
        diag = tmp_path / "out" / "diagnostics" / cell
        with open(diag / "filtered_states.csv") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["date", "state_1", "state_2"]
        sums = [sum(float(v) for v in row[1:]) for row in rows[1:]]
        assert all(abs(s - 1.0) < 1e-12 for s in sums)
        # fixed transitions: the path is constant over time for each (from, to)
        with open(diag / "transition_paths.csv") as fh:
            path_rows = list(csv.DictReader(fh))
        by_pair = {}
        for row in path_rows:
            by_pair.setdefault((row["from_state"], row["to_state"]), set()).add(row["probability"])
        assert all(len(v) == 1 for v in by_pair.values())

    def test_unknown_cell_is_validation_error(self, tmp_path):
        cfg = write_experiment(tmp_path)
        assert main(["--config", str(cfg), "diagnose", "--cell", "nope"]) == 1


def test_smoke_flag_overrides_mcmc_lengths(tmp_path):
    from msfx.cli import SMOKE_MCMC, load_experiment

    cfg_path = write_experiment(tmp_path, mcmc={"iterations": 80000, "burn_in": 30000, "thin": 10})
    cfg = load_experiment(cfg_path, smoke=True)
    assert cfg.mcmc == SMOKE_MCMC
    assert all(cell.mcmc == SMOKE_MCMC for cell in cfg.cells)
    cfg_full = load_experiment(cfg_path)
    assert cfg_full.mcmc.iterations == 80000 and cfg_full.mcmc.n_retained == 5000


class TestValidation:
    def test_bad_config_exit_code(self, tmp_path):
        bad = tmp_path / "bad.yaml"
        bad.write_text("grid: []\ndata: {}\n")
        assert main(["--config", str(bad), "run"]) == 1

    def test_usage_error_exit_code(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--config"])  # missing value
        assert exc.value.code == 1
