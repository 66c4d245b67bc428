"""End-to-end command-line flows on a miniature dataset."""

import csv
import json

import pytest
from click.testing import CliRunner

from mvcontrast.cli import cli


def write_config(path, dataset_dir, out_dir, **data_over):
    data = {
        "dataset_dir": str(dataset_dir),
        "num_classes": 2,
        "objects_per_class": 3,
        "rotations_per_object": 1,
        "fps": 2.0,
        "duration": 1.5,
        "image_size": 16,
        "occluder": False,
        "seed": 11,
    }
    data.update(data_over)
    doc = {
        "data": data,
        "model": {
            "stages": [[4, 3, 2], [8, 3, 2]],
            "feature_dim": 8,
            "input_hw": [8, 8],
            "proj_hidden": 8,
            "proj_dim": 4,
        },
        "sampler": {"gap_seconds": 0.5},
        "train": {
            "batch_pairs": 4,
            "pretrain_epochs": 1,
            "eval_epochs": 1,
            "eval_fraction": 1.0,
            "holdout_objects_per_class": 1,
            "seed": 5,
        },
        "report": {"out_dir": str(out_dir)},
    }
    path.write_text(json.dumps(doc))
    return path


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workspace(tmp_path_factory, runner):
    """A rendered miniature dataset plus the config file that describes it."""
    root = tmp_path_factory.mktemp("cli")
    config = write_config(root / "tiny.json", root / "data", root / "runs")
    result = runner.invoke(
        cli, ["gen-data", "--config", str(config), "--out", str(root / "data")]
    )
    assert result.exit_code == 0, result.output + result.stderr
    return root


class TestGenData:
    def test_dataset_and_echo_written(self, workspace):
        assert (workspace / "data" / "manifest.jsonl").exists()
        echo = json.loads((workspace / "data" / "config.json").read_text())
        assert echo["data"]["num_classes"] == 2
        # defaults are filled into the echo
        assert echo["loss"]["tau"] == 0.5

    def test_video_count_reported(self, workspace, runner):
        config = workspace / "tiny.json"
        result = runner.invoke(
            cli, ["gen-data", "--config", str(config), "--out", str(workspace / "data")]
        )
        assert result.exit_code == 0
        # 2 classes x 3 objects x (1 rotation video + 1 hodgepodge video)
        assert result.output.startswith("12 videos, 36 frames")

    def test_missing_out_dir_created(self, workspace, runner, tmp_path):
        out = tmp_path / "a" / "b" / "data"
        config = write_config(tmp_path / "c.json", out, tmp_path / "runs")
        result = runner.invoke(cli, ["gen-data", "--config", str(config), "--out", str(out)])
        assert result.exit_code == 0
        assert (out / "manifest.jsonl").exists()

    def test_transfer_style_renders(self, workspace, runner, tmp_path):
        out = tmp_path / "recolor"
        result = runner.invoke(
            cli,
            [
                "gen-data",
                "--config",
                str(workspace / "tiny.json"),
                "--out",
                str(out),
                "--transfer",
                "recolor",
            ],
        )
        assert result.exit_code == 0, result.stderr
        assert (out / "manifest.jsonl").exists()

    def test_unknown_transfer_style_is_usage_error(self, workspace, runner):
        result = runner.invoke(
            cli,
            [
                "gen-data",
                "--config",
                str(workspace / "tiny.json"),
                "--out",
                "x",
                "--transfer",
                "sepia",
            ],
        )
        assert result.exit_code == 2

    def test_bad_config_json_exits_2(self, runner, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{nope")
        result = runner.invoke(cli, ["gen-data", "--config", str(bad), "--out", "x"])
        assert result.exit_code == 2
        assert "not valid JSON" in result.stderr


class TestRun:
    def run(self, runner, workspace, *extra, env=None):
        args = ["run", "--config", str(workspace / "tiny.json"), *extra]
        return runner.invoke(cli, args, env=env)

    def test_artifacts_and_exit_code(self, runner, workspace):
        result = self.run(runner, workspace, "--mode", "simclr_self")
        assert result.exit_code == 0, result.stderr
        (run_dir,) = [
            d for f in (workspace / "runs").iterdir() for d in f.iterdir() if d.name == "seed5"
        ]
        for name in ("checkpoint.mvck", "metrics.csv", "summary.json", "config.json"):
            assert (run_dir / name).exists(), name
        summary = json.loads((run_dir / "summary.json").read_text())
        assert summary["mode"] == "simclr_self"
        assert summary["seed"] == 5

    def test_repeat_invocation_identical_csv_bytes(self, runner, workspace):
        result = self.run(runner, workspace, "--mode", "simclr_self")
        assert result.exit_code == 0
        run_dir = next(
            d for f in (workspace / "runs").iterdir() for d in f.iterdir() if d.name == "seed5"
        )
        first = (run_dir / "metrics.csv").read_bytes()
        assert self.run(runner, workspace, "--mode", "simclr_self").exit_code == 0
        assert (run_dir / "metrics.csv").read_bytes() == first

    def test_env_seed_override(self, runner, workspace):
        result = self.run(
            runner, workspace, "--mode", "simclr_self", env={"MVC_SEED": "7"}
        )
        assert result.exit_code == 0, result.stderr
        dirs = [
            d.name for f in (workspace / "runs").iterdir() for d in f.iterdir() if d.is_dir()
        ]
        assert "seed7" in dirs

    def test_flag_beats_env_seed(self, runner, workspace):
        result = self.run(
            runner, workspace, "--mode", "simclr_self", "--seed", "9", env={"MVC_SEED": "7"}
        )
        assert result.exit_code == 0
        dirs = [
            d.name for f in (workspace / "runs").iterdir() for d in f.iterdir() if d.is_dir()
        ]
        assert "seed9" in dirs

    def test_unknown_mode_is_usage_error(self, runner, workspace):
        result = self.run(runner, workspace, "--mode", "simclr_everything")
        assert result.exit_code == 2

    def test_missing_dataset_is_runtime_error(self, runner, tmp_path):
        config = write_config(tmp_path / "c.json", tmp_path / "nowhere", tmp_path / "runs")
        result = runner.invoke(
            cli, ["run", "--config", str(config), "--mode", "simclr_self"]
        )
        assert result.exit_code == 1
        assert "error" in result.stderr


@pytest.fixture(scope="module")
def sweep_space(tmp_path_factory, runner):
    """A 1 fps dataset long enough that only the short grid gaps can pair."""
    root = tmp_path_factory.mktemp("sweep")
    config = write_config(
        root / "sweep.json",
        root / "data",
        root / "runs",
        fps=1.0,
        duration=4.0,
    )
    # the fixed default gap must sit on the 1 fps frame lattice
    doc = json.loads(config.read_text())
    doc["sampler"]["gap_seconds"] = 1.0
    config.write_text(json.dumps(doc))
    result = runner.invoke(
        cli, ["gen-data", "--config", str(config), "--out", str(root / "data")]
    )
    assert result.exit_code == 0, result.stderr
    return root


def sweep_root(space):
    (sweep_dir,) = [d for d in (space / "runs").iterdir() if d.name.startswith("sweep_")]
    (inner,) = list(sweep_dir.iterdir())
    return inner


class TestSweep:
    def test_full_grid_with_recorded_failures(self, runner, sweep_space):
        result = runner.invoke(
            cli,
            [
                "sweep",
                "--config",
                str(sweep_space / "sweep.json"),
                "--gap-mode",
                "fixed",
                "--fps",
                "1",
            ],
        )
        assert result.exit_code == 0, result.stderr
        root = sweep_root(sweep_space)
        # one summary per grid gap, failed cells included with their error
        gaps, failed = [], []
        for d in sorted(root.glob("gap_*")):
            doc = json.loads((d / "summary.json").read_text())
            gaps.append(doc["gap"])
            if doc["error"] is not None:
                failed.append(doc["gap"])
        assert sorted(gaps) == [0.0, 2.0, 4.0, 6.0, 8.0, 10.0]
        assert sorted(failed) == [4.0, 6.0, 8.0, 10.0]
        assert "2/6 gaps finished" in result.output
        # combined CSV only carries rows for runs that produced metrics
        with (root / "metrics.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert {r["gap"] for r in rows} == {"0.0", "2.0"}

    def test_fps_mismatch_is_config_error(self, runner, sweep_space):
        result = runner.invoke(
            cli,
            [
                "sweep",
                "--config",
                str(sweep_space / "sweep.json"),
                "--gap-mode",
                "fixed",
                "--fps",
                "3",
            ],
        )
        assert result.exit_code == 2
        assert "does not match the dataset" in result.stderr

    def test_parallel_jobs_match_sequential(self, runner, sweep_space):
        sequential = (sweep_root(sweep_space) / "metrics.csv").read_bytes()
        result = runner.invoke(
            cli,
            [
                "sweep",
                "--config",
                str(sweep_space / "sweep.json"),
                "--gap-mode",
                "fixed",
                "--fps",
                "1",
                "--jobs",
                "3",
            ],
        )
        assert result.exit_code == 0, result.stderr
        assert (sweep_root(sweep_space) / "metrics.csv").read_bytes() == sequential


@pytest.fixture(scope="module")
def two_runs(runner, workspace):
    for seed in ("5", "7"):
        result = runner.invoke(
            cli,
            [
                "run",
                "--config",
                str(workspace / "tiny.json"),
                "--mode",
                "simclr_self",
                "--seed",
                seed,
            ],
        )
        assert result.exit_code == 0, result.stderr
    return workspace / "runs"


class TestReport:
    def test_aggregate_and_plots(self, runner, two_runs, tmp_path):
        out = tmp_path / "report"
        result = runner.invoke(
            cli, ["report", "--runs", str(two_runs), "--out", str(out), "--plot"]
        )
        assert result.exit_code == 0, result.stderr
        with (out / "aggregate.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        row = next(r for r in rows if r["mode"] == "simclr_self")
        assert int(row["runs"]) >= 2
        assert float(row["test_std"]) >= 0.0
        assert (out / "accuracy_by_mode.svg").exists()

    def test_sweep_report_gets_gap_chart(self, runner, sweep_space, tmp_path):
        out = tmp_path / "sweep_report"
        result = runner.invoke(
            cli,
            ["report", "--runs", str(sweep_root(sweep_space)), "--out", str(out), "--plot"],
        )
        assert result.exit_code == 0, result.stderr
        assert "skipped" in result.stderr  # the failed cells are listed
        assert (out / "accuracy_by_gap.svg").exists()

    def test_dir_without_summaries_is_config_error(self, runner, tmp_path):
        empty = tmp_path / "empty"
        empty.mkdir()
        result = runner.invoke(cli, ["report", "--runs", str(empty)])
        assert result.exit_code == 2
        assert "no usable run summaries" in result.stderr

    def test_missing_runs_flag_is_usage_error(self, runner):
        result = runner.invoke(cli, ["report"])
        assert result.exit_code == 2
