import shutil

import pytest

from snnprune import io
from snnprune.cli import EXIT_CONFIG, EXIT_MISSING, EXIT_NO_FEASIBLE, EXIT_OK, main

SMALL = """\
seed = 5
data.n_train = 240
data.n_test = 60
data.height = 8
data.width = 8
data.n_classes = 2
data.separation = 1.5
data.noise = 0.5
model.conv_channels = 6,8,8
train.epochs = 4
lre.n_policies = 6
lre.n_holdout = 2
search.num_episodes = 12
search.warmup_episodes = 4
search.subset_size = 100
agent.batch_size = 8
agent.updates_per_episode = 4
"""


def _run(cmd, cfg, out, *extra):
    return main([cmd, "--config", str(cfg), "--out", str(out), *extra])


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg = root / "small.cfg"
    cfg.write_text(SMALL)
    out = root / "run"
    for cmd in ("gen-data", "pretrain", "lre", "search", "finalize"):
        assert _run(cmd, cfg, out) in (EXIT_OK, EXIT_NO_FEASIBLE), cmd
    return cfg, out


def test_pipeline_writes_artifacts(small_run):
    _, out = small_run
    for name in ("train.spkd", "pretrained.spnn", "lre_model.txt", "best_policy.csv",
                 "search_log.csv", "agent.spag", "compressed.spnn", "final_report.csv"):
        assert (out / name).exists(), name
    assert len(io.read_search_log(out / "search_log.csv")) == 12


def test_report_and_calibration(small_run, capsys):
    cfg, out = small_run
    assert _run("report", cfg, out, "--calibrate", "--step", "20") == EXIT_OK
    lines = (out / "synops_report.csv").read_text().splitlines()
    assert lines[0] == "layer_index,layer_kind,synops_avg,param_count"
    assert lines[-1].startswith("TOTAL,")
    assert "converged_at" in capsys.readouterr().out
    assert _run("report", cfg, out, "--checkpoint", str(out / "compressed.spnn")) == EXIT_OK


def test_rerun_is_byte_identical(small_run, tmp_path):
    cfg, out = small_run
    other = tmp_path / "again"
    for cmd in ("gen-data", "pretrain", "lre"):
        assert _run(cmd, cfg, other) == EXIT_OK
    for name in ("train.spkd", "pretrained.spnn", "lre_dataset.csv", "lre_model.txt"):
        assert (out / name).read_bytes() == (other / name).read_bytes(), name


def test_seed_changes_weights(small_run, tmp_path):
    cfg, out = small_run
    other = tmp_path / "seeded"
    assert _run("gen-data", cfg, other) == EXIT_OK
    assert _run("pretrain", cfg, other, "--seed", "6") == EXIT_OK
    assert (out / "pretrained.spnn").read_bytes() != (other / "pretrained.spnn").read_bytes()


def test_missing_checkpoint_exit_code(small_run, tmp_path, capsys):
    cfg, out = small_run
    partial = tmp_path / "partial"
    partial.mkdir()
    shutil.copy(out / "train.spkd", partial)
    shutil.copy(out / "test.spkd", partial)
    assert _run("lre", cfg, partial) == EXIT_MISSING
    assert "E_MISSING_ARTIFACT" in capsys.readouterr().err
    assert _run("finalize", cfg, partial) == EXIT_MISSING


def test_infeasible_search_exit_code(small_run, tmp_path, capsys):
    cfg, out = small_run
    tight = tmp_path / "tight.cfg"
    tight.write_text(SMALL + "search.mode = P\ntargets.params_ratio = 0.001\n")
    run = tmp_path / "tight"
    run.mkdir()
    for name in ("train.spkd", "test.spkd", "pretrained.spnn", "lre_model.txt"):
        shutil.copy(out / name, run)
    assert _run("search", tight, run) == EXIT_NO_FEASIBLE
    assert "E_NO_FEASIBLE" in capsys.readouterr().err
    assert (run / "best_policy.csv").exists()


@pytest.mark.parametrize(
    "line",
    ["search.tar_lambda = 0", "search.tar_alpha = 0", "targets.synops_ratio = 2",
     "search.warmup_episodes = 12", "bogus.key = 1"],
)
def test_config_error_exit_code(tmp_path, line, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text(SMALL + line + "\n")
    assert _run("gen-data", cfg, tmp_path / "x") == EXIT_CONFIG
    assert "E_CONFIG" in capsys.readouterr().err


def test_targets_at_full_budget_accept_identity(small_run, tmp_path):
    cfg, out = small_run
    loose = tmp_path / "loose.cfg"
    loose.write_text(SMALL + "targets.synops_ratio = 1\ntargets.params_ratio = 1\n")
    run = tmp_path / "loose"
    run.mkdir()
    for name in ("train.spkd", "test.spkd", "pretrained.spnn", "lre_model.txt"):
        shutil.copy(out / name, run)
    assert _run("search", loose, run) == EXIT_OK
    rows = io.read_search_log(run / "search_log.csv")
    assert any(r["feasible"] for r in rows)
