import json

import pytest

from helios.cli import main

TINY_CONFIG = """
[paths]
data_root = "{root}/data"
model_dir = "{root}/models"
report_dir = "{root}/reports"

[dataset]
steps = 2
window = 6
folds = 3
seed = 13

[scene]
sites = 2
days = 6
grid_edge = 20
velocity = [1.0, 0.0]
velocity_jitter = 0.1

[cnnlstm]
filters = 4
dense_dims = [8, 8]
lstm_hidden = 4
batch_size = 16
max_epochs = 2
patience = 2

[forest]
tree_count = 3

[evaluation]
channel_deltas = [0.0, 0.02]
solar_deltas_pct = [0.0, 5.0]
"""


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    config = root / "run.toml"
    config.write_text(TINY_CONFIG.format(root=root))
    assert main(["synth-gen", "--config", str(config)]) == 0
    assert main(["dataset-build", "--config", str(config)]) == 0
    for model in ("persistence", "tree", "forest", "cnnlstm"):
        assert main(["train-channel", "--config", str(config), "--model", model]) == 0
    assert main(["train-nowcast", "--config", str(config)]) == 0
    return root, config


class TestPipeline:
    def test_synth_gen_outputs(self, workdir):
        root, _ = workdir
        assert (root / "data" / "scene.json").exists()
        assert (root / "data" / "site00" / "frames.bin").exists()
        assert (root / "data" / "site01" / "power.csv").exists()
        manifest = json.loads((root / "data" / "run.json").read_text())
        assert manifest["seed"] == 13
        assert "config_hash" in manifest

    def test_models_written(self, workdir):
        root, _ = workdir
        for name in ("persistence", "tree", "forest", "cnnlstm", "svr_site00", "svr_site01"):
            assert (root / "models" / f"{name}_fold0.hnmd").exists()
        assert (root / "models" / "cnnlstm_fold0.curve.csv").exists()

    def test_evaluate_channels(self, workdir):
        root, config = workdir
        assert main(["evaluate", "--config", str(config)]) == 0
        report = (root / "reports" / "channel_report.csv").read_text()
        assert report.splitlines()[0] == "scope,model,period,delta,n,kept_frac,mae,mape,skill"
        assert "persistence" in report and "cnnlstm" in report
        assert (root / "reports" / "channel_mae_vs_delta.svg").exists()

    def test_evaluate_four_way(self, workdir):
        root, config = workdir
        assert main(["evaluate", "--config", str(config), "--four-way"]) == 0
        report = (root / "reports" / "four_way_report.csv").read_text()
        for name in ("persistence", "cnnlstm_svr", "svr_current", "svr_truth"):
            assert name in report
        assert (root / "reports" / "four_way_mape_vs_delta.svg").exists()

    def test_evaluate_deterministic(self, workdir):
        root, config = workdir
        assert main(["evaluate", "--config", str(config)]) == 0
        first = (root / "reports" / "channel_report.csv").read_bytes()
        first_svg = (root / "reports" / "channel_mae_vs_delta.svg").read_bytes()
        assert main(["evaluate", "--config", str(config)]) == 0
        assert (root / "reports" / "channel_report.csv").read_bytes() == first
        assert (root / "reports" / "channel_mae_vs_delta.svg").read_bytes() == first_svg

    def test_report_command(self, workdir):
        root, config = workdir
        assert main(["evaluate", "--config", str(config)]) == 0
        assert main([
            "report", "--config", str(config),
            "--input", str(root / "reports" / "channel_report.csv"),
        ]) == 0


class TestExitCodes:
    def test_bad_config_is_usage_error(self, tmp_path):
        config = tmp_path / "bad.toml"
        config.write_text("[dataset]\nstepz = 1\n")
        assert main(["synth-gen", "--config", str(config)]) == 1

    def test_missing_config(self, tmp_path):
        assert main(["synth-gen", "--config", str(tmp_path / "none.toml")]) == 1

    def test_missing_data_is_data_error(self, tmp_path):
        config = tmp_path / "run.toml"
        config.write_text(
            f'[paths]\ndata_root = "{tmp_path}/void"\n'
            f'model_dir = "{tmp_path}/m"\nreport_dir = "{tmp_path}/r"\n'
        )
        assert main(["dataset-build", "--config", str(config)]) == 2

    def test_version_gate_refuses_stale_model(self, workdir, tmp_path):
        root, config = workdir
        path = root / "models" / "tree_fold0.hnmd"
        original = path.read_bytes()
        try:
            corrupted = original[:4] + bytes([99]) + original[5:]
            path.write_bytes(corrupted)
            assert main(["evaluate", "--config", str(config)]) == 2
        finally:
            path.write_bytes(original)

    def test_usage_error(self):
        assert main(["train-channel"]) == 1
