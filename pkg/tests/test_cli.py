import os
import stat
import subprocess
import sys
from pathlib import Path

import pytest

from mpnetlab.cli import main


def write_config(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return path


SMALL = """
seed: 11
total_samples: 300
array: {geometry: ula, n: 8, gain_std: 0.2, pos_std: 0.05}
dictionary: {atoms: 32}
snr: {model: fixed, value_db: 10.0}
training: {minibatch_size: 100}
estimators: [ls, mpnet:nominal:sc2]
stream: {dump: true}
"""


class TestUsageErrors:
    def test_no_arguments_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_subcommand_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["transmogrify", "--config", "x.yaml"])
        assert exc.value.code == 2

    def test_missing_config_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train"])
        assert exc.value.code == 2

    def test_unknown_flag_exits_2(self):
        with pytest.raises(SystemExit) as exc:
            main(["train", "--config", "x.yaml", "--frobnicate"])
        assert exc.value.code == 2


class TestConfigErrors:
    def test_nonexistent_config_exits_1(self, tmp_path, capsys):
        code = main(["train", "--config", str(tmp_path / "nope.yaml"), "--out", str(tmp_path)])
        assert code == 1
        assert "config error" in capsys.readouterr().err

    def test_invalid_key_named_in_diagnostic(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL + "\nbogus_key: 1\n")
        code = main(["train", "--config", str(cfg), "--out", str(tmp_path / "out")])
        assert code == 1
        assert "bogus_key" in capsys.readouterr().err

    def test_wrong_subcommand_for_config(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL)
        assert main(["anomaly", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert main(["upa", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1
        assert main(["replay", "--config", str(cfg), "--out", str(tmp_path / "out")]) == 1

    def test_missing_output_dir_exits_1(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL)
        assert main(["train", "--config", str(cfg)]) == 1
        assert "output" in capsys.readouterr().err


class TestRuns:
    def test_train_writes_all_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        out = tmp_path / "out"
        code = main(["train", "--config", str(cfg), "--out", str(out), "--quiet"])
        assert code == 0
        for name in ("curves.csv", "depth_hist.csv", "snr_hist.csv", "stream.csv", "checkpoint_mpnet_nominal_sc2.npz"):
            assert (out / name).exists(), name

    def test_seed_override_changes_results(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        out1, out2, out3 = (tmp_path / d for d in ("a", "b", "c"))
        assert main(["train", "--config", str(cfg), "--out", str(out1), "--quiet"]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(out2), "--quiet", "--seed", "12"]) == 0
        assert main(["train", "--config", str(cfg), "--out", str(out3), "--quiet", "--seed", "12"]) == 0
        assert (out1 / "curves.csv").read_bytes() != (out2 / "curves.csv").read_bytes()
        assert (out2 / "curves.csv").read_bytes() == (out3 / "curves.csv").read_bytes()

    def test_snr_loss_subcommand(self, tmp_path):
        cfg = write_config(
            tmp_path,
            """
seed: 2
array: {geometry: ula, n: 16}
snr_loss:
  pos_stds: [0.0, 0.03]
  gain_stds: [0.0, 0.09]
  arrays: 2
  channels_per_array: 30
  atoms: 256
""",
        )
        out = tmp_path / "loss"
        assert main(["snr-loss", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        lines = (out / "snr_loss.csv").read_text().splitlines()
        assert lines[0] == "pos_std,gain_std,loss_db"
        assert len(lines) == 5

    def test_replay_reproduces_curves_byte_for_byte(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        first = tmp_path / "first"
        assert main(["train", "--config", str(cfg), "--out", str(first), "--quiet"]) == 0
        replay_cfg = write_config(
            tmp_path,
            SMALL.replace("stream: {dump: true}", f"stream: {{replay: '{first / 'stream.csv'}'}}"),
            name="replay.yaml",
        )
        second = tmp_path / "second"
        assert main(["replay", "--config", str(replay_cfg), "--out", str(second), "--quiet"]) == 0
        assert (first / "curves.csv").read_bytes() == (second / "curves.csv").read_bytes()

    def test_unwritable_output_dir_fails_before_compute(self, tmp_path, capsys):
        if os.geteuid() == 0:
            pytest.skip("root ignores directory permissions")
        cfg = write_config(tmp_path, SMALL)
        locked = tmp_path / "locked"
        locked.mkdir()
        locked.chmod(stat.S_IRUSR | stat.S_IXUSR)
        try:
            assert main(["train", "--config", str(cfg), "--out", str(locked / "out")]) == 1
        finally:
            locked.chmod(stat.S_IRWXU)

    def test_output_path_collides_with_file(self, tmp_path, capsys):
        cfg = write_config(tmp_path, SMALL)
        blocker = tmp_path / "blocker"
        blocker.write_text("a file, not a directory")
        assert main(["train", "--config", str(cfg), "--out", str(blocker)]) == 1
        assert "not writable" in capsys.readouterr().err
        assert blocker.read_text() == "a file, not a directory"

    def test_anomaly_subcommand(self, tmp_path):
        cfg = write_config(
            tmp_path,
            SMALL.replace("stream: {dump: true}", "anomalies: [{kind: break, index: 200, fraction: 0.25}]"),
        )
        out = tmp_path / "out"
        assert main(["anomaly", "--config", str(cfg), "--out", str(out), "--quiet"]) == 0
        assert (out / "curves.csv").exists()


class TestEntryPoint:
    def test_module_invocation(self, tmp_path):
        cfg = write_config(tmp_path, SMALL)
        out = tmp_path / "out"
        env = dict(os.environ)
        result = subprocess.run(
            [sys.executable, "-m", "mpnetlab", "train", "--config", str(cfg), "--out", str(out), "--quiet"],
            capture_output=True,
            text=True,
            env=env,
        )
        assert result.returncode == 0, result.stderr
        assert result.stdout == ""  # data goes to files, logs to stderr
        assert (out / "curves.csv").exists()

    def test_usage_error_exit_code_via_process(self):
        result = subprocess.run(
            [sys.executable, "-m", "mpnetlab", "train"],
            capture_output=True,
            text=True,
        )
        assert result.returncode == 2
        assert "usage" in result.stderr.lower()
