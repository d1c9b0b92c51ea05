"""End-to-end CLI tests: pipelines, determinism, exit codes."""

import numpy as np
import pytest

from evd.cli import main
from evd.core import Label, read_events
from evd.nn import TINY_LEVELS, ModelParams, load_checkpoint


def run(*args):
    return main([str(a) for a in args])


@pytest.fixture
def sim_file(tmp_path):
    out = tmp_path / "scene.evd"
    code = run(
        "simulate", "--out", out, "--width", 64, "--height", 64,
        "--velocity-x", 60, "--object-size", 8, "--duration-us", 200000,
        "--frame-rate", 200, "--seed", 1,
    )
    assert code == 0
    return out


@pytest.fixture
def noisy_file(sim_file, tmp_path):
    out = tmp_path / "noisy.evd"
    assert run("inject-noise", "--input", sim_file, "--out", out, "--ratio", 1.0, "--seed", 2) == 0
    return out


class TestSimulate:
    def test_output_roundtrips(self, sim_file):
        stream, geometry = read_events(sim_file)
        assert len(stream) > 0
        assert stream.count_label(Label.REAL) == len(stream)
        assert (geometry.width, geometry.height) == (64, 64)

    def test_seed_determinism(self, tmp_path):
        a, b = tmp_path / "a.evd", tmp_path / "b.evd"
        for out in (a, b):
            assert run("simulate", "--out", out, "--width", 32, "--height", 32,
                       "--velocity-x", 40, "--object-size", 4, "--seed", 7) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_velocity_exits_2(self, tmp_path, capsys):
        code = run("simulate", "--out", tmp_path / "x.evd", "--velocity-x", 0, "--velocity-y", 0)
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_config_echo_written(self, sim_file):
        echo = sim_file.with_name(sim_file.name + ".config.txt")
        assert echo.exists()
        assert "velocity-x=60" in echo.read_text()

    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "scene.cfg"
        cfg.write_text("width=32\nheight=32\nvelocity-x=40\nobject-size=4\nseed=3\n")
        out1, out2 = tmp_path / "c1.evd", tmp_path / "c2.evd"
        assert run("simulate", "--config", cfg, "--out", out1) == 0
        assert run("simulate", "--config", cfg, "--out", out2, "--velocity-x", 80) == 0
        s1, _ = read_events(out1)
        s2, _ = read_events(out2)
        assert len(s1) != len(s2)  # the flag overrode the file


class TestInjectNoise:
    def test_ratio_adds_exact_count(self, sim_file, noisy_file):
        clean, _ = read_events(sim_file)
        noisy, _ = read_events(noisy_file)
        assert noisy.count_label(Label.NOISE) == len(clean)

    def test_determinism(self, sim_file, tmp_path):
        a, b = tmp_path / "na.evd", tmp_path / "nb.evd"
        for out in (a, b):
            assert run("inject-noise", "--input", sim_file, "--out", out, "--eta", 5.0, "--seed", 3) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_missing_input_exits_1(self, tmp_path):
        assert run("inject-noise", "--input", tmp_path / "nope.evd", "--out", tmp_path / "o.evd") == 1


class TestDenoise:
    def test_rp_on_distinct_pixels_all_real(self, tmp_path):
        from evd.core import EventStream, SensorGeometry, write_events

        n = 30
        stream = EventStream(np.arange(n) * 10, np.arange(n) % 16, np.arange(n) // 16, np.ones(n))
        src = tmp_path / "in.evd"
        write_events(src, stream, SensorGeometry(width=16, height=16))
        out = tmp_path / "out.evd"
        assert run("denoise", "--input", src, "--out", out, "--filter", "rp") == 0
        labeled, _ = read_events(out)
        assert labeled.count_label(Label.REAL) == n

    def test_tw_with_huge_t_lim_keeps_everything(self, noisy_file, tmp_path):
        out = tmp_path / "tw.evd"
        assert run("denoise", "--input", noisy_file, "--out", out, "--filter", "tw",
                   "--t-lim", 1e15) == 0
        labeled, _ = read_events(out)
        assert labeled.count_label(Label.REAL) == len(labeled)

    def test_wednet_requires_checkpoint(self, noisy_file, tmp_path):
        code = run("denoise", "--input", noisy_file, "--out", tmp_path / "o.evd", "--filter", "wednet")
        assert code == 1

    def test_wednet_labels_every_event(self, noisy_file, tmp_path):
        from evd.nn import save_checkpoint

        ckpt = tmp_path / "m.wedn"
        save_checkpoint(ckpt, ModelParams.initialize(TINY_LEVELS, seed=0, window_size=256))
        out = tmp_path / "w.evd"
        assert run("denoise", "--input", noisy_file, "--out", out, "--filter", "wednet",
                   "--checkpoint", ckpt) == 0
        labeled, _ = read_events(out)
        noisy, _ = read_events(noisy_file)
        assert len(labeled) == len(noisy)
        assert np.all((labeled.label == int(Label.REAL)) | (labeled.label == int(Label.NOISE)))


class TestTrain:
    def test_epochs_zero_equals_initialization(self, noisy_file, tmp_path):
        ckpt = tmp_path / "init.wedn"
        assert run("train", "--train", noisy_file, "--out", ckpt,
                   "--epochs", 0, "--seed", 5, "--window-size", 128,
                   "--levels", "16:8:0.3:4,8:4:0.6:4") == 0
        loaded = load_checkpoint(ckpt)
        from evd.geometry import LevelSpec

        reference = ModelParams.initialize(
            [LevelSpec(16, 8, 0.3, 4), LevelSpec(8, 4, 0.6, 4)], seed=5, window_size=128
        )
        for name in reference.blocks:
            assert np.array_equal(loaded.blocks[name], reference.blocks[name])

    def test_train_denoise_roundtrip(self, noisy_file, tmp_path):
        ckpt = tmp_path / "m.wedn"
        assert run("train", "--train", noisy_file, "--val", noisy_file, "--out", ckpt,
                   "--epochs", 1, "--seed", 1, "--window-size", 128,
                   "--levels", "16:8:0.3:4,8:4:0.6:4") == 0
        assert ckpt.exists()
        history = ckpt.with_name(ckpt.name + ".history.csv")
        assert history.exists()
        lines = history.read_text().strip().split("\n")
        assert lines[0] == "epoch,train_loss,val_snr_db"
        assert len(lines) == 2
        out = tmp_path / "out.evd"
        assert run("denoise", "--input", noisy_file, "--out", out, "--filter", "wednet",
                   "--checkpoint", ckpt) == 0

    def test_checkpoint_determinism(self, noisy_file, tmp_path):
        a, b = tmp_path / "a.wedn", tmp_path / "b.wedn"
        for out in (a, b):
            assert run("train", "--train", noisy_file, "--out", out, "--epochs", 1,
                       "--seed", 2, "--window-size", 128,
                       "--levels", "16:8:0.3:4,8:4:0.6:4") == 0
        assert a.read_bytes() == b.read_bytes()

    def test_unlabeled_input_rejected(self, tmp_path):
        from evd.core import EventStream, SensorGeometry, write_events

        stream = EventStream([1, 2, 3], [0, 1, 2], [0, 1, 2], [1, 1, 1])
        src = tmp_path / "unlabeled.evd"
        write_events(src, stream, SensorGeometry(width=8, height=8))
        assert run("train", "--train", src, "--out", tmp_path / "m.wedn", "--epochs", 1) == 1


class TestEvalAndBench:
    def test_eval_raw_at_full_ratio_is_zero_db(self, noisy_file, capsys):
        assert run("eval", "--input", noisy_file, "--filters", "raw") == 0
        out = capsys.readouterr().out
        row = [l for l in out.splitlines() if l.startswith("raw,")][0]
        assert row.split(",")[3] == "0.0000"

    def test_eval_without_truth_omits_snr(self, tmp_path, capsys):
        from evd.core import EventStream, SensorGeometry, write_events

        stream = EventStream([1, 2, 3], [0, 1, 2], [0, 1, 2], [1, 1, 1])
        src = tmp_path / "plain.evd"
        write_events(src, stream, SensorGeometry(width=8, height=8))
        assert run("eval", "--input", src, "--filters", "raw,rp") == 0
        out = capsys.readouterr().out
        row = [l for l in out.splitlines() if l.startswith("raw,")][0]
        assert row.split(",")[3] == ""

    def test_bench_single_method_row(self, noisy_file, tmp_path, capsys):
        report = tmp_path / "bench.csv"
        assert run("bench", "--input", noisy_file, "--filters", "rp",
                   "--repetitions", 3, "--out", report) == 0
        lines = report.read_text().strip().split("\n")
        assert len(lines) == 2 and lines[1].startswith("rp,")

    def test_unknown_filter_exits_1(self, noisy_file, tmp_path):
        assert run("denoise", "--input", noisy_file, "--out", tmp_path / "o.evd",
                   "--filter", "rp", "--nnb-count", -1) == 1
