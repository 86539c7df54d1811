import json
from pathlib import Path

import numpy as np
import pytest

from calibrefine.cli import main
from calibrefine import serialize
from calibrefine.geometry import Homography
from calibrefine.pipeline import evaluate


def write_config(path: Path, **scene_overrides) -> Path:
    cfg = {
        "scene": {"n_frames": 40, "n_objects": 8, "seed": 3, **scene_overrides},
        "ransac": {"seed": 3},
        "refine": {"recalib_interval": 20},
    }
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture
def sim_dir(tmp_path):
    cfg = write_config(tmp_path / "config.json")
    out = tmp_path / "sim"
    assert main(["--config", str(cfg), "simulate", "--out", str(out)]) == 0
    return cfg, out


class TestSimulate:
    def test_writes_expected_files(self, tmp_path, sim_dir, capsys):
        _, out = sim_dir
        for name in ("frames.jsonl", "oracle_pairs.jsonl", "ground_truth.json", "gt_pairs.jsonl"):
            assert (out / name).exists()
        frames = serialize.read_frames_jsonl(out / "frames.jsonl")
        assert len(frames) == 40

    def test_invalid_n_frames_names_field(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"scene": {"n_frames": 0}}))
        code = main(["--config", str(cfg), "simulate", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "n_frames" in capsys.readouterr().err

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"scene": {"frames": 10}}))
        code = main(["--config", str(cfg), "simulate", "--out", str(tmp_path / "x")])
        assert code == 2
        assert "frames" in capsys.readouterr().err

    def test_rerun_byte_identical(self, tmp_path):
        cfg = write_config(tmp_path / "config.json")
        out_a, out_b = tmp_path / "a", tmp_path / "b"
        assert main(["--config", str(cfg), "simulate", "--out", str(out_a)]) == 0
        assert main(["--config", str(cfg), "simulate", "--out", str(out_b)]) == 0
        for name in ("frames.jsonl", "oracle_pairs.jsonl", "ground_truth.json", "gt_pairs.jsonl"):
            assert (out_a / name).read_bytes() == (out_b / name).read_bytes()

    def test_seed_sweep_writes_subdirs(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(
            json.dumps({"scene": {"n_frames": 10, "n_objects": 4}, "seeds": [1, 2]})
        )
        out = tmp_path / "sweep"
        assert main(["--config", str(cfg), "simulate", "--out", str(out)]) == 0
        assert (out / "seed_1" / "frames.jsonl").exists()
        assert (out / "seed_2" / "frames.jsonl").exists()

    def test_parallel_sweep_matches_serial(self, tmp_path):
        cfg = tmp_path / "sweep.json"
        cfg.write_text(
            json.dumps({"scene": {"n_frames": 10, "n_objects": 4}, "seeds": [1, 2]})
        )
        serial, parallel = tmp_path / "serial", tmp_path / "parallel"
        assert main(["--config", str(cfg), "simulate", "--out", str(serial)]) == 0
        assert main(["--config", str(cfg), "--jobs", "2", "simulate", "--out", str(parallel)]) == 0
        for seed in (1, 2):
            a = (serial / f"seed_{seed}" / "frames.jsonl").read_bytes()
            b = (parallel / f"seed_{seed}" / "frames.jsonl").read_bytes()
            assert a == b


class TestCalibrate:
    def test_calibrate_and_evaluate_flow(self, tmp_path, sim_dir, capsys):
        cfg, out = sim_dir
        matrix = tmp_path / "coarse.json"
        code = main(
            [
                "--config",
                str(cfg),
                "calibrate",
                "--frames",
                str(out / "frames.jsonl"),
                "--oracle",
                str(out / "oracle_pairs.jsonl"),
                "--out",
                str(matrix),
            ]
        )
        assert code == 0
        printed = capsys.readouterr().out
        assert "aed=" in printed and "rmse=" in printed
        h = serialize.load_homography(matrix)
        gt = serialize.read_ground_truth(out / "ground_truth.json")
        assert np.max(np.abs(h.m - gt.h_true.m)) < 0.05

    def test_empty_oracle_exits_2(self, tmp_path, sim_dir, capsys):
        cfg, out = sim_dir
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code = main(
            [
                "--config",
                str(cfg),
                "calibrate",
                "--frames",
                str(out / "frames.jsonl"),
                "--oracle",
                str(empty),
                "--out",
                str(tmp_path / "m.json"),
            ]
        )
        assert code == 2

    def test_missing_file_exits_3(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        code = main(
            [
                "--config",
                str(cfg),
                "calibrate",
                "--frames",
                str(tmp_path / "nope.jsonl"),
                "--oracle",
                str(out / "oracle_pairs.jsonl"),
                "--out",
                str(tmp_path / "m.json"),
            ]
        )
        assert code == 3

    def test_clustered_pairs_exit_4(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        frames = serialize.read_frames_jsonl(out / "frames.jsonl")
        pairs = serialize.read_pairs_jsonl(out / "oracle_pairs.jsonl")
        # squeeze every camera endpoint into one block: sampling leaves < 4 pairs
        from calibrefine.geometry import Correspondence, PixelPoint

        clustered = [
            Correspondence(
                p.lidar,
                PixelPoint(5.0 + 0.01 * i, 5.0 + 0.01 * i),
                frame_id=p.frame_id,
                source=p.source,
            )
            for i, p in enumerate(pairs)
        ]
        bad = tmp_path / "clustered.jsonl"
        serialize.write_pairs_jsonl(bad, clustered)
        code = main(
            [
                "--config",
                str(cfg),
                "calibrate",
                "--frames",
                str(out / "frames.jsonl"),
                "--oracle",
                str(bad),
                "--out",
                str(tmp_path / "m.json"),
            ]
        )
        assert code == 4
        assert frames  # inputs themselves were fine

    def test_malformed_pairs_exit_2(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        bad = tmp_path / "bad_pairs.jsonl"
        bad.write_text(json.dumps({"frame_id": 0, "lidar": [1.0], "pixel": [2.0, 3.0]}) + "\n")
        code = main(
            [
                "--config",
                str(cfg),
                "calibrate",
                "--frames",
                str(out / "frames.jsonl"),
                "--oracle",
                str(bad),
                "--out",
                str(tmp_path / "m.json"),
            ]
        )
        assert code == 2


class TestRefine:
    def run_calibrate(self, cfg, out, tmp_path):
        matrix = tmp_path / "coarse.json"
        assert (
            main(
                [
                    "--config",
                    str(cfg),
                    "calibrate",
                    "--frames",
                    str(out / "frames.jsonl"),
                    "--oracle",
                    str(out / "oracle_pairs.jsonl"),
                    "--out",
                    str(matrix),
                ]
            )
            == 0
        )
        return matrix

    @pytest.mark.parametrize("mode", ["iterative", "correction", "both"])
    def test_modes_write_their_sidecars(self, tmp_path, sim_dir, mode):
        cfg, out = sim_dir
        matrix = self.run_calibrate(cfg, out, tmp_path)
        refined = tmp_path / f"refined_{mode}.json"
        code = main(
            [
                "--config",
                str(cfg),
                "refine",
                "--frames",
                str(out / "frames.jsonl"),
                "--matrix",
                str(matrix),
                "--mode",
                mode,
                "--out",
                str(refined),
            ]
        )
        assert code == 0
        assert refined.exists()
        if mode in ("iterative", "both"):
            assert refined.with_name(refined.stem + "_checkpoints.csv").exists()
        if mode in ("correction", "both"):
            assert refined.with_name(refined.stem + "_loss_trace.json").exists()

    def test_lenient_flag_keeps_matrix_when_no_pairs(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        # a matrix translated far off-screen: nothing matches within the gate
        gt = serialize.read_ground_truth(out / "ground_truth.json")
        from calibrefine.geometry import compose
        from conftest import translation_homography

        hopeless = compose(translation_homography(3000.0, 3000.0), gt.h_true)
        matrix = tmp_path / "hopeless.json"
        serialize.save_homography(matrix, hopeless)
        args = [
            "--config", str(cfg),
            "refine",
            "--frames", str(out / "frames.jsonl"),
            "--matrix", str(matrix),
            "--mode", "correction",
            "--out", str(tmp_path / "r.json"),
        ]
        assert main(args) == 4  # strict: refinement not applicable
        assert main(args + ["--lenient"]) == 0
        kept = serialize.load_homography(tmp_path / "r.json")
        assert kept == hopeless

    def test_refinement_improves_held_out(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        matrix = self.run_calibrate(cfg, out, tmp_path)
        refined = tmp_path / "refined.json"
        assert (
            main(
                [
                    "--config",
                    str(cfg),
                    "refine",
                    "--frames",
                    str(out / "frames.jsonl"),
                    "--matrix",
                    str(matrix),
                    "--mode",
                    "both",
                    "--out",
                    str(refined),
                ]
            )
            == 0
        )
        gt_pairs = serialize.read_pairs_jsonl(out / "gt_pairs.jsonl")
        before = evaluate(serialize.load_homography(matrix), gt_pairs).aed
        after = evaluate(serialize.load_homography(refined), gt_pairs).aed
        assert after <= before + 1e-9


class TestEvaluate:
    def test_zero_residual_pairs(self, tmp_path, sim_dir, capsys):
        cfg, out = sim_dir
        gt = serialize.read_ground_truth(out / "ground_truth.json")
        matrix = tmp_path / "true.json"
        serialize.save_homography(matrix, gt.h_true)
        report_path = tmp_path / "report.json"
        code = main(
            [
                "evaluate",
                "--matrix",
                str(matrix),
                "--pairs",
                str(out / "gt_pairs.jsonl"),
                "--out",
                str(report_path),
            ]
        )
        assert code == 0
        report = json.loads(report_path.read_text())
        assert report["aed"] < 1e-9
        assert report_path.with_name(report_path.stem + "_hist.csv").exists()

    def test_empty_pairs_exit_2(self, tmp_path):
        matrix = tmp_path / "m.json"
        serialize.save_homography(matrix, Homography.identity())
        empty = tmp_path / "empty.jsonl"
        empty.write_text("")
        code = main(
            ["evaluate", "--matrix", str(matrix), "--pairs", str(empty), "--out", str(tmp_path / "r.json")]
        )
        assert code == 2

    def test_cli_report_matches_library_bitwise(self, tmp_path, sim_dir):
        cfg, out = sim_dir
        gt = serialize.read_ground_truth(out / "ground_truth.json")
        matrix = tmp_path / "m.json"
        serialize.save_homography(matrix, gt.h_true)
        report_path = tmp_path / "report.json"
        main(
            [
                "evaluate",
                "--matrix",
                str(matrix),
                "--pairs",
                str(out / "oracle_pairs.jsonl"),
                "--out",
                str(report_path),
            ]
        )
        pairs = serialize.read_pairs_jsonl(out / "oracle_pairs.jsonl")
        expected = evaluate(serialize.load_homography(matrix), pairs)
        lib_path = tmp_path / "lib_report.json"
        serialize.write_residual_report(lib_path, expected)
        assert lib_path.read_bytes() == report_path.read_bytes()
