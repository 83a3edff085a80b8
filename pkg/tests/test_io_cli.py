"""CSV formats, trace rendering, and the command-line surface."""

import json
import os

import pytest

from masktrack import io_formats
from masktrack.cli import main
from masktrack.masks import Box
from masktrack.metrics import GtEntry
from masktrack.trajectory import Detection


class TestDetectionCsv:
    def test_roundtrip(self, tmp_path):
        stream = {
            1: [Detection(Box(3, 4, 10, 12), 0.95, 1), Detection(Box(40, 4, 9, 9), 0.7, 2)],
            3: [Detection(Box(5, 5, 8, 8), 0.4375, 1)],
        }
        path = tmp_path / "det.csv"
        path.write_text(io_formats.render_detections(stream), encoding="utf-8")
        assert io_formats.parse_detections(str(path)) == stream

    def test_empty_file(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text("", encoding="utf-8")
        assert io_formats.parse_detections(str(path)) == {}

    def test_single_row(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text("4,-1,1,2,3,4,0.9,1,-1\n", encoding="utf-8")
        stream = io_formats.parse_detections(str(path))
        assert stream == {4: [Detection(Box(1, 2, 3, 4), 0.9, 1)]}

    def test_malformed_conf_names_line(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text("1,-1,1,2,3,4,abc,1,-1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 1"):
            io_formats.parse_detections(str(path))

    def test_wrong_field_count_names_line(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text("1,-1,1,2,3,4,0.9,1,-1\n1,-1,1,2\n", encoding="utf-8")
        with pytest.raises(ValueError, match="line 2"):
            io_formats.parse_detections(str(path))

    def test_non_monotone_frames_rejected(self, tmp_path):
        path = tmp_path / "det.csv"
        path.write_text(
            "2,-1,1,2,3,4,0.9,1,-1\n1,-1,1,2,3,4,0.9,1,-1\n", encoding="utf-8"
        )
        with pytest.raises(ValueError, match="line 2"):
            io_formats.parse_detections(str(path))


class TestGtCsv:
    def test_roundtrip_with_ignore(self, tmp_path):
        entries = [
            GtEntry(1, 1, Box(0, 0, 5, 5), 1),
            GtEntry(1, 2, Box(10, 10, 5, 5), 1, ignore=True),
            GtEntry(2, 1, Box(1, 0, 5, 5), 1),
        ]
        path = tmp_path / "gt.csv"
        path.write_text(io_formats.render_gt(entries), encoding="utf-8")
        assert io_formats.parse_gt(str(path)) == entries


class TestCliSimulate:
    def run_simulate(self, out_dir, *extra):
        code = main([
            "simulate", "--scenario", "S1", "--seed", "7",
            "--out", str(out_dir), *extra,
        ])
        assert code == 0

    def test_outputs_present(self, tmp_path, capsys):
        out = tmp_path / "run"
        self.run_simulate(out)
        for name in ("gt.csv", "detections.csv", "results.csv", "trace.jsonl",
                     "report.json", "config.json", "params.json"):
            assert (out / name).exists(), name
        assert "MOTA" in capsys.readouterr().out

    def test_byte_identical_reruns(self, tmp_path):
        first = tmp_path / "one"
        second = tmp_path / "two"
        self.run_simulate(first)
        self.run_simulate(second)
        for name in ("gt.csv", "detections.csv", "results.csv", "trace.jsonl",
                     "report.json", "config.json", "params.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes(), name

    def test_trace_is_json_lines(self, tmp_path):
        out = tmp_path / "run"
        self.run_simulate(out)
        lines = (out / "trace.jsonl").read_text(encoding="utf-8").splitlines()
        events = [json.loads(line) for line in lines]
        assert all(set(e) == {"frame", "event", "id"} for e in events)
        assert any(e["event"] == "purge" for e in events)

    def test_config_echo_honors_overrides(self, tmp_path):
        out = tmp_path / "run"
        self.run_simulate(out, "--det-conf", "0.4")
        cfg = json.loads((out / "config.json").read_text(encoding="utf-8"))
        assert cfg["det_conf_threshold"] == 0.4
        params = json.loads((out / "params.json").read_text(encoding="utf-8"))
        assert params["seed"] == 7


class TestCliEvaluate:
    def test_identical_files_score_one(self, tmp_path, capsys):
        out = tmp_path / "run"
        TestCliSimulate().run_simulate(out)
        code = main([
            "evaluate", "--gt", str(out / "results.csv"),
            "--results", str(out / "results.csv"), "--iou", "0.5",
        ])
        assert code == 0
        printed = capsys.readouterr().out
        assert "1.000" in printed

    def test_report_written(self, tmp_path):
        out = tmp_path / "run"
        TestCliSimulate().run_simulate(out)
        report_path = tmp_path / "report.json"
        code = main([
            "evaluate", "--gt", str(out / "gt.csv"),
            "--results", str(out / "results.csv"),
            "--iou", "0.4", "--out", str(report_path),
        ])
        assert code == 0
        report = json.loads(report_path.read_text(encoding="utf-8"))
        assert report["iou_threshold"] == 0.4

    def test_missing_file_is_error_exit(self, capsys):
        code = main(["evaluate", "--gt", "/nonexistent.csv", "--results", "/also-missing.csv"])
        assert code == 1
        assert "error" in capsys.readouterr().err


class TestCliTrack:
    def test_detections_file_drives_engine(self, tmp_path, capsys):
        sim_out = tmp_path / "sim"
        TestCliSimulate().run_simulate(sim_out)
        track_out = tmp_path / "trk"
        code = main([
            "track", "--scenario", "S1", "--seed", "7",
            "--detections", str(sim_out / "detections.csv"),
            "--out", str(track_out),
        ])
        assert code == 0
        assert (track_out / "results.csv").read_bytes() == \
            (sim_out / "results.csv").read_bytes()


class TestCliAblate:
    def test_coi_off_row_has_more_switches(self, tmp_path, capsys):
        out = tmp_path / "abl"
        code = main([
            "ablate", "--scenario", "S1", "--seed", "7", "--out", str(out),
        ])
        assert code == 0
        payload = json.loads((out / "ablation.json").read_text(encoding="utf-8"))
        assert payload["no-coi"]["IDSW"] > payload["full"]["IDSW"]
        table = capsys.readouterr().out
        assert "no-coi" in table and "IDSW" in table

    def test_jobs_flag_matches_serial(self, tmp_path):
        serial = tmp_path / "serial"
        parallel = tmp_path / "parallel"
        main(["ablate", "--scenario", "S2", "--seed", "3", "--out", str(serial)])
        main(["ablate", "--scenario", "S2", "--seed", "3", "--jobs", "4",
              "--out", str(parallel)])
        assert (serial / "ablation.json").read_bytes() == \
            (parallel / "ablation.json").read_bytes()


class TestCliErrors:
    def test_unknown_scenario(self, capsys):
        code = main(["simulate", "--scenario", "S99", "--out", "/tmp/x"])
        assert code == 1
        assert "unknown scenario" in capsys.readouterr().err

    def test_unknown_flag_exits_nonzero(self):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--scenario", "S1", "--out", "/tmp/x", "--bogus"])
        assert exc.value.code != 0
