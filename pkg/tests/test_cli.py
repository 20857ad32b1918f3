import json
import subprocess
import sys

import pytest

from vtg.cli import build_parser, main
from vtg.grid import read_vtg
from vtg.mesh import load_obj


class TestParser:
    def test_commands(self):
        p = build_parser()
        for cmd in ("gen-shapes", "gen-dataset", "train", "complete", "eval", "report"):
            with pytest.raises(SystemExit) as exc:
                p.parse_args([cmd, "--help"])
            assert exc.value.code == 0

    def test_mode_choices(self):
        args = build_parser().parse_args(["train", "--data", "d", "--mode", "tactile", "--out", "c"])
        assert args.threshold == 0.5 and args.augment is None
        with pytest.raises(SystemExit):
            build_parser().parse_args(["train", "--data", "d", "--mode", "sonar", "--out", "c"])


class TestCommands:
    def test_gen_shapes(self, tmp_path, capsys):
        assert main(["gen-shapes", "--out", str(tmp_path), "--count", "4", "--holdout", "1", "--dim", "12"]) == 0
        m = json.loads((tmp_path / "manifest.json").read_text())
        assert [e["split"] for e in m["entries"]] == ["train_view"] * 3 + ["holdout_mesh"]
        gt = read_vtg(tmp_path / m["entries"][0]["files"]["gt"])
        assert gt.frame.dims == (12, 12, 12) and gt.count > 0

    def test_gen_shapes_bad_primitive(self, tmp_path):
        with pytest.raises(SystemExit):
            main(["gen-shapes", "--out", str(tmp_path), "--count", "1", "--primitives", "box,cone"])

    def test_pipeline(self, tmp_path, tiny_config_file, capsys):
        data = tmp_path / "data"
        assert main(["gen-dataset", "--out", str(data), "--config", str(tiny_config_file)]) == 0
        ckpt = tmp_path / "depth.ckpt"
        log = tmp_path / "train.jsonl"
        assert main(["train", "--data", str(data), "--mode", "depth", "--out", str(ckpt), "--epochs", "1",
                     "--log", str(log), "--augment"]) == 0
        lines = [json.loads(x) for x in log.read_text().splitlines()]
        assert lines[0]["train_meshes"] == ["m000", "m001"]
        assert lines[1]["epoch"] == 1
        res = tmp_path / "out" / "results.jsonl"
        assert main(["eval", "--data", str(data), "--out", str(res), "--methods", "partial,hull,cnn-depth",
                     "--ckpt-depth", str(ckpt)]) == 0
        assert len(res.read_text().splitlines()) == 15
        assert (tmp_path / "out" / "jaccard.csv").exists()
        capsys.readouterr()
        assert main(["report", "--results", str(res), "--out-dir", str(tmp_path / "rep")]) == 0
        assert "Convex Hull" in capsys.readouterr().out

        entry = json.loads((data / "manifest.json").read_text())["entries"][0]
        f = {k: str(data / v) for k, v in entry["files"].items()}
        obj = tmp_path / "hull.obj"
        assert main(["complete", "--method", "hull", "--depth", f["depth"], "--tactile", f["tactile"],
                     "--depth-cloud", f["depth_cloud"], "--tactile-cloud", f["tactile_cloud"],
                     "--out", str(obj), "--repeats", "1"]) == 0
        assert load_obj(obj).is_watertight()
        timing = json.loads(obj.with_suffix(".json").read_text())
        assert timing["method"] == "hull" and timing["seconds"] > 0
        assert main(["complete", "--method", "cnn-depth", "--depth", f["depth"], "--tactile", f["tactile"],
                     "--checkpoint", str(ckpt), "--out", str(tmp_path / "cnn.obj"), "--repeats", "1",
                     "--threshold", "0.3"]) == 0

    def test_eval_needs_checkpoints(self, tiny_dataset, tmp_path):
        with pytest.raises(SystemExit):
            main(["eval", "--data", str(tiny_dataset), "--out", str(tmp_path / "r.jsonl"), "--methods", "cnn-tactile"])

    def test_console_script(self):
        out = subprocess.run([sys.executable, "-m", "vtg.cli", "--help"], capture_output=True, text=True)
        assert out.returncode == 0 and "gen-dataset" in out.stdout
