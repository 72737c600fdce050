import json

import numpy as np
import pytest

from emberforge import gltf
from emberforge.cli import main
from emberforge.exr import read_exr, write_exr


CONFIG = {"curation": {"min_vertices": 4, "min_entropy": 0.1,
                       "strength_levels": [1.0, 2.0]}}


@pytest.fixture(scope="module")
def fixture_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("fixtures")
    assert main(["fixtures", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def config_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "cfg.json"
    path.write_text(json.dumps(CONFIG))
    return path


@pytest.fixture(scope="module")
def render_dir(tmp_path_factory, fixture_dir):
    out = tmp_path_factory.mktemp("renders")
    rc = main(["render", "--asset", str(fixture_dir / "led_panel.glb"),
               "--strengths", "1.0,2.0", "--rigs", "1", "--out", str(out),
               "--resolution", "32", "--spp", "2"])
    assert rc == 0
    return out / "led_panel"


class TestExitCodes:
    def test_help_exits_zero(self):
        with pytest.raises(SystemExit) as exc:
            main(["--help"])
        assert exc.value.code == 0

    def test_no_subcommand_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 1

    def test_curate_missing_input(self, tmp_path, capsys):
        rc = main(["curate", "--in", str(tmp_path / "missing"),
                   "--out", str(tmp_path / "v.jsonl")])
        assert rc == 1
        assert "input not found" in capsys.readouterr().err

    def test_unknown_config_key(self, tmp_path, fixture_dir, capsys):
        cfg = tmp_path / "bad.json"
        cfg.write_text(json.dumps({"curation": {"min_verts": 3}}))
        rc = main(["curate", "--in", str(fixture_dir),
                   "--out", str(tmp_path / "v.jsonl"), "--config", str(cfg)])
        assert rc == 1
        assert "unknown curation config" in capsys.readouterr().err

    def test_unknown_classifier_is_processing_error(self, tmp_path,
                                                    fixture_dir):
        rc = main(["curate", "--in", str(fixture_dir),
                   "--out", str(tmp_path / "v.jsonl"),
                   "--classifier", "carrier-pigeon"])
        assert rc == 2

    def test_malformed_asset_exits_one(self, tmp_path):
        bad = tmp_path / "bad.glb"
        bad.write_bytes(b"not a glb at all")
        rc = main(["render", "--asset", str(bad), "--out", str(tmp_path)])
        assert rc == 1


class TestCurate:
    def test_verdicts_for_all_fixtures(self, tmp_path, fixture_dir,
                                       config_path):
        out = tmp_path / "verdicts.jsonl"
        rc = main(["curate", "--in", str(fixture_dir), "--out", str(out),
                   "--config", str(config_path)])
        assert rc == 0
        verdicts = {v["asset_id"]: v
                    for v in map(json.loads, out.read_text().splitlines())}
        assert verdicts["quad"]["rejection_reason"] == "entropy"
        assert verdicts["led_panel"]["rejection_reason"] is None
        assert verdicts["led_panel"]["valid_strengths"]
        assert verdicts["sphere"]["rejection_reason"] is None
        assert verdicts["two_cubes"]["rejection_reason"] == "multiple_objects"


class TestRenderSelectBake:
    def test_render_layout_and_manifest(self, render_dir):
        manifest = json.loads((render_dir / "manifest.json").read_text())
        assert len(manifest["views"]) == 10
        assert manifest["strengths"] == [1.0, 2.0]
        for s in ("1.00", "2.00"):
            for i in range(10):
                for pass_name in ("beauty", "albedo", "emission", "normal",
                                  "position"):
                    path = (render_dir / "rig0" / f"s{s}"
                            / f"view{i:02d}_{pass_name}.exr")
                    assert path.exists(), path

    def test_render_deterministic_across_jobs(self, tmp_path, fixture_dir):
        outs = []
        for jobs in ("1", "3"):
            out = tmp_path / f"jobs{jobs}"
            rc = main(["render", "--asset", str(fixture_dir / "quad.glb"),
                       "--strengths", "1.0", "--out", str(out),
                       "--resolution", "24", "--spp", "2", "--jobs", jobs])
            assert rc == 0
            outs.append((out / "quad" / "rig0" / "s1.00"
                         / "view03_beauty.exr").read_bytes())
        assert outs[0] == outs[1]

    def test_select(self, tmp_path, render_dir, config_path):
        out = tmp_path / "selection.json"
        rc = main(["select", "--renders", str(render_dir),
                   "--config", str(config_path), "--out", str(out)])
        assert rc == 0
        data = json.loads(out.read_text())
        assert data["asset"] == "led_panel"
        assert set(data["valid_strengths"]) <= {1.0, 2.0}
        assert data["valid_strengths"]

    def test_bake_round_trip(self, tmp_path, fixture_dir, render_dir):
        out = tmp_path / "baked.glb"
        rc = main(["bake", "--mesh", str(fixture_dir / "led_panel.glb"),
                   "--views", str(render_dir / "rig0" / "s1.00"),
                   "--strength", "2.0", "--texture-resolution", "64",
                   "--out", str(out)])
        assert rc == 0
        baked = gltf.load_asset(out)
        assert baked.materials.emission_strength == 2.0
        assert baked.materials.albedo.width == 64


class TestEvaluateAndLossTools:
    def test_evaluate_identity(self, tmp_path, fixture_dir):
        proto = tmp_path / "proto.json"
        proto.write_text(json.dumps({"resolution": 32,
                                     "samples_per_pixel": 2}))
        out = tmp_path / "report.json"
        rc = main(["evaluate", "--pred", str(fixture_dir / "led_panel.glb"),
                   "--gt", str(fixture_dir / "led_panel.glb"),
                   "--protocol", str(proto), "--out", str(out)])
        assert rc == 0
        agg = json.loads(out.read_text())["aggregate"]
        assert agg["mean_albedo_psnr"] == 100.0
        assert agg["strength_rmse"] == 0.0

    def test_loss_check(self, tmp_path):
        report = tmp_path / "loss.json"
        assert main(["loss-check", "--report", str(report)]) == 0
        data = json.loads(report.read_text())
        assert data["passed"] is True
        assert data["clean_latent_identity_max_err"] < 1e-12
        assert data["gradient_max_rel_err"] < 1e-5

    def test_toy_ablate(self, tmp_path):
        out = tmp_path / "ablation.csv"
        rc = main(["toy-ablate", "--steps", "30", "--lambdas", "0,0.1",
                   "--out", str(out)])
        assert rc == 0
        rows = out.read_text().splitlines()
        assert len(rows) == 31  # header + one row per step
        summary = json.loads(out.with_suffix(".summary.json").read_text())
        assert set(summary) == {"0.0", "0.1"}

    def test_strength_train_and_predict(self, tmp_path, capsys, rng):
        base = rng.uniform(0.0, 0.4, size=(16, 16, 3))
        entries = []
        for i, s in enumerate(np.linspace(1.0, 3.0, 40)):
            path = tmp_path / f"img{i}.exr"
            write_exr(path, base * s)
            entries.append({"image": str(path), "strength": float(s)})
        manifest = tmp_path / "manifest.json"
        manifest.write_text(json.dumps(entries))
        head = tmp_path / "head.json"
        rc = main(["strength", "train", "--manifest", str(manifest),
                   "--out", str(head), "--epochs", "200"])
        assert rc == 0
        capsys.readouterr()

        query = tmp_path / "query.exr"
        write_exr(query, base * 2.0)
        rc = main(["strength", "predict", "--image", str(query),
                   "--head", str(head)])
        assert rc == 0
        pred = float(capsys.readouterr().out.strip())
        assert abs(pred - 2.0) < 0.5
