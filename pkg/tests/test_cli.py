"""CLI verbs end to end in temp directories, exit codes, and output shapes."""

import json
import os

import numpy as np
import pytest

from mvedit import formats
from mvedit.cli import main


SPEC = {
    "width": 64,
    "height": 64,
    "sphere": {"center": [0, 0, 1.2], "radius": 1.0, "albedo": [0.82, 0.36, 0.30]},
    "mask_object": "sphere",
    "cameras": {"count": 4, "radius": 4.0, "look_at": [0, 0, 1.2], "span_deg": 60},
}


@pytest.fixture()
def spec_path(tmp_path):
    path = tmp_path / "spec.json"
    path.write_text(json.dumps(SPEC))
    return str(path)


@pytest.fixture()
def scene_manifest(tmp_path, spec_path):
    out = tmp_path / "scene"
    assert main(["synth", "--spec", spec_path, "--out", str(out)]) == 0
    return str(out / "manifest.json")


class TestSynth:
    def test_writes_views_and_spec_echo(self, tmp_path, spec_path):
        out = tmp_path / "s"
        assert main(["synth", "--spec", spec_path, "--out", str(out)]) == 0
        names = sorted(os.listdir(out))
        assert "manifest.json" in names and "scene_spec.json" in names
        assert "0000_image.png" in names and "0003_distance.pfm" in names
        assert "0000_gt_mask.png" in names

    def test_refuses_overwrite(self, tmp_path, spec_path):
        out = tmp_path / "s"
        assert main(["synth", "--spec", spec_path, "--out", str(out)]) == 0
        assert main(["synth", "--spec", spec_path, "--out", str(out)]) == 2
        assert main(["synth", "--spec", spec_path, "--out", str(out), "--overwrite"]) == 0

    def test_missing_spec_is_config_error(self, tmp_path):
        rc = main(["synth", "--spec", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")])
        assert rc != 0


class TestPipelineVerbs:
    def test_full_chain(self, tmp_path, scene_manifest):
        refined = tmp_path / "refined"
        assert main(["refine-masks", "--scene", scene_manifest, "--out", str(refined)]) == 0
        refined_manifest = str(refined / "manifest.json")

        order_path = tmp_path / "order.json"
        assert main(["order-views", "--scene", refined_manifest, "--out", str(order_path)]) == 0
        order = json.loads(order_path.read_text())
        assert order["order"][0] == order["reference"] == 0
        assert sorted(order["order"]) == [0, 1, 2, 3]

        edited = tmp_path / "edited"
        assert (
            main(
                [
                    "edit", "--scene", refined_manifest, "--prompt", "a bronze sphere",
                    "--out", str(edited), "--seed", "7",
                ]
            )
            == 0
        )
        session = json.loads((edited / "session.json").read_text())
        assert session["complete"] is True
        assert len(session["views"]) == 4

        report_path = tmp_path / "report.json"
        assert (
            main(
                [
                    "metrics", "--scene", refined_manifest, "--edited", str(edited),
                    "--kind", "reproj", "--out", str(report_path),
                ]
            )
            == 0
        )
        report = json.loads(report_path.read_text())
        assert report["mean"] is not None and report["mean"] >= 0

        for kind in ("consistency", "direction"):
            out = tmp_path / f"{kind}.json"
            assert (
                main(
                    [
                        "metrics", "--scene", refined_manifest, "--edited", str(edited),
                        "--kind", kind, "--out", str(out),
                    ]
                )
                == 0
            )
            assert -1 <= json.loads(out.read_text())["mean"] <= 1

    def test_reproject_verb(self, tmp_path, scene_manifest):
        out = tmp_path / "warp"
        assert (
            main(["reproject", "--scene", scene_manifest, "--src", "0", "--dst", "2", "--out", str(out)])
            == 0
        )
        files = os.listdir(out)
        assert any(f.startswith("warp_") for f in files)
        assert any(f.startswith("vis_") for f in files)

    def test_bad_scene_path_is_data_error(self, tmp_path):
        rc = main(["order-views", "--scene", str(tmp_path / "missing.json")])
        assert rc == 3

    def test_unreachable_remote_backend_is_transport_error(self, tmp_path, scene_manifest):
        rc = main(
            [
                "edit", "--scene", scene_manifest, "--prompt", "p",
                "--out", str(tmp_path / "x"), "--backend", "remote:http://127.0.0.1:1",
            ]
        )
        assert rc == 4

    def test_unknown_backend_is_config_error(self, tmp_path, scene_manifest):
        rc = main(
            ["edit", "--scene", scene_manifest, "--prompt", "p", "--out", str(tmp_path / "x"),
             "--backend", "quantum"]
        )
        assert rc == 2

    def test_json_logging_smoke(self, tmp_path, scene_manifest, capsys):
        out = tmp_path / "warp"
        rc = main(
            ["--log", "json", "reproject", "--scene", scene_manifest, "--src", "0",
             "--dst", "1", "--out", str(out)]
        )
        assert rc == 0


class TestEditOutputs:
    def test_outside_mask_pixels_untouched(self, tmp_path, scene_manifest):
        edited = tmp_path / "edited"
        assert (
            main(["edit", "--scene", scene_manifest, "--prompt", "x", "--out", str(edited),
                  "--seed", "3"])
            == 0
        )
        session = json.loads((edited / "session.json").read_text())
        scene_dir = os.path.dirname(scene_manifest)
        for record in session["views"]:
            original = formats.read_image(os.path.join(scene_dir, f"{record['id']:04d}_image.png"))
            edited_img = formats.read_image(str(edited / record["edited"]))
            mask = formats.read_mask(str(edited / record["mask"]))
            np.testing.assert_array_equal(edited_img[~mask], original[~mask])

    def test_schedule_recorded(self, tmp_path, scene_manifest):
        edited = tmp_path / "edited"
        main(["edit", "--scene", scene_manifest, "--prompt", "x", "--out", str(edited),
              "--n", "5", "--t", "20"])
        session = json.loads((edited / "session.json").read_text())
        reference = session["views"][0]
        assert [e["lo"] for e in reference["schedule"]] == [0]
        follower = session["views"][1]
        assert [(e["lo"], e["hi"]) for e in follower["schedule"]] == [(0, 5), (5, 20)]
