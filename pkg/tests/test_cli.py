"""Exit codes, output modes, and server-mode routing for the CLI."""

import json
import shutil

import httpx
import numpy as np
import pytest
from fastapi.testclient import TestClient

import logsplat.cli as cli
from logsplat.metrics import EXPECTED_CENSUS
from logsplat.service import create_app


def _run(capsys, argv):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def _run_json(capsys, argv):
    code, out, err = _run(capsys, argv + ["--json"])
    return code, json.loads(out), err


def test_no_arguments_is_usage(capsys):
    code, out, _ = _run(capsys, [])
    assert code == 64
    assert "usage:" in out


@pytest.mark.parametrize(
    "argv",
    [
        ["--help"],
        ["synth", "--help"],
        ["harvest", "--help"],
        ["select-views", "--help"],
        ["generate", "--help"],
        ["lift", "--help"],
        ["eval", "--help"],
        ["render", "--help"],
        ["bench-check", "--help"],
        ["fm-demo", "--help"],
        ["serve", "--help"],
    ],
)
def test_every_help_exits_zero(argv, capsys):
    assert cli.main(argv) == 0
    assert "usage:" in capsys.readouterr().out


def test_bad_preset_is_usage(capsys):
    code, _, err = _run(capsys, ["synth", "--preset", "ring99", "--root", "x"])
    assert code == 64
    assert "invalid choice" in err


def test_missing_manifest_is_domain_error(capsys, tmp_path):
    code, _, err = _run(
        capsys, ["harvest", "--manifest", str(tmp_path / "nope.json"), "--workspace", str(tmp_path)]
    )
    assert code == 2
    assert err.startswith("error:")


def test_synth_harvest_select_json(capsys, tmp_path):
    scene = str(tmp_path / "scene")
    ws = str(tmp_path / "ws")
    code, body, _ = _run_json(capsys, ["synth", "--preset", "ring8", "--seed", "7", "--root", scene])
    assert code == 0
    assert body["track_ids"] == ["cube0"]

    code, body, _ = _run_json(
        capsys, ["harvest", "--manifest", scene + "/manifest.json", "--workspace", ws]
    )
    assert code == 0
    (row,) = body["results"]
    assert row["harvest"]["n_views"] == 8
    assert row["select"]["n_held_out"] == 2

    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"select": {"held_out": 0}}')
    code, body, _ = _run_json(
        capsys, ["select-views", "--workspace", ws, "--config", str(cfg)]
    )
    assert code == 0
    assert body["results"][0]["select"]["n_selected"] == 8

    # eval before lift: the per-object failure lands in the report lines
    # and the exit code flags it
    code, out, _ = _run(capsys, ["eval", "--workspace", ws, "--config", str(cfg)])
    assert code == 2
    assert "ERROR" in out and "lift/select have not run" in out


def test_render_cli(capsys, tmp_path, ring8_ws):
    out_dir = tmp_path / "renders"
    code, body, _ = _run_json(
        capsys,
        [
            "render",
            "--asset", str(ring8_ws / "cube0" / "asset.gsa"),
            "--cameras", str(ring8_ws / "cube0" / "targets" / "cameras.json"),
            "--out-dir", str(out_dir),
        ],
    )
    assert code == 0
    assert body["n_images"] == 16
    assert sorted(p.name for p in out_dir.iterdir())[0] == "render_00.png"

    fisheye = tmp_path / "fisheye.json"
    fisheye.write_text(json.dumps([{
        "model": "f-theta", "poly": [180.0], "cx": 64.0, "cy": 64.0,
        "width": 128, "height": 128, "max_theta": 1.4,
        "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.0, 0.0, 4.0],
    }]))
    code, _, err = _run(
        capsys,
        ["render", "--asset", str(ring8_ws / "cube0" / "asset.gsa"),
         "--cameras", str(fisheye), "--out-dir", str(out_dir)],
    )
    assert code == 2
    assert "pinhole" in err


def test_eval_judge_emit(capsys, tmp_path, ring8_ws):
    ours, base = tmp_path / "ours", tmp_path / "base"
    shutil.copytree(ring8_ws, ours)
    shutil.copytree(ring8_ws, base)
    code, body, _ = _run_json(
        capsys,
        ["eval", "--workspace", str(ours), "--judge-baseline", str(base),
         "--emit-judge", str(tmp_path / "emit")],
    )
    assert code == 0
    assert body["judge"]["emitted"] == 1
    assert (tmp_path / "emit" / "index.json").is_file()


def test_bench_check(capsys, tmp_path):
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"entries": [
        {"instance_id": "x", "object_class": "other", "split": "A"},
    ]}))
    code, out, _ = _run(capsys, ["bench-check", "--manifest", str(small)])
    assert code == 2
    assert "matches published census: no" in out

    entries = []
    for cls, (n_a, n_b) in EXPECTED_CENSUS.items():
        entries.extend(
            {"instance_id": f"{cls}_a{i}", "object_class": cls, "split": "A"} for i in range(n_a)
        )
        entries.extend(
            {"instance_id": f"{cls}_b{i}", "object_class": cls, "split": "B"} for i in range(n_b)
        )
    full = tmp_path / "full.json"
    full.write_text(json.dumps({"entries": entries}))
    code, body, _ = _run_json(capsys, ["bench-check", "--manifest", str(full)])
    assert code == 0
    assert body["matches_expected"] is True
    assert body["totals"] == {"A": 2206, "B": 1510, "all": 3716}


def test_fm_demo(capsys):
    code, body, _ = _run_json(capsys, ["fm-demo"])
    assert code == 0
    assert 0.7 <= body["euler_order"] <= 1.3
    assert body["heun_order"] >= 1.7
    assert body["ot_endpoint_error"] <= 1e-12


@pytest.fixture()
def service_shim(monkeypatch):
    """Route the CLI's httpx.post calls into an in-process service."""
    client = TestClient(create_app())

    def fake_post(url, json=None, timeout=None):
        assert url.startswith("http://svc")
        return client.post(url.removeprefix("http://svc"), json=json)

    monkeypatch.setattr(cli.httpx, "post", fake_post)
    return "http://svc"


def test_pipeline_through_server(capsys, tmp_path, service_shim):
    scene = str(tmp_path / "scene")
    ws = str(tmp_path / "ws")
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"generator": {"mode": "copy_nearest"}}')
    base = ["--server", service_shim, "--json"]

    code, _, _ = _run_json(
        capsys, ["synth", "--preset", "ring8", "--seed", "7", "--root", scene, "--server", service_shim]
    )
    assert code == 0
    for argv in (
        ["harvest", "--manifest", scene + "/manifest.json", "--workspace", ws, "--config", str(cfg)],
        ["generate", "--workspace", ws, "--config", str(cfg)],
        ["lift", "--workspace", ws, "--config", str(cfg)],
        ["eval", "--workspace", ws, "--config", str(cfg)],
    ):
        code, out, err = _run(capsys, argv + ["--server", service_shim])
        assert code == 0, (argv[0], err)
    assert (tmp_path / "ws" / "cube0" / "report.json").is_file()

    code, _, err = _run(
        capsys,
        ["harvest", "--manifest", str(tmp_path / "nope.json"), "--workspace", ws,
         "--server", service_shim],
    )
    assert code == 2
    assert "MissingFile" in err


def test_unreachable_server(capsys, monkeypatch):
    def refuse(url, json=None, timeout=None):
        raise httpx.ConnectError("connection refused")

    monkeypatch.setattr(cli.httpx, "post", refuse)
    code, _, err = _run(
        capsys, ["synth", "--preset", "ring8", "--root", "x", "--server", "http://down"]
    )
    assert code == 1
    assert "could not reach server" in err
