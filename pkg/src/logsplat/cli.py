"""Command line driver for the pipeline, local or against a service.

Pipeline subcommands run in-process by default; with --server URL the same
request is posted to a running service instead, so scripts can switch
between the two without changing shape. Exit codes: 0 success, 2 domain
failures (bad inputs, missing files, a check that did not pass), 64 usage,
1 anything unexpected.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import httpx
import numpy as np

from . import __version__
from .cameras import PinholeCamera, camera_from_dict
from .errors import ConfigError, LogsplatError, MissingFile, ServiceError
from .flowmatch import integrate, ot_target_velocity
from .gaussians import load_asset, render
from .imgio import save_image
from .logstore import load_manifest
from .metrics import (
    HttpJudgeTransport,
    benchmark_manifest_check,
    format_preference_row,
    load_benchmark_manifest,
)
from .pipeline import (
    PRESETS,
    Workspace,
    aggregate_reports,
    config_from_dict,
    judge_workspaces,
    run_evaluate,
    run_generate,
    run_harvest,
    run_lift,
    select_views_one,
    synth_scene,
)

HTTP_TIMEOUT_S = 600.0  # lift over http renders every target view


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(64, f"{self.prog}: error: {message}\n")


def _post(server: str, path: str, payload: dict) -> dict:
    resp = httpx.post(server.rstrip("/") + path, json=payload, timeout=HTTP_TIMEOUT_S)
    if resp.status_code != 200:
        try:
            body = resp.json()
        except json.JSONDecodeError:
            body = {}
        name = body.get("error", f"HTTP {resp.status_code}")
        detail = body.get("detail", resp.text[:200])
        raise ServiceError(f"{name}: {detail}")
    return resp.json()


def _config_doc(args) -> dict:
    """Raw config document plus command line overrides.

    Kept as a plain dict so server mode forwards exactly what local mode
    would parse; validation happens wherever the pipeline actually runs.
    """
    doc = {}
    if getattr(args, "config", None):
        p = Path(args.config)
        if not p.is_file():
            raise MissingFile(f"config file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: invalid JSON ({exc})") from exc
    if getattr(args, "seed", None) is not None:
        doc["seed"] = args.seed
    if getattr(args, "jobs", None) is not None:
        doc["jobs"] = args.jobs
    return doc


def _finish(args, result) -> None:
    if args.json:
        print(json.dumps(result, indent=2, sort_keys=True))


def _say(args, line: str) -> None:
    if not args.json:
        print(line)


def _worst(results: list[dict]) -> int:
    return 2 if any(r.get("error") for r in results) else 0


def cmd_synth(args) -> int:
    if args.server:
        result = _post(args.server, "/synth", {"preset": args.preset, "seed": args.seed, "root": args.root})
    else:
        log, _ = synth_scene(args.preset, args.seed, args.root)
        result = {
            "root": str(log.root),
            "session_id": log.session_id,
            "n_cameras": len(log.cameras),
            "n_frames": len(log.frames),
            "track_ids": sorted(log.tracks),
        }
    _say(args, f"{result['session_id']}: {result['n_cameras']} cameras, "
               f"{len(result['track_ids'])} tracks -> {result['root']}")
    _finish(args, result)
    return 0


def cmd_harvest(args) -> int:
    doc = _config_doc(args)
    if args.server:
        result = _post(args.server, "/harvest",
                       {"manifest": args.manifest, "workspace": args.workspace, "config": doc})
    else:
        cfg = config_from_dict(doc)
        log = load_manifest(args.manifest)
        result = {"workspace": args.workspace, "results": run_harvest(log, args.workspace, cfg)}
    for r in result["results"]:
        if r["error"]:
            _say(args, f"{r['object_id']}: ERROR {r['error']}")
        else:
            _say(args, f"{r['object_id']}: {r['harvest']['n_candidates']} candidates, "
                       f"{r['harvest']['n_views']} views, {r['select']['n_selected']} selected "
                       f"+ {r['select']['n_held_out']} held out")
    _finish(args, result)
    return _worst(result["results"])


def cmd_select_views(args) -> int:
    cfg = config_from_dict(_config_doc(args))
    ws = Workspace(args.workspace)
    results = []
    for inst in ws.instances():
        try:
            rec = select_views_one(inst, cfg)
            results.append({"object_id": inst.object_id, "select": rec, "error": None})
            _say(args, f"{inst.object_id}: {rec['n_selected']} selected + {rec['n_held_out']} held out")
        except LogsplatError as exc:
            results.append({"object_id": inst.object_id, "select": None, "error": str(exc)})
            _say(args, f"{inst.object_id}: ERROR {exc}")
    _finish(args, {"workspace": args.workspace, "results": results})
    return _worst(results)


def cmd_generate(args) -> int:
    doc = _config_doc(args)
    if args.server:
        result = _post(args.server, "/generate", {"workspace": args.workspace, "config": doc})
    else:
        result = {"workspace": args.workspace,
                  "results": run_generate(args.workspace, config_from_dict(doc))}
    for r in result["results"]:
        if r["error"]:
            _say(args, f"{r['object_id']}: ERROR {r['error']}")
        else:
            _say(args, f"{r['object_id']}: {r['generate']['n_images']} targets ({r['generate']['mode']})")
    _finish(args, result)
    return _worst(result["results"])


def cmd_lift(args) -> int:
    doc = _config_doc(args)
    if args.server:
        result = _post(args.server, "/lift", {"workspace": args.workspace, "config": doc})
    else:
        result = {"workspace": args.workspace,
                  "results": run_lift(args.workspace, config_from_dict(doc))}
    for r in result["results"]:
        if r["error"]:
            _say(args, f"{r['object_id']}: ERROR {r['error']}")
        else:
            rec = r["lift"]
            _say(args, f"{r['object_id']}: {rec['n_gaussians']} gaussians ({rec['mode']}), "
                       f"recon {rec['recon_loss']:.4f} vs baseline {rec['baseline_loss']:.4f}")
    _finish(args, result)
    return _worst(result["results"])


def _judge_doc(args, doc: dict) -> dict:
    if args.server:
        return _post(args.server, "/judge", {
            "workspace": args.workspace,
            "baseline_workspace": args.judge_baseline,
            "baseline_name": args.baseline_name,
            "emit_dir": args.emit_judge,
            "config": doc,
        })
    cfg = config_from_dict(doc)
    transport = None
    if args.emit_judge is None and cfg.judge.endpoint:
        transport = HttpJudgeTransport(
            cfg.judge.endpoint,
            token_env=cfg.judge.token_env,
            timeout_s=cfg.judge.timeout_s,
            retries=cfg.judge.retries,
        )
    return judge_workspaces(
        args.workspace, args.judge_baseline, cfg, args.baseline_name,
        transport=transport, emit_dir=args.emit_judge,
    )


def cmd_eval(args) -> int:
    doc = _config_doc(args)
    if args.server:
        result = _post(args.server, "/evaluate", {"workspace": args.workspace, "config": doc})
    else:
        results = run_evaluate(args.workspace, config_from_dict(doc))
        result = {"workspace": args.workspace, "results": results,
                  "aggregate": aggregate_reports(args.workspace)}
    for r in result["results"]:
        if r["error"]:
            _say(args, f"{r['object_id']}: ERROR {r['error']}")
        else:
            m = r["report"]["means"]
            parts = [f"{k} {m[k]:.4f}" for k in ("psnr", "ssim", "ed_r", "ed_p") if m[k] is not None]
            _say(args, f"{r['object_id']}: " + ", ".join(parts))

    if args.judge_baseline:
        jdoc = _judge_doc(args, doc)
        result["judge"] = jdoc
        if "emitted" in jdoc:
            _say(args, f"judge: emitted {jdoc['emitted']} tasks to {jdoc['dir']}")
        else:
            for name, summary in jdoc["aggregate"].items():
                macro = summary.get("macro")
                if macro:
                    _say(args, f"judge vs {name}: ours / baseline = "
                               + format_preference_row(macro["ours_pct"], macro["baseline_pct"]))
    _finish(args, result)
    return _worst(result["results"])


def cmd_render(args) -> int:
    asset = load_asset(args.asset)
    try:
        doc = json.loads(Path(args.cameras).read_text())
    except FileNotFoundError:
        raise MissingFile(f"camera file not found: {args.cameras}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{args.cameras}: invalid JSON ({exc})")
    dicts = doc["cameras"] if isinstance(doc, dict) else doc
    if not isinstance(dicts, list) or not dicts:
        raise ConfigError("camera file must hold a list of cameras (or {'cameras': [...]})")
    out_dir = Path(args.out_dir)
    for i, d in enumerate(dicts):
        cam = camera_from_dict(d)
        if not isinstance(cam, PinholeCamera):
            raise ConfigError(f"camera {i} is {d.get('model')!r}; render targets must be pinhole")
        result = render(asset, cam, background=tuple(args.background))
        save_image(out_dir / f"render_{i:02d}.png", result.image)
    _say(args, f"rendered {len(dicts)} views of {len(asset)} gaussians -> {out_dir}")
    _finish(args, {"out_dir": str(out_dir), "n_images": len(dicts), "n_gaussians": len(asset)})
    return 0


def cmd_bench_check(args) -> int:
    table = benchmark_manifest_check(load_benchmark_manifest(args.manifest))
    matches = table.matches_expected()
    if not args.json:
        width = max(len(name) for name, *_ in table.rows())
        print(f"{'class':<{width}}  {'A':>6}  {'B':>6}  {'total':>6}")
        for name, a, b, total in table.rows():
            print(f"{name:<{width}}  {a:>6}  {b:>6}  {total:>6}")
        print(f"matches published census: {'yes' if matches else 'no'}")
    _finish(args, {**table.to_dict(), "matches_expected": matches})
    return 0 if matches else 2


def cmd_fm_demo(args) -> int:
    # v(x, t) = x flows x0 to x0 * e; fixed-step errors against that truth
    # expose each solver's convergence order.
    field = lambda x, t: x
    x0 = np.ones(4)
    truth = x0 * np.e
    rows = []
    for n in (8, 16, 32, 64):
        e_euler = float(np.abs(integrate(field, x0, n, "euler") - truth).max())
        e_heun = float(np.abs(integrate(field, x0, n, "heun") - truth).max())
        rows.append({"steps": n, "euler": e_euler, "heun": e_heun})
    euler_order = float(np.log2(rows[-2]["euler"] / rows[-1]["euler"]))
    heun_order = float(np.log2(rows[-2]["heun"] / rows[-1]["heun"]))

    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 5))
    ot_err = float(np.abs(integrate(lambda x, t: ot_target_velocity(a, b), a, 1, "euler") - b).max())

    if not args.json:
        print("velocity field v(x, t) = x, exact flow x * e")
        print("steps   euler error   heun error")
        for r in rows:
            print(f"{r['steps']:>5}   {r['euler']:.3e}     {r['heun']:.3e}")
        print(f"observed order: euler {euler_order:.2f}, heun {heun_order:.2f}")
        print(f"straight-line transport, one euler step: max endpoint error {ot_err:.1e}")
    _finish(args, {"rows": rows, "euler_order": euler_order, "heun_order": heun_order,
                   "ot_endpoint_error": ot_err})
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("logsplat.service:app", host=args.host, port=args.port)
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="logsplat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"logsplat {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")

    out = _Parser(add_help=False)
    out.add_argument("--json", action="store_true", help="print the full result as JSON")

    remote = _Parser(add_help=False)
    remote.add_argument("--server", metavar="URL", help="post to a running service instead of running locally")

    cfg = _Parser(add_help=False)
    cfg.add_argument("--config", metavar="FILE", help="pipeline config JSON (partial; defaults fill the rest)")
    cfg.add_argument("--seed", type=int, help="override config seed")
    cfg.add_argument("--jobs", type=int, help="override config jobs (harvest concurrency)")

    p = sub.add_parser("synth", parents=[out, remote], help="write a synthetic scene with exact ground truth")
    p.add_argument("--preset", required=True, choices=PRESETS)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--root", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("harvest", parents=[out, remote, cfg],
                       help="crop per-object views from a log and select them")
    p.add_argument("--manifest", required=True)
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_harvest)

    p = sub.add_parser("select-views", parents=[out, cfg],
                       help="re-run view selection over an existing workspace")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_select_views)

    p = sub.add_parser("generate", parents=[out, remote, cfg], help="produce target views per instance")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("lift", parents=[out, remote, cfg], help="build gaussian assets from target views")
    p.add_argument("--workspace", required=True)
    p.set_defaults(func=cmd_lift)

    p = sub.add_parser("eval", parents=[out, remote, cfg],
                       help="score assets on held-out views; optionally judge against a baseline")
    p.add_argument("--workspace", required=True)
    p.add_argument("--judge-baseline", metavar="WORKSPACE",
                   help="second workspace to compare against with the pairwise judge")
    p.add_argument("--baseline-name", default="baseline")
    p.add_argument("--emit-judge", metavar="DIR",
                   help="write judge payloads to DIR instead of calling an endpoint")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("render", parents=[out], help="render an asset through cameras from a JSON file")
    p.add_argument("--asset", required=True)
    p.add_argument("--cameras", required=True,
                   help="JSON list of camera dicts, or a targets/cameras.json document")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--background", nargs=3, type=float, default=[0.0, 0.0, 0.0], metavar="C")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("bench-check", parents=[out],
                       help="count a benchmark manifest against the published census")
    p.add_argument("--manifest", required=True)
    p.set_defaults(func=cmd_bench_check)

    p = sub.add_parser("fm-demo", parents=[out], help="show solver convergence orders on a known flow")
    p.set_defaults(func=cmd_fm_demo)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits itself on --help (0) and usage errors (64 via
        # _Parser.error); fold both into the return-code contract.
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_help()
        return 64
    try:
        return args.func(args)
    except LogsplatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except httpx.HTTPError as exc:
        print(f"error: could not reach server ({exc})", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last resort
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
