"""Command-line entry point tying the pipeline together.

Subcommands: gen-ml, encode, render, replay, compare, serve. A JSON config
file can stand in for flags (--config), and the SPLINECAST_STORE environment
variable supplies the store root when --store is omitted. Exit codes:
0 success, 2 usage, 3 data/format, 4 capacity.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import downsample, encoder, metrics, runtime, store, volume
from .errors import CapacityError, FormatError, MissingBlockError, PartitionError
from .partition import LODManifest
from .render import (
    PointOfView,
    RenderParams,
    TransferFunction,
    render,
    render_ground_truth,
    select_visible,
)

STORE_ENV = "SPLINECAST_STORE"

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_CAPACITY = 4


def _size(text: str):
    try:
        w, h = text.lower().split("x")
        return int(w), int(h)
    except ValueError:
        raise argparse.ArgumentTypeError(f"size must look like 512x512, got {text!r}")


def _mode(text: str) -> str:
    if text in ("adaptive", "exhaustive"):
        return text
    if text.startswith("fixed:"):
        try:
            int(text.split(":", 1)[1])
            return text
        except ValueError:
            pass
    raise argparse.ArgumentTypeError(
        f"mode must be adaptive, exhaustive, or fixed:<ncp>, got {text!r}"
    )


def _float_list(text: str):
    try:
        return [float(t) for t in text.split(",") if t]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def _store_root(args) -> Path:
    root = args.store or os.environ.get(STORE_ENV)
    if not root:
        raise FormatError(f"no store given (use --store or ${STORE_ENV})")
    return Path(root)


def _load_tf(spec: str) -> TransferFunction:
    if spec == "ml":
        return TransferFunction.ml_preset()
    return TransferFunction.load(spec)


def _pov_from_args(args) -> PointOfView:
    return PointOfView(args.position, args.direction, args.up, args.fov)


def _add_camera_flags(p) -> None:
    p.add_argument("--position", type=float, nargs=3, default=[0.0, 0.0, 3.0],
                   metavar=("X", "Y", "Z"))
    p.add_argument("--direction", type=float, nargs=3, default=[0.0, 0.0, -1.0],
                   metavar=("DX", "DY", "DZ"))
    p.add_argument("--up", type=float, nargs=3, default=[0.0, 1.0, 0.0])
    p.add_argument("--fov", type=float, default=45.0, help="vertical field of view, degrees")


def _add_render_flags(p) -> None:
    p.add_argument("--tf", default="ml", help="transfer function JSON path, or 'ml'")
    p.add_argument("--size", type=_size, default=(512, 512), help="WxH (default 512x512)")
    p.add_argument("--sample-distance", type=float, default=1e-3)
    p.add_argument("--o-max", type=float, default=0.99)


def _params_from_args(args) -> RenderParams:
    w, h = args.size
    return RenderParams(
        width=w, height=h, sample_distance=args.sample_distance, o_max=args.o_max
    )


def cmd_gen_ml(args) -> int:
    dims = tuple(args.dims) if len(args.dims) == 3 else (args.dims[0],) * 3
    bounds = [[args.bounds[0], args.bounds[1]]] * 3
    field = volume.marschner_lobb(f_m=args.fm, alpha=args.alpha, bounds=bounds)
    vol = volume.sample_grid(field, dims)
    volume.write_raw(args.out, vol)
    print(json.dumps({"out": str(args.out), "dims": list(dims), "bounds": bounds}))
    return EXIT_OK


def cmd_encode(args) -> int:
    vol = volume.read_raw(args.input)
    root = _store_root(args)
    raw_bytes = vol.samples.nbytes
    if args.backend == "ds":
        manifest, blocks = downsample.build_ds_store(
            vol, levels=args.levels, micro_dims=args.micro,
            coarsest=args.coarsest, ghost=args.ghost,
        )
        downsample.write_ds_store(root, manifest, blocks)
        summary = {
            "backend": "ds",
            "blocks": len(blocks),
            "store_bytes": manifest.total_model_bytes(),
            "compression_ratio": encoder.compression_ratio(manifest, raw_bytes),
        }
    else:
        manifest, models, stats = encoder.encode_volume(
            vol, levels=args.levels, micro_dims=args.micro, degree=args.degree,
            error_bound=args.error_bound, coarsest=args.coarsest, mode=args.mode,
            workers=args.workers,
        )
        store.write_store(root, manifest, models)
        summary = {
            "backend": "mfa",
            "blocks": stats.total_blocks,
            "searched_blocks": stats.searched_blocks,
            "store_bytes": manifest.total_model_bytes(),
            "compression_ratio": encoder.compression_ratio(manifest, raw_bytes),
            "stats": stats.to_json(),
        }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def _load_resident(root: Path, manifest: LODManifest, pov, aspect: float):
    loader = runtime.make_loader(root, manifest)
    return {addr: loader(addr) for addr in select_visible(pov, manifest, aspect)}


def cmd_render(args) -> int:
    root = _store_root(args)
    manifest = LODManifest.load(root)
    pov = _pov_from_args(args)
    params = _params_from_args(args)
    resident = _load_resident(root, manifest, pov, params.aspect)
    frame = render(pov, resident, _load_tf(args.tf), params)
    frame.save_png(args.out)
    print(json.dumps({"out": str(args.out), "visible_blocks": len(resident)}))
    return EXIT_OK


def cmd_replay(args) -> int:
    root = _store_root(args)
    manifest = LODManifest.load(root)
    povs = runtime.load_trajectory(args.trajectory)
    cache = runtime.ModelCache(args.cache_capacity, runtime.make_loader(root, manifest))
    params = _params_from_args(args)
    keep = args.frames_dir is not None
    timings, frames, agg = runtime.replay(
        povs, manifest, cache, _load_tf(args.tf), params,
        prefetch=args.prefetch, keep_frames=keep,
    )
    if keep:
        out = Path(args.frames_dir)
        out.mkdir(parents=True, exist_ok=True)
        for i, fr in enumerate(frames):
            fr.save_png(out / f"frame-{i:04d}.png")
    rows = runtime.timings_rows(timings)
    if args.stats_json:
        # The JSON report also records which blocks each frame drew from,
        # so external clients can check their own visibility against it.
        visible = [
            [a.key for a in select_visible(p, manifest, params.aspect)] for p in povs
        ]
        enriched = [dict(r, visible=v) for r, v in zip(rows, visible)]
        metrics.write_report(enriched, args.stats_json)
    if args.stats_csv:
        metrics.write_report(rows, args.stats_csv)
    print(json.dumps({"aggregate": agg, "cache": cache.counters()}, indent=2))
    return EXIT_OK


def cmd_compare(args) -> int:
    if not args.mfa_store and not args.ds_store:
        raise FormatError("compare needs --mfa-store and/or --ds-store")
    povs = runtime.load_trajectory(args.trajectory)
    tf = _load_tf(args.tf)
    bounds = [[args.bounds[0], args.bounds[1]]] * 3
    field = volume.marschner_lobb(f_m=args.fm, alpha=args.alpha, bounds=bounds)
    backends = []
    for name, path in (("mfa", args.mfa_store), ("ds", args.ds_store)):
        if path:
            manifest = LODManifest.load(Path(path))
            backends.append((name, Path(path), manifest))
    rows = []
    w, h = args.size
    for sd in args.sample_distances:
        params = RenderParams(width=w, height=h, sample_distance=sd, o_max=args.o_max)
        for i, pov in enumerate(povs):
            truth = render_ground_truth(pov, field, tf, params)
            for name, path, manifest in backends:
                resident = _load_resident(path, manifest, pov, params.aspect)
                frame = render(pov, resident, tf, params)
                row = metrics.frame_report(
                    f"{name}-sd{sd}-pov{i}", frame, truth,
                    nbytes=manifest.total_model_bytes(),
                )
                row.update({"backend": name, "sample_distance": sd, "pov": i})
                rows.append(row)
    if args.out:
        metrics.write_report(rows, args.out)
    summary = {}
    for name, _, _ in backends:
        sub = [r for r in rows if r["backend"] == name]
        finite = [r["psnr_db"] for r in sub if np.isfinite(r["psnr_db"])]
        summary[name] = {
            "mean_psnr_db": float(np.mean(finite)) if finite else None,
            "mean_ssim": float(np.mean([r["ssim"] for r in sub])),
            "store_bytes": sub[0]["bytes"] if sub else None,
        }
    print(json.dumps(summary, indent=2))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(_store_root(args), max_sessions=args.max_sessions)
    uvicorn.run(app, host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splinecast",
        description="Out-of-core volume rendering from compact spline block models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-ml", help="synthesize the test field to a raw volume")
    p.add_argument("--dims", type=int, nargs="+", default=[129],
                   help="grid samples per axis (one value or three)")
    p.add_argument("--bounds", type=float, nargs=2, default=[0.0, 7.0])
    p.add_argument("--fm", type=float, default=6.0)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_ml)

    p = sub.add_parser("encode", help="partition and encode a raw volume into a store")
    p.add_argument("--input", required=True, help="raw volume path (with JSON sidecar)")
    p.add_argument("--store", default=None)
    p.add_argument("--levels", type=int, default=4)
    p.add_argument("--micro", type=int, default=65)
    p.add_argument("--degree", type=int, default=2)
    p.add_argument("--error-bound", type=float, default=1e-4)
    p.add_argument("--coarsest", type=int, default=2)
    p.add_argument("--mode", type=_mode, default="adaptive")
    p.add_argument("--backend", choices=("mfa", "ds"), default="mfa")
    p.add_argument("--ghost", type=int, choices=(0, 1), default=1)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("render", help="render one point of view to a PNG")
    p.add_argument("--store", default=None)
    p.add_argument("--out", required=True)
    _add_camera_flags(p)
    _add_render_flags(p)
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("replay", help="replay a trajectory and emit timing stats")
    p.add_argument("--store", default=None)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--prefetch", choices=tuple(runtime.PREDICTORS), default="off")
    p.add_argument("--cache-capacity", type=int, default=200)
    p.add_argument("--stats-json", default=None)
    p.add_argument("--stats-csv", default=None)
    p.add_argument("--frames-dir", default=None)
    _add_render_flags(p)
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("compare", help="quality metrics against the analytic field")
    p.add_argument("--mfa-store", default=None)
    p.add_argument("--ds-store", default=None)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--sample-distances", type=_float_list, default=[1e-3])
    p.add_argument("--out", default=None, help="report path (.json or .csv)")
    p.add_argument("--bounds", type=float, nargs=2, default=[0.0, 7.0])
    p.add_argument("--fm", type=float, default=6.0)
    p.add_argument("--alpha", type=float, default=0.05)
    _add_render_flags(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("serve", help="start the live render service")
    p.add_argument("--store", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--max-sessions", type=int, default=8)
    p.set_defaults(func=cmd_serve)

    for sp in sub.choices.values():
        sp.add_argument("--config", default=None,
                        help="JSON file of flag defaults (dest names as keys)")
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> None:
    probe = argparse.ArgumentParser(add_help=False)
    probe.add_argument("--config", default=None)
    known, _ = probe.parse_known_args(argv)
    if not known.config:
        return
    try:
        overrides = json.loads(Path(known.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"bad config file {known.config}: {exc}") from exc
    if not isinstance(overrides, dict):
        raise FormatError(f"config file {known.config} must hold a JSON object")
    for sp in parser._subparsers._group_actions[0].choices.values():
        sp.set_defaults(**overrides)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        _apply_config(parser, argv)
        args = parser.parse_args(argv)
        return args.func(args)
    except (FormatError, PartitionError, MissingBlockError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except CapacityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY


def run() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    run()
