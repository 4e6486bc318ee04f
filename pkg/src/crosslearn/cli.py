"""Command-line entry point: ``crosslearn <stage> [options]``.

Stages read and write a workspace directory (``--out``).  Exit codes:
0 success, 2 configuration error, 3 missing or malformed artifact,
4 numeric failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from crosslearn import __version__, manifold, pipeline
from crosslearn.config import load
from crosslearn.errors import ConfigurationError, CrossLearnError, MissingArtifactError
from crosslearn.imgstack import Image, load_image, load_matrix, load_stack, save_image, save_matrix, unpack

log = logging.getLogger("crosslearn")


def _global_flags(parser, suppress):
    # the same flags work before or after the subcommand
    d = argparse.SUPPRESS if suppress else None
    parser.add_argument("--config", default=d, help="configuration file (key = value lines)")
    parser.add_argument("--seed", type=int, default=d, help="noise seed")
    parser.add_argument("--out", default=d, help="workspace directory (default: ./workspace)")
    parser.add_argument("-k", dest="neighbors", type=int, default=d, help="number of neighbours K")
    parser.add_argument("--pc", type=int, default=d, help="principal components for both modalities")
    parser.add_argument("-v", "--verbose", action="count", default=argparse.SUPPRESS if suppress else 0)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crosslearn", description="Camera-to-radar cross-learning for circular-scanning SAR.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="synthesize radar measurements and camera views")
    p.add_argument("--phantom", choices=["trolley", "point"])
    p.add_argument("--aperture-arc", type=float, help="keep only apertures inside this arc (degrees)")

    p = sub.add_parser("cbp", parents=[common], help="fused-LASSO reconstruction per aperture")
    p.add_argument("--lambda-e", type=float)
    p.add_argument("--lambda-f", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--solver", choices=["fista", "admm"])

    sub.add_parser("backproject", parents=[common], help="back-project reconstructions and composite CiS-SAR")

    p = sub.add_parser("crosslearn", parents=[common], help="run one imaging method")
    p.add_argument("--method", required=True, help=", ".join(m.value for m in pipeline.Method))
    p.add_argument("--paired-neighbors", action="store_true", default=None, help="reuse camera neighbour indices on the radar side")
    p.add_argument("--leave-one-out", action="store_true", default=None, help="refit models without the test image")
    p.add_argument("--aperture-arc", type=float, help="use only apertures inside this arc (degrees)")
    p.add_argument("--plus-rule", choices=["max", "mean"])
    p.add_argument("--dump-cca", action="store_true")
    p.add_argument("--dump-weights", action="store_true")
    p.add_argument("--dump-procrustes", action="store_true")

    p = sub.add_parser("manifold", parents=[common], help="PCA manifold utilities")
    msub = p.add_subparsers(dest="action", required=True)
    q = msub.add_parser("fit", parents=[common], help="fit a manifold to a stack file")
    q.add_argument("stack")
    q.add_argument("model", help="output directory")
    q = msub.add_parser("project", parents=[common], help="coefficients of a stack or PGM image")
    q.add_argument("model")
    q.add_argument("input")
    q.add_argument("output")
    q = msub.add_parser("lift", parents=[common], help="images from a coefficient matrix")
    q.add_argument("model")
    q.add_argument("input")
    q.add_argument("output", help="matrix file, or a .pgm for a single coefficient column")

    sub.add_parser("metrics", parents=[common], help="score every method image in the workspace")

    p = sub.add_parser("run-all", parents=[common], help="every stage end-to-end")
    p.add_argument("--phantom", choices=["trolley", "point"])
    p.add_argument("--aperture-arc", type=float)
    p.add_argument("--methods", help="comma-separated subset of methods")

    p = sub.add_parser("tune", parents=[common], help="grid search over the fused-LASSO penalties")
    p.add_argument("--values", default="0.01,0.03,0.1,0.3,1", help="comma-separated candidates for both penalties")
    p.add_argument("--lambda-e-values", help="candidates for lambda_e only (overrides --values)")
    p.add_argument("--lambda-f-values", help="candidates for lambda_f only (overrides --values)")
    p.add_argument("--stride", type=int, default=12, help="use every n-th aperture")
    return parser


def _floats(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigurationError(f"expected comma-separated numbers, got {text!r}") from None


def _config(args):
    cfg = load(args.config)
    if args.config is None and os.path.exists(os.path.join(args.out, "config.conf")) and args.command != "simulate":
        # later stages default to the configuration the workspace was simulated with
        cfg = load(os.path.join(args.out, "config.conf"))
    changes = dict(
        seed=args.seed,
        neighbors=args.neighbors,
        pc_radar=args.pc,
        pc_camera=args.pc,
    )
    for name in ("phantom", "aperture_arc", "lambda_e", "lambda_f", "max_iter", "tol", "solver", "paired_neighbors", "leave_one_out", "plus_rule"):
        changes[name] = getattr(args, name, None)
    return cfg.replace(**changes)


def _cmd_manifold(args, cfg):
    if args.action == "fit":
        stack = load_stack(_need(args.stack, "manifold fit"))
        k = min(cfg.pc_radar, stack.dim, stack.count)
        manifold.save(manifold.fit(stack, k), args.model)
        return
    man = manifold.load(_need(args.model, f"manifold {args.action}"))
    src = _need(args.input, f"manifold {args.action}")
    if args.action == "project":
        if src.endswith(".pgm"):
            data = load_image(src).data.ravel(order="F")
        else:
            data = load_stack(src).columns
        save_matrix(args.output, manifold.project(man, data))
        return
    coeffs = load_matrix(src)
    images = manifold.lift(man, coeffs)
    if args.output.endswith(".pgm"):
        if images.shape[1] != 1:
            raise ConfigurationError("a .pgm output needs exactly one coefficient column")
        side = int(round(np.sqrt(man.dim)))
        save_image(args.output, Image(np.clip(unpack(images[:, 0], side).data, 0.0, 1.0)))
    else:
        save_matrix(args.output, images)


def _need(path, stage):
    if not os.path.exists(path):
        raise MissingArtifactError(stage, path)
    return path


def dispatch(args) -> int:
    if args.out is None:
        args.out = "workspace"
    cfg = _config(args)
    ws = args.out
    cmd = args.command
    if cmd == "simulate":
        pipeline.stage_simulate(cfg, ws)
    elif cmd == "cbp":
        pipeline.stage_cbp(cfg, ws)
    elif cmd == "backproject":
        pipeline.stage_backproject(cfg, ws)
    elif cmd == "crosslearn":
        method = pipeline.Method.parse(args.method)
        dumps = dict(dump_cca=args.dump_cca, dump_weights=args.dump_weights, dump_procrustes=args.dump_procrustes)
        img = pipeline.run(method, ws, cfg, dumps=dumps)
        print(os.path.join(ws, "images", f"{method.value}.pgm"), f"max={img.data.max():.6g}")
    elif cmd == "manifold":
        _cmd_manifold(args, cfg)
    elif cmd == "metrics":
        rows = pipeline.stage_metrics(cfg, ws)
        _print_rows(rows)
    elif cmd == "run-all":
        methods = None
        if args.methods:
            methods = [pipeline.Method.parse(m) for m in args.methods.split(",")]
            if pipeline.Method.CIS_SAR not in methods:
                methods.insert(0, pipeline.Method.CIS_SAR)
        rows = pipeline.run_all(cfg, ws, methods)
        _print_rows(rows)
    elif cmd == "tune":
        vals = _floats(args.values)
        v_e = _floats(args.lambda_e_values) if args.lambda_e_values else vals
        v_f = _floats(args.lambda_f_values) if args.lambda_f_values else vals
        points = pipeline.grid_search(cfg, v_e, v_f, args.stride)
        print("lambda_e,lambda_f,rel_error,mean_iterations")
        for g in points:
            print(f"{g.lambda_e!r},{g.lambda_f!r},{g.rel_error:.6f},{g.iterations:.1f}")
    return 0


def _print_rows(rows):
    print(",".join(pipeline.METRIC_HEADER))
    for name, me, ncc, hv in rows:
        print(f"{name},{me:.6f},{ncc:.6f},{hv:.6f}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return dispatch(args)
    except CrossLearnError as exc:
        print(f"crosslearn: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"crosslearn: error: {exc}", file=sys.stderr)
        return MissingArtifactError.exit_code


if __name__ == "__main__":
    sys.exit(main())
