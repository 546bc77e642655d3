"""Command-line entry points.

Exit codes: 0 success, 1 usage error (bad flags or config), 2 data error
(malformed or mismatched inputs), 3 runtime failure.  Results go to stdout
as JSON with a fixed key order and floats printed at 9 significant digits;
logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .errors import AirsegError
from .jsonio import dumps_canonical

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _emit(obj) -> None:
    sys.stdout.write(dumps_canonical(obj, float_digits=9) + "\n")


def cmd_skeletonize(args) -> int:
    from .morphology import skeletonize
    from .volume import BinaryMask, read_volume, write_volume

    try:
        vol = read_volume(args.input)
        if not isinstance(vol, BinaryMask):
            print(f"error: {args.input} is not a mask volume", file=sys.stderr)
            return EXIT_DATA
        write_volume(skeletonize(vol), args.output)
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_metrics(args) -> int:
    from . import metrics
    from .morphology import Connectivity, keep_largest_component, skeletonize
    from .tree import build_skeleton_graph, detect_cycles, parse_tree
    from .volume import BinaryMask, ProbVolume, read_volume

    try:
        pred = read_volume(args.pred)
        gt = read_volume(args.gt)
        if isinstance(pred, ProbVolume):
            pred = BinaryMask(pred.dims, pred.data >= 0.5)
        if not isinstance(pred, BinaryMask) or not isinstance(gt, BinaryMask):
            print("error: inputs must be mask (or prob) volumes", file=sys.stderr)
            return EXIT_DATA
        if pred.dims != gt.dims:
            print("error: volume dims differ", file=sys.stderr)
            return EXIT_DATA
        gt_tree = parse_tree(build_skeleton_graph(skeletonize(gt)))
        if not args.no_postprocess:
            pred = keep_largest_component(pred, Connectivity.twentysix)
        report = metrics.evaluate_segmentation(
            pred, gt, gt_tree, postprocess=False, bd_threshold=args.bd_threshold
        )
        cycles = detect_cycles(build_skeleton_graph(skeletonize(pred)))
        _emit(
            {
                "dsc": report["dsc"],
                "iou": report["iou"],
                "precision": report["precision"],
                "td": report["td"],
                "bd": report["bd"],
                "cycle_count": cycles,
            }
        )
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_phantom(args) -> int:
    from .morphology import skeletonize
    from .phantom import PhantomSpec, generate_phantom
    from .volume import VolumeDims, write_volume

    try:
        dims = [int(v) for v in args.dims.split(",")]
        branches = [int(v) for v in args.branches.split(",")]
        radius = [float(v) for v in args.radius.split(",")]
        if len(dims) != 3 or len(branches) != 2 or len(radius) != 2:
            raise ValueError
    except ValueError:
        print("error: bad --dims/--branches/--radius format", file=sys.stderr)
        return EXIT_USAGE
    try:
        spec = PhantomSpec(
            dims=VolumeDims(*dims),
            branch_count=(branches[0], branches[1]),
            radius=(radius[0], radius[1]),
            noise=args.noise,
            distal_dilation=args.distal_dilation,
        )
        ph = generate_phantom(args.seed, spec)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_volume(ph.image, out / "image.vvol")
        write_volume(ph.gt_mask, out / "gt.vvol")
        write_volume(ph.clean_centerline, out / "centerline.vvol")
        write_volume(ph.machine_centerline, out / "machine_centerline.vvol")
        meta = {
            "seed": args.seed,
            "branch_count": ph.branch_count,
            "contrast": ph.contrast,
            "spec": spec.to_dict(),
        }
        (out / "meta.json").write_text(dumps_canonical(meta, float_digits=9) + "\n")
        _emit({"branch_count": ph.branch_count, "out": str(out)})
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def cmd_run(args) -> int:
    from .experiment import ExperimentConfig, run_experiment

    try:
        raw = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_DATA
    try:
        cfg = ExperimentConfig.from_dict(raw)
    except (ValueError, TypeError, KeyError) as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        log = run_experiment(cfg, args.out)
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    _emit(
        {
            "rounds": len(log.records) - 1,
            "final_val": log.records[-1].val_metrics,
            "test": log.test,
            "out": str(args.out),
        }
    )
    return EXIT_OK


def cmd_serve(args) -> int:
    try:
        import uvicorn

        from .server import create_app

        app = create_app(args.experiment)
        uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (OSError, SystemExit) as exc:
        print(f"error: server failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="airseg", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("skeletonize", help="thin a mask volume to its centerline")
    s.add_argument("input")
    s.add_argument("output")
    s.set_defaults(func=cmd_skeletonize)

    s = sub.add_parser("metrics", help="evaluate a prediction against ground truth")
    s.add_argument("pred")
    s.add_argument("gt")
    s.add_argument("--no-postprocess", action="store_true")
    s.add_argument("--bd-threshold", type=float, default=0.8)
    s.set_defaults(func=cmd_metrics)

    s = sub.add_parser("phantom", help="generate a synthetic branching-tube sample")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--dims", default="32,32,32")
    s.add_argument("--branches", default="3,9")
    s.add_argument("--radius", default="1.3,1.9")
    s.add_argument("--noise", type=float, default=0.08)
    s.add_argument("--distal-dilation", action="store_true")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_phantom)

    s = sub.add_parser("run", help="run an active-learning experiment from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("serve", help="serve an experiment for the annotation UI")
    s.add_argument("--experiment", required=True)
    s.add_argument("--port", type=int, default=8642)
    s.add_argument("--host", default="127.0.0.1")
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except AirsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
