"""Command-line interface: ``acmbox <subcommand> [flags]``.

Every run prints its result to stdout and writes it, together with a
``manifest.json`` describing the resolved invocation, into ``--out-dir``.
Angles are degrees on the command line and radians everywhere else.

Exit codes: 0 success, 2 usage or validation error, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .acm import SUPPORTED_OMEGAS, decode, encode
from .errors import AcmError, DivergedTraining
from .evaluate import DOTA_CLASSES, ap_suite, load_detections, load_gt_dir
from .fit import ARMS, FitConfig, OracleModel, Regressor, ablation_suite, sweep_eval, train
from .gauss import box_to_gaussian, gwd, kfiou, kld
from .geom import RotatedBox
from .iou import skew_iou
from .svg import line_chart

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 2, 3


class UsageError(Exception):
    pass


# -- output helpers ---------------------------------------------------------


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


def _plain(obj):
    if isinstance(obj, RotatedBox):
        return {"cx": obj.cx, "cy": obj.cy, "w": obj.w, "h": obj.h,
                "theta_deg": math.degrees(obj.theta)}
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, default=_plain) + "\n"


def _table_text(fmt, header, rows, extra=None) -> str:
    if fmt == "csv":
        return _csv_text(header, rows)
    payload = [dict(zip(header, r)) for r in rows]
    if extra is not None:
        payload = {**extra, "rows": payload}
    return _json_text(payload)


class Run:
    """Collects output files and writes them once the command finishes."""

    def __init__(self, args):
        self.args = args
        self.out_dir = Path(args.out_dir)
        self.files = {}
        self.start_time = datetime.now(timezone.utc).isoformat(timespec="seconds")

    def add(self, name, text):
        self.files[name] = text

    def emit(self, name, text):
        self.add(name, text)
        sys.stdout.write(text)

    def flush(self, resolved=None):
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for name, text in self.files.items():
                (self.out_dir / name).write_text(text, encoding="utf-8")
            flags = {k: v for k, v in vars(self.args).items() if k not in ("func", "seed_given")}
            manifest = {
                "subcommand": self.args.command,
                "flags": flags,
                "seed": self.args.seed,
                "library_version": __version__,
                "start_time": self.start_time,
            }
            if resolved is not None:
                manifest["resolved_config"] = resolved
            (self.out_dir / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
        except OSError as exc:
            raise RuntimeError(f"cannot write outputs to {self.out_dir}: {exc}") from exc


def _fmt(x) -> float:
    # csv renders floats with their shortest round-trip repr
    return float(x)


# -- argument parsing -------------------------------------------------------


def _box_arg(text) -> RotatedBox:
    parts = text.split(",")
    if len(parts) != 5:
        raise argparse.ArgumentTypeError(f"expected cx,cy,w,h,theta_deg, got {text!r}")
    try:
        cx, cy, w, h, deg = (float(p) for p in parts)
        return RotatedBox(cx, cy, w, h, math.radians(deg))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"invalid box {text!r}: {exc}") from None


def _positive_int(text) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _aspect_arg(text) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value >= 1:
        raise argparse.ArgumentTypeError(f"aspect must be >= 1, got {text}")
    return value


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS,
                        help="random seed (default 0)")
    common.add_argument("--out-dir", default=argparse.SUPPRESS,
                        help="directory for outputs and manifest.json (default: out)")
    common.add_argument("--format", choices=("csv", "json"), default=argparse.SUPPRESS,
                        help="data output format (default csv)")

    parser = argparse.ArgumentParser(prog="acmbox", parents=[common],
                                     description="Rotated-box angle encoding toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("encode", parents=[common], help="encode an angle and decode it back")
    p.add_argument("--theta-deg", type=float, required=True)
    p.add_argument("--omega", type=int, choices=SUPPORTED_OMEGAS, default=2)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("iou", parents=[common], help="overlap measures between two boxes")
    p.add_argument("--box-a", type=_box_arg, required=True, metavar="CX,CY,W,H,DEG")
    p.add_argument("--box-b", type=_box_arg, required=True, metavar="CX,CY,W,H,DEG")
    p.set_defaults(func=cmd_iou)

    p = sub.add_parser("sweep", parents=[common], help="rotate an object through a full turn")
    p.add_argument("--arm", choices=ARMS + ("oracle",),
                   help="experiment arm (default: the model's arm, else acm-fused)")
    p.add_argument("--aspect", type=_aspect_arg, default=4.0)
    p.add_argument("--steps", type=_positive_int, default=360)
    p.add_argument("--model-path", help="model JSON written by 'fit'; trains one otherwise")
    p.add_argument("--epochs", type=_positive_int, help="override training epochs")
    p.add_argument("--samples", type=_positive_int, help="override training sample count")
    p.add_argument("--svg", action="store_true", help="also write sweep.svg")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("fit", parents=[common], help="train one regressor")
    p.add_argument("--config", help="JSON file with FitConfig fields")
    p.add_argument("--epochs", type=_positive_int, help="override training epochs")
    p.add_argument("--samples", type=_positive_int, help="override training sample count")
    p.add_argument("--svg", action="store_true", help="also write curve.svg and sweep.svg")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("ablate", parents=[common], help="run the arm ablation")
    p.add_argument("--seeds", type=_positive_int, default=3, help="number of seeds (>= 3)")
    p.add_argument("--epochs", type=_positive_int, help="override training epochs")
    p.add_argument("--samples", type=_positive_int, help="override training sample count")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("eval", parents=[common], help="AP table for rotated detections")
    p.add_argument("--dets", required=True, help="detection CSV")
    p.add_argument("--gts", required=True, help="directory of DOTA annotation files")
    p.set_defaults(func=cmd_eval)
    return parser


def parse_args(argv=None):
    args = build_parser().parse_args(argv)
    args.seed_given = hasattr(args, "seed")
    for name, default in (("seed", 0), ("out_dir", "out"), ("format", "csv")):
        if not hasattr(args, name):
            setattr(args, name, default)
    return args


# -- subcommands ------------------------------------------------------------


def cmd_encode(args, run):
    if not 0.0 <= args.theta_deg < 180.0:
        raise UsageError(f"--theta-deg must lie in [0, 180), got {args.theta_deg}")
    theta = math.radians(args.theta_deg)
    fx, fy = encode(theta, args.omega)
    back = math.degrees(decode(fx, fy, args.omega))
    header = ("theta_deg", "omega", "fx", "fy", "decoded_deg")
    row = (_fmt(args.theta_deg), args.omega, _fmt(fx), _fmt(fy), _fmt(back))
    run.emit(f"encode.{args.format}", _table_text(args.format, header, [row]))


def cmd_iou(args, run):
    a, b = args.box_a, args.box_b
    ga, gb = box_to_gaussian(a), box_to_gaussian(b)
    values = (skew_iou(a, b), gwd(ga, gb), kld(ga, gb), kfiou(ga, gb))
    header = ("skew_iou", "gwd", "kld", "kfiou")
    run.emit(f"iou.{args.format}", _table_text(args.format, header, [tuple(map(_fmt, values))]))


def _fit_config(args, arm=None, aspect=None, base=None):
    base = base or FitConfig()
    fields = base.to_dict()
    if arm is not None:
        fields["arm"], fields["kind"] = arm, None
    if aspect is not None:
        fields["aspect"] = aspect
    if getattr(args, "epochs", None):
        fields["epochs"] = args.epochs
    if getattr(args, "samples", None):
        fields["n_samples"] = args.samples
    fields["seed"] = args.seed
    return FitConfig.from_dict(fields)


def _sweep_outputs(run, args, report, stem="sweep"):
    header = ("phi_deg", "theta_pred_deg", "theta_target_deg", "ang_err_deg", "iou")
    rows = [tuple(_fmt(v) for v in (math.degrees(p), math.degrees(tp), math.degrees(tt),
                                     math.degrees(e), i))
            for p, tp, tt, e, i in report.rows()]
    extra = {"arm": report.arm, "aspect": report.aspect, "summary": report.summary()}
    text = _table_text(args.format, header, rows, extra)
    if getattr(args, "svg", False):
        deg = np.degrees(report.phi)
        run.add(f"{stem}.svg", line_chart(
            [("predicted", deg, np.degrees(report.theta_pred)),
             ("target", deg, np.degrees(report.theta_target))],
            title=f"{report.arm} sweep, aspect {report.aspect:g}",
            xlabel="object orientation (deg)", ylabel="box angle (deg)"))
    return text


def cmd_sweep(args, run):
    resolved = None
    if args.model_path:
        try:
            model = Regressor.from_dict(json.loads(Path(args.model_path).read_text(encoding="utf-8")))
        except FileNotFoundError:
            raise UsageError(f"model file not found: {args.model_path}") from None
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"invalid model file {args.model_path}: {exc}") from None
        if args.arm not in (None, model.arm):
            raise UsageError(f"--arm {args.arm} does not match the model's arm {model.arm}")
    elif args.arm == "oracle":
        model = OracleModel()
    else:
        cfg = _fit_config(args, args.arm or "acm-fused", args.aspect)
        resolved = cfg.to_dict()
        model = train(cfg).model
    report = sweep_eval(model, args.steps, args.aspect)
    run.emit(f"sweep.{args.format}", _sweep_outputs(run, args, report))
    return resolved


def cmd_fit(args, run):
    base = None
    if args.config:
        try:
            fields = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise UsageError(f"config file not found: {args.config}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"config is not valid JSON: {exc}") from None
        if not isinstance(fields, dict):
            raise UsageError("config must be a JSON object")
        if "seed" in fields and not args.seed_given:
            args.seed = int(fields["seed"])
        try:
            base = FitConfig.from_dict(fields)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None
    cfg = _fit_config(args, base=base)
    result = train(cfg)
    run.add("model.json", _json_text(result.model.to_dict()))
    curve = [(k, _fmt(v)) for k, v in enumerate(result.history)]
    run.add(f"curve.{args.format}", _table_text(args.format, ("epoch", "loss"), curve))
    aspect = cfg.aspect[-1] if cfg.mixed else cfg.aspect
    report = sweep_eval(result.model, 360, aspect)
    run.emit(f"sweep.{args.format}", _sweep_outputs(run, args, report))
    if args.svg:
        run.add("curve.svg", line_chart([("loss", np.arange(len(result.history)), result.history)],
                                        title="training loss", xlabel="epoch", ylabel="loss"))
    return cfg.to_dict()


def cmd_ablate(args, run):
    if args.seeds < 3:
        raise UsageError("--seeds must be at least 3")
    base = _fit_config(args)
    seeds = range(args.seed, args.seed + args.seeds)

    def progress(row):
        print(f"{row['arm']:>9} aspect={row['aspect']:g} lambda_acm={row['lambda_acm']:g} "
              f"seed={row['seed']} min_iou={row['min_iou']:.4f} mean_err={row['mean_err']:.4f}",
              file=sys.stderr)

    report = ablation_suite(seeds, base, progress=progress)
    run.emit("ablation_report.json", _json_text(report.to_dict()))
    for c in report.checks:
        print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.description}", file=sys.stderr)
    return base.to_dict()


def cmd_eval(args, run):
    if not Path(args.gts).is_dir():
        raise UsageError(f"ground-truth directory not found: {args.gts}")
    if not Path(args.dets).is_file():
        raise UsageError(f"detection file not found: {args.dets}")
    try:
        gts = load_gt_dir(args.gts)
        dets = load_detections(args.dets)
    except AcmError as exc:
        raise UsageError(str(exc)) from None
    table = ap_suite(dets, gts)
    header = ("class", "AP50", "AP75", "AP50:95")
    rows = [(DOTA_CLASSES[c] if 0 <= c < len(DOTA_CLASSES) else str(c),
             _fmt(r["AP50"]), _fmt(r["AP75"]), _fmt(r["AP50:95"]))
            for c, r in table["per_class"].items()]
    m = table["mean"]
    rows.append(("mean", _fmt(m["AP50"]), _fmt(m["AP75"]), _fmt(m["AP50:95"])))
    run.emit(f"eval.{args.format}", _table_text(args.format, header, rows))


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    run = Run(args)
    try:
        resolved = args.func(args, run)
        run.flush(resolved)
    except UsageError as exc:
        print(f"acmbox {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DivergedTraining as exc:
        print(f"acmbox {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (RuntimeError, OSError, AcmError) as exc:
        print(f"acmbox {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
