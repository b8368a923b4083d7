"""Command-line front end.

Exit codes: 0 success, 1 validation or computation failure, 2 usage error.
Every subcommand prints its result; with ``--out-dir`` it also writes the
result file(s) and a ``manifest.json`` that ``confrecon replay`` can rerun.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .geofence import build_maps, demo_scene, extract_contour, load_scene
from .metrics import metrics_from_pi, weighted_metric
from .model import ChannelPair, DomainError, Policy, SourceModel, lambda_set
from .optimizer import DEFAULT_P_MIN, optimize
from .simulation import SimConfig, simulate
from .stationary import avg_cra_numeric_route, stationary_closed_form
from .validation import run_battery

SWEEP_HEADER = (
    "p_alpha", "cra_closed", "cra_numeric", "cra_sim_mean", "cra_sim_stderr", "a0", "a1", "a_omega",
)


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return format(value, ".17g")
    return str(value)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def _json_text(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers: {text!r}") from exc


def _model_args(parser, with_policy=False):
    parser.add_argument("--p", type=float, required=True, help="Pr[0 -> 1]")
    parser.add_argument("--q", type=float, required=True, help="Pr[1 -> 0]")
    parser.add_argument("--ps", type=float, required=True, help="Bob's success probability")
    parser.add_argument("--pse", type=float, required=True, help="Eve's success probability")
    if with_policy:
        parser.add_argument("--palpha", type=float, required=True, help="transmission probability")


def _model(args):
    return SourceModel(args.p, args.q), ChannelPair(args.ps, args.pse)


# ---- subcommands: each returns {filename: text} and the text to print ----

def cmd_analyze(args):
    src, ch = _model(args)
    pol = Policy(args.palpha)
    omegas = args.omega if args.omega else [0.5]
    pi = stationary_closed_form(src, lambda_set(pol, ch))
    reports = [metrics_from_pi(pi, w) for w in omegas]
    base = reports[0]
    result = {
        "cra": base.cra,
        "accuracy": base.accuracy,
        "confidentiality": base.confidentiality,
        "non_confidential_accuracy": base.non_confidential_accuracy,
        "omega": omegas,
        "weighted": [r.weighted for r in reports],
    }
    if args.format == "csv":
        rows = [(k, result[k]) for k in ("cra", "accuracy", "confidentiality", "non_confidential_accuracy")]
        rows += [(f"weighted[{_fmt(w)}]", r.weighted) for w, r in zip(omegas, reports)]
        text, name = _csv_text(("metric", "value"), rows), "analyze.csv"
    else:
        text, name = _json_text(result), "analyze.json"
    return {name: text}, text


def _sweep_grid(args):
    if args.palphas:
        grid = args.palphas
    else:
        if args.num < 1:
            raise DomainError("--num must be >= 1")
        grid = np.linspace(args.start, args.stop, args.num).tolist()
    if not grid or any(not (0.0 < g <= 1.0) for g in grid):
        raise DomainError("grid points must lie in (0, 1]")
    return grid


def cmd_sweep(args):
    src, ch = _model(args)
    grid = _sweep_grid(args)
    if not 0.0 <= args.omega_sweep <= 1.0:
        raise DomainError("--omega must lie in [0, 1]")
    cfg = SimConfig(args.horizon, args.runs, args.seed, args.warmup) if args.sim else None
    rows = []
    for pa in grid:
        pol = Policy(pa)
        lam = lambda_set(pol, ch)
        rep = metrics_from_pi(stationary_closed_form(src, lam), args.omega_sweep)
        numeric = avg_cra_numeric_route(src, lam) if args.numeric else None
        sim_mean = sim_se = None
        if cfg is not None:
            est = simulate(src, ch, pol, cfg)
            sim_mean, sim_se = est.mean_cra, est.std_error_cra
        rows.append((pa, rep.cra, numeric, sim_mean, sim_se, rep.accuracy, rep.confidentiality,
                     weighted_metric(src, ch, pol, args.omega_sweep)))
    if args.format == "json":
        text = _json_text([dict(zip(SWEEP_HEADER, r)) for r in rows])
        return {"sweep.json": text}, text
    text = _csv_text(SWEEP_HEADER, rows)
    return {"sweep.csv": text}, text


def cmd_optimize(args):
    src, ch = _model(args)
    res = optimize(src, ch, (args.pmin, args.pmax))
    result = {
        "p_alpha_star": res.p_alpha_star,
        "value": res.value,
        "branch": res.branch.value,
        "delta": res.delta,
        "interval": list(res.interval),
    }
    if args.format == "csv":
        text = _csv_text(("p_alpha_star", "value", "branch", "delta"),
                         [(res.p_alpha_star, res.value, res.branch.value, res.delta)])
        return {"optimize.csv": text}, text
    text = _json_text(result)
    return {"optimize.json": text}, text


def cmd_validate(args):
    if args.tuples < 1 or args.sim_tuples < 0:
        raise DomainError("--tuples must be >= 1 and --sim-tuples >= 0")
    cfg = SimConfig(args.horizon, args.runs, args.seed, args.warmup)
    report = run_battery(args.tuples, args.seed, args.sim_tuples, cfg)
    text = _json_text(report)
    failed = [c["name"] for c in report["checks"] if not c["passed"]]
    return {"validate.json": text}, text, failed


def cmd_geofence(args):
    try:
        scene = demo_scene() if args.scene == "demo" else load_scene(args.scene)
    except OSError as exc:
        raise DomainError(f"cannot read scene: {exc}") from exc
    if not 0.0 < args.tau < 1.0:
        raise DomainError("--tau must lie in (0, 1)")
    src = SourceModel(args.p, args.q)
    cra, pa, eve = build_maps(scene, src, (args.pmin, args.pmax))
    outputs = {}
    for smap, stem in ((eve, "eve_success"), (cra, "optimal_cra"), (pa, "optimal_p_alpha")):
        outputs[f"{stem}.csv"] = smap.csv_text()
        outputs[f"{stem}.grid"] = smap.to_bytes()
    holes = [m.quantity for m in (cra, pa) if not np.isfinite(m.values).all()]
    contour = None if holes else extract_contour(cra, args.tau)
    if contour is not None:
        outputs["contour.geojson"] = _json_text(contour.to_geojson())
    summary = {
        "scene_hash": scene.digest,
        "grid": list(scene.shape),
        "tau": args.tau,
        "contours": 0 if contour is None else len(contour.polylines),
        "inside_cells": 0 if contour is None else int(contour.inside_mask.sum()),
        "failed_maps": holes,
    }
    return outputs, _json_text(summary), holes


def _digest(data) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _write_outputs(out_dir, outputs, argv, args):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, data in outputs.items():
        path = out / name
        if isinstance(data, bytes):
            path.write_bytes(data)
        else:
            path.write_text(data, newline="\n")
    params = {k: v for k, v in vars(args).items() if k not in ("out_dir", "func", "out_dir_default")}
    manifest = {
        "tool": "confrecon",
        "version": __version__,
        "subcommand": args.command,
        "argv": argv,
        "params": params,
        "seed": args.seed,
        "outputs": {name: _digest(data) for name, data in sorted(outputs.items())},
    }
    (out / "manifest.json").write_text(_json_text(manifest), newline="\n")


def _strip_out_dir(argv):
    out, skip = [], False
    for tok in argv:
        if skip:
            skip = False
            continue
        if tok == "--out-dir":
            skip = True
            continue
        if tok.startswith("--out-dir="):
            continue
        out.append(tok)
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0, help="master seed for simulation")
    common.add_argument("--out-dir", default=None, help="write result files and manifest here")
    common.add_argument("--format", choices=("json", "csv"), default="json")

    parser = argparse.ArgumentParser(prog="confrecon", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"confrecon {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analyze", parents=[common], help="all metrics at one operating point")
    _model_args(p, with_policy=True)
    p.add_argument("--omega", type=_float_list, default=None, help="weights, e.g. 0,0.5,1")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="metrics over a p_alpha grid")
    _model_args(p)
    p.add_argument("--start", type=float, default=0.05)
    p.add_argument("--stop", type=float, default=1.0)
    p.add_argument("--num", type=int, default=20)
    p.add_argument("--palphas", type=_float_list, default=None, help="explicit grid")
    p.add_argument("--omega", dest="omega_sweep", type=float, default=0.5)
    p.add_argument("--numeric", action="store_true", help="add the linear-solve column")
    p.add_argument("--sim", action="store_true", help="add Monte Carlo columns")
    p.add_argument("--horizon", type=int, default=50_000)
    p.add_argument("--runs", type=int, default=400)
    p.add_argument("--warmup", type=int, default=1_000)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("optimize", parents=[common], help="CRA-optimal transmission probability")
    _model_args(p)
    p.add_argument("--pmin", type=float, default=DEFAULT_P_MIN)
    p.add_argument("--pmax", type=float, default=1.0)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("validate", parents=[common], help="run the cross-validation battery")
    p.add_argument("--tuples", type=int, default=50)
    p.add_argument("--sim-tuples", type=int, default=5)
    p.add_argument("--horizon", type=int, default=5_000)
    p.add_argument("--runs", type=int, default=50)
    p.add_argument("--warmup", type=int, default=1_000)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("geofence", parents=[common], help="spatial maps and the geofence contour")
    p.add_argument("scene", help="scene JSON file, or 'demo' for the built-in layout")
    p.add_argument("--p", type=float, default=0.2)
    p.add_argument("--q", type=float, default=0.2)
    p.add_argument("--tau", type=float, default=0.3)
    p.add_argument("--pmin", type=float, default=DEFAULT_P_MIN)
    p.add_argument("--pmax", type=float, default=1.0)
    p.set_defaults(func=cmd_geofence, out_dir_default="geofence-out")

    p = sub.add_parser("replay", help="rerun the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=None)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == "replay":
        try:
            manifest = json.loads(Path(args.manifest).read_text())
            recorded = list(manifest["argv"])
        except (OSError, ValueError, KeyError) as exc:
            print(f"confrecon: error: bad manifest: {exc}", file=sys.stderr)
            return 2
        return main(recorded + ["--out-dir", args.out_dir])

    failed = []
    try:
        produced = args.func(args)
    except DomainError as exc:
        print(f"confrecon: error: {exc}", file=sys.stderr)
        return 2
    except (ArithmeticError, AssertionError) as exc:
        print(f"confrecon: computation failed: {exc}", file=sys.stderr)
        return 1
    if len(produced) == 3:
        outputs, text, failed = produced
    else:
        outputs, text = produced

    out_dir = args.out_dir or getattr(args, "out_dir_default", None)
    if out_dir:
        _write_outputs(out_dir, outputs, _strip_out_dir(argv), args)
    sys.stdout.write(text)
    if failed:
        print(f"confrecon: failed: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
