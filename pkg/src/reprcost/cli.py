"""``reprcost`` command line.

Every subcommand echoes one line of JSON on stdout.  Exit status is 0 on
success, 1 on domain errors (infeasible constructions, failed checks,
non-convergence under ``--strict``) and 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import re
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import datasets, verify
from .exceptions import InvalidInputError, InvalidParameterError, ReprCostError, StructureAbsentError
from .netmodel import balanced_factorization, collapse, factor_cost_sum, load_net
from .numkernel import schatten_qnorm_pow
from .rays import CSV_COLUMNS, RaysConfig, rows_to_csv, sweep_theta
from .repcost import SolverOptions, phi2, phi3_bounds, phi_grouped, phi_numeric
from .subspace import ProjectionSpec, build_g, phi3_tilde, r2_condition
from .trainer import TrainConfig, grid_eval, train

log = logging.getLogger("reprcost")

_PI_LITERAL = re.compile(r"^\s*([+-]?(?:\d+(?:\.\d*)?|\.\d+)?)\s*\*?\s*pi\s*$", re.IGNORECASE)


class UsageError(Exception):
    """Bad arguments or unreadable inputs; exit status 2."""


def parse_angle(text: str) -> float:
    """Float or a multiple of pi such as ``0.55pi``, ``pi`` or ``2*pi``."""
    m = _PI_LITERAL.match(text)
    if m:
        coef = m.group(1)
        return (float(coef) if coef not in (None, "", "+", "-") else (-1.0 if coef == "-" else 1.0)) * math.pi
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an angle: {text!r} (use e.g. 2.1 or 0.55pi)") from None


# I/O helpers ------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else None
    return obj


def dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, allow_nan=False)


def write_atomic(path: str, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_config(path) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    unknown = set(cfg) - {"solver", "train", "rays"}
    if unknown:
        raise UsageError(f"unknown config sections: {sorted(unknown)}")
    return cfg


def read_matrix_csv(path, name) -> np.ndarray:
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].lstrip().startswith("#")]
        M = np.array([[float(v) for v in r] for r in rows], dtype=float)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read {name} from {path}: {exc}") from exc
    if M.ndim != 2 or M.size == 0:
        raise UsageError(f"{name} CSV must be a nonempty rectangular table")
    return M


def matrix_csv(M) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows([[repr(float(v)) for v in row] for row in np.atleast_2d(M)])
    return buf.getvalue()


def _load_net(path):
    try:
        return load_net(path)
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        raise UsageError(f"cannot read network {path}: {exc}") from exc


def _solver_opts(args, cfg) -> SolverOptions:
    d = dict(cfg.get("solver", {}))
    if args.seed is not None:
        d["seed"] = args.seed
    return SolverOptions.from_dict(d)


# subcommands --------------------------------------------------------------------------


def cmd_phi(args, cfg):
    net = collapse(_load_net(args.net))
    opts = _solver_opts(args, cfg)
    est = phi_numeric(net.W, net.a, args.L, opts)
    out = {"phi": est.value, "L": args.L, "phi2": phi2(net.W, net.a), **est.to_dict()}
    try:
        out["phi_grouped"] = phi_grouped(net.W, net.a, args.L)
    except StructureAbsentError:
        out["phi_grouped"] = None
    domain_fail = args.strict and not est.converged
    return out, dumps(out) + "\n", domain_fail


def cmd_bounds(args, cfg):
    net = collapse(_load_net(args.net))
    b = phi3_bounds(net.W, net.a, _solver_opts(args, cfg))
    out = {"lower": b.lower, "estimate": b.estimate, "upper": b.upper, "ordered": b.ordered}
    if args.format == "csv":
        text = "lower,estimate,upper,ordered\n" + f"{b.lower!r},{b.estimate!r},{b.upper!r},{int(b.ordered)}\n"
    else:
        text = dumps({**out, "Q_cert": b.Q_cert}) + "\n"
    domain_fail = args.strict and not (b.ordered and b.estimate_detail.converged)
    return out, text, domain_fail


def cmd_factorize(args, cfg):
    net = collapse(_load_net(args.net))
    deep = balanced_factorization(net, args.L)
    q = 2.0 / (args.L - 1)
    out = {
        "L": args.L,
        "factor_cost": factor_cost_sum(deep),
        "target": (args.L - 1) * schatten_qnorm_pow(net.W, q) if np.any(net.W) else 0.0,
        "reconstruction_error": float(np.linalg.norm(collapse(deep).W - net.W)),
    }
    return out, dumps(deep.to_dict()) + "\n", False


def cmd_rays_sweep(args, cfg):
    rays = dict(cfg.get("rays", {}))
    if args.n_per_ray is not None:
        rays["n1"] = rays["n2"] = args.n_per_ray
    if args.seed is not None:
        rays["seed"] = args.seed
    rays.pop("psi", None)
    if args.points < 1:
        raise UsageError("--points must be positive")
    if not (math.pi / 2 < args.psi_min <= args.psi_max < math.pi):
        raise UsageError("need pi/2 < psi-min <= psi-max < pi")
    try:
        template = RaysConfig(psi=args.psi_min, **rays)
    except TypeError as exc:
        raise UsageError(f"bad rays config: {exc}") from exc
    grid = np.linspace(args.psi_min, args.psi_max, args.points)
    rows = sweep_theta(template, grid, _solver_opts(args, cfg), workers=args.workers)
    ok = [r for r in rows if not r["status"].startswith("error")]
    out = {
        "points": len(rows),
        "errors": len(rows) - len(ok),
        "condition_points": sum(int(r["cond_holds"]) for r in ok),
        "r2_ordered_everywhere": all(r["R2_f"] < r["R2_g"] for r in ok),
        "status_counts": {s: sum(r["status"] == s for r in ok) for s in sorted({r["status"] for r in ok})},
    }
    text = rows_to_csv(rows) if args.format == "csv" else dumps([{k: r[k] for k in CSV_COLUMNS} for r in rows]) + "\n"
    domain_fail = args.strict and (out["errors"] > 0 or out["status_counts"].get("violated", 0) > 0)
    return out, text, domain_fail


def cmd_project(args, cfg):
    net = collapse(_load_net(args.net))
    X = read_matrix_csv(args.samples, "samples")
    if args.basis is not None:
        S = ProjectionSpec.from_span(read_matrix_csv(args.basis, "basis"))
    else:
        S = ProjectionSpec.from_span(X)
    opts = _solver_opts(args, cfg)
    cons = build_g(net, X, S)
    via_q, direct = phi3_tilde(net, X, S, opts, return_both=True)
    out = {
        "subspace_dim": S.dim,
        "r": cons.r,
        "q": cons.q,
        "r2_condition": r2_condition(net, X, S),
        "R2_source": phi2(net.W, net.a),
        "R2_projected": phi2(cons.g.W, cons.g.a),
        "phi3_source": phi_numeric(net.W, net.a, 3, opts).value,
        "phi3_projected": via_q.value,
        "phi3_projected_direct": direct.value,
    }
    return out, dumps({**out, "g": cons.g.to_dict()}) + "\n", False


def _training_data(args):
    if args.dataset == "colinear":
        X, y, _ = datasets.colinear(args.data_seed)
        return X, y
    if args.dataset == "two-rays":
        return datasets.two_rays(args.data_seed)
    if args.samples is None or args.labels is None:
        raise UsageError("train needs --dataset or both --samples and --labels")
    X = read_matrix_csv(args.samples, "samples")
    y = read_matrix_csv(args.labels, "labels").reshape(-1)
    return X, y


def cmd_train(args, cfg):
    X, y = _training_data(args)
    tc = dict(cfg.get("train", {}))
    for key in ("L", "epochs"):
        if getattr(args, key) is not None:
            tc[key] = getattr(args, key)
    if args.seed is not None:
        tc["seed"] = args.seed
    if args.log and "log_every" not in tc:
        tc["log_every"] = max(1, int(tc.get("epochs", TrainConfig.epochs)) // 100)
    res = train(X, y, TrainConfig.from_dict(tc))
    out = {
        "final_mse": res.final_loss,
        "cost": res.cost,
        "sv_ratio": res.sv_ratio,
        "singular_values": np.linalg.svd(res.effective_W, compute_uv=False),
        "epochs_run": res.epochs_run,
        "interpolated": res.interpolated,
    }
    if args.log:
        write_atomic(args.log, res.history_csv())
    if args.surface:
        if X.shape[0] != 2:
            raise UsageError("--surface needs 2-D inputs")
        table = grid_eval(res.net, resolution=args.surface_resolution)
        write_atomic(args.surface, "x1,x2,f\n" + matrix_csv(table))
    text = res.history_csv() if args.format == "csv" else dumps(res.net.to_dict()) + "\n"
    domain_fail = args.strict and not res.interpolated
    return out, text, domain_fail


def _run_suite(name):
    return verify.verify_suites([name])[0]


def cmd_verify(args, cfg):
    names = args.suite or list(verify.SUITES)
    unknown = [n for n in names if n not in verify.SUITES]
    if unknown:
        raise UsageError(f"unknown suites {unknown}; choose from {sorted(verify.SUITES)}")
    if args.workers > 1 and len(names) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_suite, names))
    else:
        results = verify.verify_suites(names)
    for r in results:
        print(r.line(), file=sys.stderr)
    report = []
    for r in results:
        d = r.to_dict()
        if not args.timings:
            d.pop("seconds")
        report.append(d)
    out = {"passed": all(r.passed for r in results), "suites": {r.name: r.passed for r in results}}
    return out, dumps({"passed": out["passed"], "results": report}) + "\n", not out["passed"]


# parser ------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON object with optional 'solver', 'train', 'rays' sections")
    common.add_argument("--out", help="write the full result here (atomically)")
    common.add_argument("--seed", type=int, help="override the seed in the config")
    common.add_argument("--format", choices=("json", "csv"), help="output file format (default: csv for rays-sweep, json otherwise)")
    common.add_argument("--strict", action="store_true", help="treat non-convergence and failed checks as errors")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="reprcost", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("phi", parents=[common], help="Phi_L of a network")
    s.add_argument("--net", required=True)
    s.add_argument("--L", type=int, default=3)
    s.set_defaults(func=cmd_phi)

    s = sub.add_parser("bounds", parents=[common], help="dual lower bound, estimate and SVD upper bound of Phi_3")
    s.add_argument("--net", required=True)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("factorize", parents=[common], help="balanced L-layer factorization")
    s.add_argument("--net", required=True)
    s.add_argument("--L", type=int, default=3)
    s.set_defaults(func=cmd_factorize)

    s = sub.add_parser("rays-sweep", parents=[common], help="two-rays comparison over a range of separations")
    s.add_argument("--psi-min", type=parse_angle, default=parse_angle("0.51pi"))
    s.add_argument("--psi-max", type=parse_angle, default=parse_angle("0.95pi"))
    s.add_argument("--points", type=int, default=45)
    s.add_argument("--n-per-ray", type=int)
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=cmd_rays_sweep)

    s = sub.add_parser("project", parents=[common], help="project a network's units onto a subspace")
    s.add_argument("--net", required=True)
    s.add_argument("--samples", required=True, help="CSV, d rows x n columns")
    s.add_argument("--basis", help="CSV, d rows x s columns spanning S (default: span of the samples)")
    s.set_defaults(func=cmd_project)

    s = sub.add_parser("train", parents=[common], help="train with weight decay")
    s.add_argument("--dataset", choices=("colinear", "two-rays"))
    s.add_argument("--data-seed", type=int, default=0)
    s.add_argument("--samples", help="CSV, d rows x n columns")
    s.add_argument("--labels", help="CSV with n values")
    s.add_argument("--L", type=int)
    s.add_argument("--epochs", type=int)
    s.add_argument("--log", help="training-log CSV path")
    s.add_argument("--surface", help="write (x1, x2, f) grid CSV here")
    s.add_argument("--surface-resolution", type=int, default=41)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("verify", parents=[common], help="run verification suites")
    s.add_argument("--suite", action="append", help="suite name (repeatable; default all)")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--timings", action="store_true", help="include wall-clock seconds in the report")
    s.set_defaults(func=cmd_verify)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        if args.format is None:
            args.format = "csv" if args.command == "rays-sweep" else "json"
        cfg = read_config(args.config)
        summary, text, domain_fail = args.func(args, cfg)
        if args.out:
            write_atomic(args.out, text)
    except UsageError as exc:
        print(dumps({"error": str(exc), "kind": "usage"}))
        return 2
    except (InvalidInputError, InvalidParameterError) as exc:
        print(dumps({"error": str(exc), "kind": type(exc).__name__}))
        return 2
    except ReprCostError as exc:
        print(dumps({"error": str(exc), "kind": type(exc).__name__}))
        return 1
    print(dumps({"command": args.command, "ok": not domain_fail, **summary}))
    return 1 if domain_fail else 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
