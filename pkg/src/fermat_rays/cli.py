"""``fermat-rays``: conversions, traces, closed-geodesic searches, the Katok census, verification, bounds.

Every command reads an optional JSON config (``--config``); the global flags
override config values.  Results go to stdout as JSON and, with ``--out``, to
files in that directory.  Exit status: 0 success, 1 invariant violation or
failed check, 2 configuration error; errors are reported on stderr as JSON.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConfigurationError, FermatRaysError, InvariantViolation

DEFAULT_ALPHA = 1.0 / np.sqrt(2.0) - 0.3

REQUIRED = object()

# allowed config keys per command with their defaults
COMMANDS = {
    "convert": {"metric": REQUIRED, "to": REQUIRED, "gauge": "1", "samples": 1000, "seed": None, "bounds": None},
    "trace": {"metric": REQUIRED, "x0": REQUIRED, "v0": REQUIRED, "chart": 0, "s_max": 10.0, "ray": False, "t0": 0.0},
    "closed": {"metric": REQUIRED, "n_starts": 256, "s_max": 4 * np.pi, "closure_tol": 1e-8, "seed": None},
    "katok": {"alpha": DEFAULT_ALPHA, "n_starts": 500, "s_max": None, "closure_tol": 1e-8, "seed": None},
    "verify": {"metric": REQUIRED, "samples": 1000, "seed": None, "bounds": None, "rays": 4, "s_max": 6.0},
    "bounds": {"metric": REQUIRED, "resolution": 64, "bounds": None},
}
SEEDED = {"convert", "closed", "katok", "verify"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigurationError(message)


def build_parser():
    p = _Parser(prog="fermat-rays", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON config file")
        s.add_argument("--seed", type=int, help="seed for every sampling step")
        s.add_argument("--out", help="directory for JSON/CSV artifacts")
        s.add_argument("--tol", type=float, help="integration / closure tolerance")
        s.add_argument("--format", choices=("json", "csv", "both"), default="json")
    return p


def load_config(command, args):
    allowed = COMMANDS[command]
    cfg = {}
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigurationError(f"cannot read config {args.config!r}: {exc}") from None
        if not isinstance(cfg, dict):
            raise ConfigurationError("config must be a JSON object")
    unknown = sorted(set(cfg) - set(allowed) - {"tol"})
    if unknown:
        raise ConfigurationError(f"unknown config keys for {command}: {unknown}")
    out = {k: cfg.get(k, v) for k, v in allowed.items()}
    out["tol"] = cfg.get("tol")
    if args.seed is not None:
        out["seed"] = args.seed
    if args.tol is not None:
        out["tol"] = args.tol
    missing = [k for k, v in out.items() if v is REQUIRED]
    if missing:
        raise ConfigurationError(f"{command} needs config keys {missing}")
    if command in SEEDED and out.get("seed") is None:
        raise ConfigurationError(f"{command} samples randomly: a seed is mandatory (--seed or config 'seed')")
    if out["tol"] is not None and not out["tol"] > 0:
        raise ConfigurationError("tolerances must be positive")
    for k in ("closure_tol",):
        if k in out and not out[k] > 0:
            raise ConfigurationError("tolerances must be positive")
    return out


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def dumps(obj):
    # repr-based float output is the shortest string that round-trips exactly
    return json.dumps(_plain(obj), sort_keys=True, indent=2)


# --- commands ------------------------------------------------------------------------


def _data(cfg):
    from .documents import load_document

    return load_document(cfg["metric"])


def cmd_convert(cfg, args):
    from .documents import convert_document, load_document
    from .finsler import randers_to_zermelo, stationary_from_zermelo, zermelo_from_stationary, zermelo_to_randers
    from .geometry import field_from_expressions
    from .suite import sample_tangent

    doc = cfg["metric"]
    src = load_document(doc)
    new = convert_document(doc, cfg["to"], cfg["gauge"])
    dst = load_document(new)
    back = load_document(convert_document(new, doc["kind"], cfg["gauge"]))
    m = src.manifold
    rng = np.random.default_rng(cfg["seed"])
    x, v, c = sample_tangent(m, rng, cfg["samples"], cfg["bounds"])
    f = src.metric()(x, v, c)
    pointwise = float(np.max(np.abs(dst.metric()(x, v, c) / f - 1)))

    # the closure conversions give an independent numeric route to the same metric
    z = {"stationary": lambda d: zermelo_from_stationary(d), "randers": randers_to_zermelo, "zermelo": lambda d: d}
    zs = z[doc["kind"]](src)
    gauge = field_from_expressions(m, "scalar", cfg["gauge"])
    numeric = {"zermelo": zs, "randers": zermelo_to_randers(zs),
               "stationary": stationary_from_zermelo(zs, gauge)}[cfg["to"]]
    closure = float(np.max(np.abs(numeric.metric()(x, v, c) / f - 1)))

    # stationary data is only defined up to a gauge, so round trips are compared as Zermelo data
    rt = 0.0
    zb = z[doc["kind"]](back)
    for name in ("g", "W"):
        a, b = getattr(zs, name)(x, c), getattr(zb, name)(x, c)
        rt = max(rt, float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(a))))))
    report = {"document": new, "max_relative_discrepancy": pointwise, "closure_conversion_discrepancy": closure,
              "round_trip_discrepancy": rt, "samples": cfg["samples"]}
    if pointwise > 1e-10 or closure > 1e-10 or rt > 1e-12:
        raise InvariantViolation(f"conversion discrepancy: pointwise {pointwise:.3g}, round trip {rt:.3g}")
    return report, {}


def cmd_trace(cfg, args):
    from .geodesics import integrate_geodesic
    from .spacetime import StationarySpacetime, null_geodesic, write_geodesic_csv, write_ray_csv
    from .suite import as_stationary

    data = _data(cfg)
    tol = cfg["tol"] or 1e-10
    x0, v0 = np.asarray(cfg["x0"], float), np.asarray(cfg["v0"], float)
    if cfg["ray"]:
        ray = null_geodesic(StationarySpacetime(as_stationary(data)), x0, v0, cfg["s_max"], cfg["t0"],
                            cfg["chart"], tol)
        rep = {"kind": "null", "null_drift": ray.null_drift, "future_pointing": ray.future_pointing,
               "killing_energy_drift": ray.energy_drift, "x_end": ray.x[-1], "t_end": ray.t[-1],
               "chart_end": int(ray.chart[-1]), "samples": len(ray.s)}
        return rep, {"ray.csv": lambda p: write_ray_csv(ray, p)}
    F = data.metric()
    path = integrate_geodesic(F, x0, v0, cfg["s_max"], cfg["chart"], tol)
    rep = {"kind": "geodesic", "F0": path.F0, "relative_F_drift": path.relative_drift, "length": path.length,
           "x_end": path.x[-1], "v_end": path.v[-1], "chart_end": int(path.chart[-1]), "samples": len(path.s)}
    return rep, {"geodesic.csv": lambda p: write_geodesic_csv(path, F, p)}


def _closed_report(res, F):
    from .spacetime import write_geodesic_csv

    geos = [{"length": g.length, "period": g.period, "multiplicity_guess": g.multiplicity_guess,
             "x0": g.initial[0], "v0": g.initial[1], "chart": g.initial[2], "residual": g.residual,
             "closure": g.closure_residual()} for g in res.geodesics]
    files = {f"closed_{i}.csv": (lambda p, g=g: write_geodesic_csv(g.path, F, p)) for i, g in enumerate(res.geodesics)}
    diag = {k: v for k, v in res.diagnostics.items() if k != "runtime_s"}
    return {"count": len(geos), "lengths": res.lengths, "geodesics": geos,
            "continuum_suspected": res.continuum_suspected, "diagnostics": diag}, files


def cmd_closed(cfg, args):
    from .geodesics import find_closed_geodesics

    F = _data(cfg).metric()
    ct = cfg["tol"] or cfg["closure_tol"]
    res = find_closed_geodesics(F, n_starts=cfg["n_starts"], s_max=cfg["s_max"], closure_tol=ct, seed=cfg["seed"])
    return _closed_report(res, F)


def cmd_katok(cfg, args):
    from .geodesics import katok_experiment

    rep = katok_experiment(float(cfg["alpha"]), n_starts=cfg["n_starts"], s_max=cfg["s_max"], seed=cfg["seed"],
                           closure_tol=cfg["tol"] or cfg["closure_tol"])
    out = rep.as_dict()
    _, files = _closed_report(rep.search, rep.search.geodesics[0].metric if rep.search.geodesics else None)
    return out, files


def cmd_verify(cfg, args):
    from .suite import verify_suite

    checks = verify_suite(_data(cfg), n_samples=cfg["samples"], seed=cfg["seed"], bounds=cfg["bounds"],
                          n_rays=cfg["rays"], s_max=cfg["s_max"])
    ok = all(c["passed"] for c in checks.values())
    return {"passed": ok, "checks": checks}, {}


def cmd_bounds(cfg, args):
    from .finsler import period_bound_from_phi, reversibility
    from .suite import as_stationary

    rep = reversibility(as_stationary(_data(cfg)), cfg["resolution"], cfg["bounds"])
    return {"phi": rep.phi, "lambda": rep.lambda_, "numeric_lambda": rep.numeric_lambda,
            "bound": float(period_bound_from_phi(rep.phi)), "witness_point": rep.witness_point,
            "witness_chart": rep.witness_chart, "grid_gap": rep.grid_gap}, {}


HANDLERS = {"convert": cmd_convert, "trace": cmd_trace, "closed": cmd_closed, "katok": cmd_katok,
            "verify": cmd_verify, "bounds": cmd_bounds}


def run(argv=None):
    args = build_parser().parse_args(argv)
    cfg = load_config(args.command, args)
    report, files = HANDLERS[args.command](cfg, args)
    text = dumps(report)
    if args.format in ("csv", "both") and not args.out:
        raise ConfigurationError("--format csv needs --out")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        if args.format in ("json", "both"):
            with open(os.path.join(args.out, f"{args.command}.json"), "w") as fh:
                fh.write(text + "\n")
        if args.format in ("csv", "both"):
            for name, write in files.items():
                write(os.path.join(args.out, name))
    print(text)
    return 1 if report.get("passed") is False else 0


def main(argv=None):
    try:
        return run(argv)
    except ConfigurationError as exc:
        return _fail(2, "configuration_error", exc)
    except InvariantViolation as exc:
        return _fail(1, "invariant_violation", exc)
    except FermatRaysError as exc:
        return _fail(1, type(exc).__name__, exc)


def _fail(code, kind, exc):
    sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    return code


if __name__ == "__main__":
    sys.exit(main())
