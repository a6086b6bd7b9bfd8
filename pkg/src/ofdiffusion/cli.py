"""Command-line interface.

Subcommands::

    fit         samples -> model file
    generate    model -> samples (base draws, then the reverse-time SDE)
    forward     Euler-Maruyama simulation of the forward dynamics
    metrics     score / marginal-density / second-moment errors
    experiment  end-to-end drivers writing CSV tables
    inspect     dump a model, matrix, config or run directory

Expected failures exit with status 2 after printing
``ofdiffusion <command>: <stage>: <message>`` to stderr.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as ofio
from .config import EXPERIMENTS, ConfigError, load_config_file, parse_override, resolve_config
from .metrics import MetricError, marginal_density_error, relative_score_error, second_moment_error
from .pca import PCAError
from .potentials import double_well_grad
from .sample_matrix import as_array
from .samplers import SamplerError, SdeConfig, forward_em, icdf_sample_base, mh_sample_base, reverse_em
from .score import FitConfig, ScoreFitError, fit_score, load_model, model_header_json

__all__ = ["main", "build_parser"]

# flag name -> FitConfig field
_FIT_FLAGS = {
    "family": str, "n": int, "d_b": int, "beta": float, "alpha": float, "L": float, "n_m": int,
    "T": float, "dt": float, "method": str, "tau": float, "rank": int, "sketch": int, "seed": int,
}


class CLIError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _stage_of(exc: Exception) -> tuple[str, str]:
    msg = str(exc)
    if isinstance(exc, CLIError):
        return exc.stage, msg
    if isinstance(exc, ConfigError):
        return "config", msg.removeprefix("config: ")
    if isinstance(exc, ofio.FormatError):
        return "format", msg
    if isinstance(exc, ScoreFitError):
        head, _, rest = msg.partition(": ")
        return ("fit " + head, rest) if rest else ("fit", msg)
    if isinstance(exc, SamplerError):
        return "sampling", msg
    if isinstance(exc, MetricError):
        return "metrics", msg
    if isinstance(exc, PCAError):
        return "pca", msg
    if isinstance(exc, OSError):
        return "io", f"{exc.strerror or msg}: {exc.filename}" if exc.filename else msg
    return "input", msg


def _log(quiet: bool):
    t0 = time.perf_counter()

    def log(msg):
        if not quiet:
            print(f"[{time.perf_counter() - t0:8.1f}s] {msg}", file=sys.stderr, flush=True)
    return log


def _read_samples(path):
    X = as_array(ofio.read_samples(path))
    if X.ndim != 2 or X.shape[0] == 0:
        raise CLIError("input", f"{path}: no samples")
    return X


# ---------------------------------------------------------------------------
# fit
# ---------------------------------------------------------------------------

def _fit_config(args) -> FitConfig:
    opts = {}
    if args.config:
        doc = load_config_file(args.config)
        if not isinstance(doc, dict):
            raise ConfigError(f"config: {args.config} must hold a JSON object")
        opts.update(doc)
    for key, typ in _FIT_FLAGS.items():
        val = getattr(args, key)
        if val is not None:
            opts[key] = typ(val)
    for item in args.set:
        key, val = parse_override(item)
        opts[key] = val
    try:
        return FitConfig.from_dict(opts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"config: {exc}") from None


def cmd_fit(args) -> int:
    log = _log(args.quiet)
    cfg = _fit_config(args)
    X = _read_samples(args.samples)
    log(f"fitting {cfg.family} n={cfg.n} d_b={cfg.d_b} on {X.shape[0]} x {X.shape[1]} samples")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        model = fit_score(X, cfg)
    for msg in sorted({str(w.message) for w in caught}):
        log(f"warning: {msg}")
    model.save(args.output)
    log(f"wrote {args.output} (|S| = {model.info['size']}, {model.times.size} grid times)")
    return 0


# ---------------------------------------------------------------------------
# generate
# ---------------------------------------------------------------------------

def cmd_generate(args) -> int:
    log = _log(args.quiet)
    model = load_model(args.model)
    systems = model.basis.systems
    if args.sampler == "icdf":
        xT = icdf_sample_base(systems, args.N, seed=args.seed)
    else:
        xT = mh_sample_base(systems, args.N, burn_in=args.burn_in, thin=args.thin, seed=args.seed)
    log(f"drew {args.N} base samples; integrating {model.times.size - 1} reverse steps")
    X = reverse_em(model, xT, seed=args.seed + 1)
    ofio.write_samples(args.output, X)
    log(f"wrote {args.output}")
    return 0


# ---------------------------------------------------------------------------
# forward
# ---------------------------------------------------------------------------

def _forward_drift(args):
    if args.model:
        return load_model(args.model).basis.grad_potential, None
    if args.potential == "ou":
        return (lambda X: args.alpha * X), None
    if args.potential == "double-well":
        return double_well_grad, None
    return (lambda X: np.zeros_like(X)), args.L


def cmd_forward(args) -> int:
    X0 = _read_samples(args.samples)
    drift, wrap = _forward_drift(args)
    beta = args.beta
    if args.model and beta is None:
        beta = load_model(args.model).beta
    cfg = SdeConfig(dt=args.dt, T=args.T, beta=1.0 if beta is None else beta, seed=args.seed, wrap_L=wrap)
    out = forward_em(drift, X0, cfg)
    ofio.write_samples(args.output, out[args.T])
    _log(args.quiet)(f"wrote {args.output}")
    return 0


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

def _emit(rows: list, path):
    fields = list(rows[0])
    w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    if path:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=fields, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)


def cmd_metrics(args) -> int:
    if args.kind == "score":
        model = load_model(args.model)
        E = _read_samples(args.eval)
        if args.target == "double-well":
            bdw = args.beta_dw

            def ref(_t, X):
                return -bdw * double_well_grad(X)
        else:
            m, v = args.mean, args.var

            def ref(_t, X):
                return -(X - m) / v
        err = relative_score_error(model, ref, 0.0, E)
        rows = [{"metric": "relative_score_error", "t": 0.0, "target": args.target, "value": repr(err)}]
    else:
        G, R = _read_samples(args.generated), _read_samples(args.reference)
        if args.kind == "marginal":
            per_dim, err = marginal_density_error(G, R, bw_scale=args.bw_scale)
            rows = [{"metric": "marginal_error", "coordinate": i, "value": repr(float(e))}
                    for i, e in enumerate(per_dim)]
            rows.append({"metric": "marginal_error", "coordinate": "mean", "value": repr(err)})
        else:
            rows = [{"metric": "moment_error", "value": repr(second_moment_error(G, R))}]
    _emit(rows, args.out)
    return 0


# ---------------------------------------------------------------------------
# experiment
# ---------------------------------------------------------------------------

def cmd_experiment(args) -> int:
    from .experiments import run_experiment

    user = load_config_file(args.config) if args.config else None
    overrides = [parse_override(s) for s in args.set]
    if args.basis:
        overrides.append(("base.family", args.basis))
    if args.n is not None:
        overrides.append(("basis.n", args.n))
    sweep = {}
    for item in args.sweep:
        key, raw = parse_override(item)
        sweep[key] = raw if isinstance(raw, list) else [parse_override(f"v={v}")[1] for v in str(raw).split(",")]
    if sweep:
        user = {**(user or {}), "sweep": {**(user or {}).get("sweep", {}), **sweep}}
    cfg = resolve_config(args.name, user=user, overrides=overrides, preset=args.preset)
    out = Path(args.out) if args.out else Path(cfg["paths"]["out"]) / cfg["experiment"]
    rows = run_experiment(cfg, out, log=_log(args.quiet))
    fields = [k for k in rows[0] if k != "config"]
    w = csv.DictWriter(sys.stdout, fieldnames=fields, lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items() if k in fields})
    return 0


# ---------------------------------------------------------------------------
# inspect
# ---------------------------------------------------------------------------

def _inspect_model(path, diagnostics: bool) -> dict:
    model = load_model(path)
    doc = json.loads(model_header_json(model))
    ranks = [dg["rank"] for dg in model.diagnostics if dg["rank"] is not None]
    doc["summary"] = {
        "d": model.d, "size": int(model.coeffs.shape[1]), "grid_times": int(model.times.size),
        "T": float(model.T), "dt": float(model.dt),
        "rank_range": [min(ranks), max(ranks)] if ranks else None,
        "max_residual": max(float(dg["residual"]) for dg in model.diagnostics),
        "statuses": sorted({dg["status"] for dg in model.diagnostics}),
        "mean_field_base": model.base is not None,
    }
    if diagnostics:
        doc["diagnostics"] = model.diagnostics
    return doc


def cmd_inspect(args) -> int:
    p = Path(args.path)
    if p.is_dir():
        results = p / "results.csv"
        if not results.exists():
            raise CLIError("inspect", f"{p} holds no results.csv")
        doc = {"config": json.loads((p / "config.json").read_text()) if (p / "config.json").exists() else None,
               "results": list(csv.DictReader(results.open()))}
    elif p.suffix == ".csv":
        a = _read_samples(p)
        doc = {"rows": a.shape[0], "cols": a.shape[1], "mean": a.mean(axis=0).tolist(),
               "std": a.std(axis=0).tolist()}
    elif p.suffix == ".json":
        raw = load_config_file(p)
        doc = resolve_config(user=raw) if "experiment" in raw else FitConfig.from_dict(raw).to_dict()
    else:
        with open(p, "rb") as fh:
            magic = fh.read(4)
        if magic == ofio.MATRIX_MAGIC:
            a = ofio.read_matrix(p)
            doc = {"rows": a.shape[0], "cols": a.shape[1],
                   "mean": a.mean(axis=0).tolist() if a.size else [],
                   "std": a.std(axis=0).tolist() if a.size else []}
        else:
            doc = _inspect_model(p, args.diagnostics)
    print(json.dumps(doc, indent=1, sort_keys=True))
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ofdiffusion", description=__doc__.split("\n")[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-q", "--quiet", action="store_true", help="no progress log on stderr")

    f = sub.add_parser("fit", parents=[common], help="fit a score model to samples")
    f.add_argument("samples", help="samples (.csv or binary matrix)")
    f.add_argument("-o", "--output", required=True, help="model file to write")
    f.add_argument("--config", help="JSON object of fit options")
    f.add_argument("--family", choices=["hermite", "fourier", "meanfield"])
    f.add_argument("--n", type=int)
    f.add_argument("--d-b", dest="d_b", type=int, help="pair bandwidth")
    for name in ("beta", "alpha", "L", "T", "dt", "tau"):
        f.add_argument(f"--{name}", type=float)
    f.add_argument("--n-m", dest="n_m", type=int, help="maxent polynomial degree")
    f.add_argument("--method", choices=["thresholded", "sketched", "ridge"])
    f.add_argument("--rank", type=int)
    f.add_argument("--sketch", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    f.set_defaults(func=cmd_fit)

    g = sub.add_parser("generate", parents=[common], help="sample from a fitted model")
    g.add_argument("model")
    g.add_argument("-o", "--output", required=True)
    g.add_argument("-N", type=int, default=1000)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--sampler", choices=["mh", "icdf"], default="mh")
    g.add_argument("--burn-in", type=int, default=1000)
    g.add_argument("--thin", type=int, default=10)
    g.set_defaults(func=cmd_generate)

    fw = sub.add_parser("forward", parents=[common], help="simulate the forward dynamics")
    fw.add_argument("samples")
    fw.add_argument("-o", "--output", required=True)
    fw.add_argument("--potential", choices=["ou", "double-well", "flat"], default="ou")
    fw.add_argument("--model", help="use this model's base potential instead")
    fw.add_argument("--alpha", type=float, default=1.0)
    fw.add_argument("--L", type=float, default=3.0, help="half-period for --potential flat")
    fw.add_argument("--beta", type=float)
    fw.add_argument("--T", type=float, required=True)
    fw.add_argument("--dt", type=float, default=0.002)
    fw.add_argument("--seed", type=int, default=0)
    fw.set_defaults(func=cmd_forward)

    m = sub.add_parser("metrics", help="error measures")
    msub = m.add_subparsers(dest="kind", required=True)
    ms = msub.add_parser("score", help="relative L2 score error at t = 0")
    ms.add_argument("model")
    ms.add_argument("eval", help="samples of the initial law")
    ms.add_argument("--target", choices=["double-well", "gaussian"], default="double-well")
    ms.add_argument("--beta-dw", type=float, default=2.0)
    ms.add_argument("--mean", type=float, default=0.0)
    ms.add_argument("--var", type=float, default=1.0)
    for kind, hlp in (("marginal", "mean KDE L1 error of 1-D marginals"),
                      ("moment", "relative Frobenius error of second moments")):
        mk = msub.add_parser(kind, help=hlp)
        mk.add_argument("generated")
        mk.add_argument("reference")
        if kind == "marginal":
            mk.add_argument("--bw-scale", type=float, default=1.0)
    for p in msub.choices.values():
        p.add_argument("--out", help="also write the row to this CSV")
    m.set_defaults(func=cmd_metrics)

    e = sub.add_parser("experiment", parents=[common], help="run an end-to-end driver")
    e.add_argument("name", choices=EXPERIMENTS)
    e.add_argument("--config", help="JSON run configuration")
    e.add_argument("--preset", choices=["desk", "paper"])
    e.add_argument("--basis", choices=["hermite", "fourier", "meanfield"], help="shorthand for base.family")
    e.add_argument("--n", type=int, help="shorthand for basis.n")
    e.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config value; VALUE is parsed as JSON when possible")
    e.add_argument("--sweep", action="append", default=[], metavar="KEY=V1,V2",
                   help="run every listed value of KEY")
    e.add_argument("--out", help="output directory")
    e.set_defaults(func=cmd_experiment)

    i = sub.add_parser("inspect", help="dump a model, matrix, config or run directory")
    i.add_argument("path")
    i.add_argument("--diagnostics", action="store_true", help="include per-time solver records")
    i.set_defaults(func=cmd_inspect)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except (CLIError, ConfigError, ofio.FormatError, ScoreFitError, SamplerError, MetricError,
            PCAError, OSError, ValueError, KeyError) as exc:
        stage, msg = _stage_of(exc)
        print(f"ofdiffusion {args.command}: {stage}: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
