"""Command-line interface: ``intercause {bounds,maxent,fit,attribute,simulate,bootstrap}``.

Exit codes: 0 ok, 1 usage, 2 infeasible input or model failure, 3 I/O.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from pathlib import Path

import numpy as np

from .attribution import (
    DEFAULT_SHARES,
    AttributionMatrix,
    ExtendedEvidence,
    model_posterior,
    posterior_curve,
    posterior_given_evidence,
    posterior_given_extended,
    responsibility_shares,
)
from .bootstrap import PIPELINES, BootstrapInstabilityError, bootstrap, make_pipeline
from .bounds import InfeasibleRatesError, class_bounds_mono, posterior_bounds
from .classes import ALL_EVIDENCE, ClassDistribution, Evidence
from .datagen import ERROR_DISTS, SimConfig, generate_asbestos_replica, generate_simulation
from .em import (
    FitConfig,
    FitFailedError,
    MixtureModelParams,
    Restriction,
    SchemaError,
    fit_em,
    read_dataset_csv,
    write_dataset_csv,
)
from .maxent import maxent_mono, maxent_posterior
from .rates import ASBESTOS_COUNTS, InsufficientDataError, monotonicity_consistency, rates_from_counts, read_counts_csv

SCHEMA_VERSION = "1.0"

EXIT_OK, EXIT_USAGE, EXIT_MODEL, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# config and parsing helpers


def read_config(path: str | Path) -> dict[str, str]:
    """Flat ``key = value`` text; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "1", "yes"):
        return True
    if t in ("false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected true or false, got {text!r}")


def _evidence(text: str) -> Evidence:
    try:
        return Evidence.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _curve_spec(text: str) -> tuple[float, float, int]:
    try:
        lo, hi, steps = text.split(":")
        lo, hi, steps = float(lo), float(hi), int(steps)
    except ValueError:
        raise argparse.ArgumentTypeError(f"curve must be wmin:wmax:steps, got {text!r}") from None
    if not hi > lo or steps < 2:
        raise argparse.ArgumentTypeError("curve needs wmax > wmin and at least two steps")
    return lo, hi, steps


def _fit_config(args) -> FitConfig:
    cfg = FitConfig.from_mapping(read_config(args.config)) if getattr(args, "config", None) else FitConfig()
    if args.seed is not None:
        cfg.seed = args.seed
    if getattr(args, "n_starts", None) is not None:
        cfg.n_starts = args.n_starts
    return cfg


def _counts(path: str):
    return ASBESTOS_COUNTS if path == "asbestos" else read_counts_csv(path)


# --------------------------------------------------------------------------
# rendering


def _pct(p: float) -> str:
    return f"{100 * p:7.2f}%"


def _flatten(obj, prefix=""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _flatten(v, f"{prefix}.{k}" if prefix else str(k))
    elif isinstance(obj, list):
        for i, v in enumerate(obj):
            yield from _flatten(v, f"{prefix}[{i}]")
    else:
        yield prefix, obj


def _render(payload: dict, fmt: str, table: str | None = None) -> str:
    if fmt == "json":
        return json.dumps(payload, indent=2) + "\n"
    if fmt == "table" and table is not None:
        return table
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for k, v in _flatten(payload):
        w.writerow([k, v])
    return buf.getvalue()


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _interval_table(title: str, bounds_json: dict) -> list[str]:
    lines = [title]
    for g, iv in bounds_json.items():
        lo, hi = iv["lower"], iv["upper"]
        lines.append(f"  {g}  {_pct(lo)}" if hi - lo < 1e-12 else f"  {g}  [{_pct(lo)}, {_pct(hi)}]")
    return lines


def _dist_table(title: str, dist_json: dict) -> list[str]:
    return [title] + [f"  {g}  {_pct(p)}" for g, p in dist_json.items()]


def _evidence_list(args) -> list[Evidence]:
    return [args.evidence] if args.evidence is not None else list(ALL_EVIDENCE)


# --------------------------------------------------------------------------
# commands


def cmd_bounds(args) -> int:
    d = rates_from_counts(_counts(args.counts))
    ok, notes = monotonicity_consistency(d)
    try:
        classes = class_bounds_mono(d).to_json()
        posts = {str(ev): posterior_bounds(d, ev).to_json() for ev in _evidence_list(args)}
    except InfeasibleRatesError as exc:
        payload = {"schema_version": SCHEMA_VERSION, "error": "infeasible", "violations": exc.violations}
        sys.stderr.write(json.dumps(payload, indent=2) + "\n")
        return EXIT_MODEL
    payload = {"schema_version": SCHEMA_VERSION, "rates": d.to_json(), "classes": classes, "posteriors": posts}
    if not ok:
        payload["warnings"] = notes
    lines = _interval_table("class bounds", classes)
    for ev, b in posts.items():
        lines += _interval_table(f"posterior bounds | {ev}", b)
    _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
    return EXIT_OK


def cmd_maxent(args) -> int:
    d = rates_from_counts(_counts(args.counts))
    try:
        dist = maxent_mono(d)
        posts = {str(ev): maxent_posterior(d, ev).to_json() for ev in _evidence_list(args)}
    except InfeasibleRatesError as exc:
        payload = {"schema_version": SCHEMA_VERSION, "error": "infeasible", "violations": exc.violations}
        sys.stderr.write(json.dumps(payload, indent=2) + "\n")
        return EXIT_MODEL
    payload = {"schema_version": SCHEMA_VERSION, "rates": d.to_json(), "classes": dist.to_json(), "posteriors": posts}
    lines = _dist_table("maximum-entropy distribution", dist.to_json())
    for ev, p in posts.items():
        lines += _dist_table(f"posterior | {ev}", p)
    _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
    return EXIT_OK


def cmd_fit(args) -> int:
    data, _ = read_dataset_csv(args.data)
    cfg = _fit_config(args)
    fit = fit_em(data, args.monotonic, args.restriction, cfg)
    payload = {"schema_version": SCHEMA_VERSION, "covariates": list(data.covariate_names), **fit.to_json()}
    prior = model_posterior(fit.params, Evidence.empty(), data)
    payload["class_probabilities"] = prior.to_json()
    lines = [f"loglik {fit.loglik:.4f}  aic {fit.aic:.4f}  k {fit.n_free_params}  converged {fit.converged}"]
    lines += _dist_table("class probabilities", prior.to_json())
    _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
    return EXIT_OK


def _load_shares(spec: str) -> AttributionMatrix:
    if spec == "default":
        return DEFAULT_SHARES
    return AttributionMatrix.from_json(json.loads(Path(spec).read_text()))


def cmd_attribute(args) -> int:
    fit_json = json.loads(Path(args.fit).read_text())
    params = MixtureModelParams.from_json(fit_json)
    data = read_dataset_csv(args.data)[0] if args.data else None
    if params.p > 1 and data is None:
        raise UsageError("model has covariates: pass --data to average over units")
    ev = args.evidence
    if args.w is not None and args.curve is not None:
        raise UsageError("--w and --curve are mutually exclusive")

    if args.curve is not None:
        lo, hi, steps = args.curve
        curve = posterior_curve(params, ev, np.linspace(lo, hi, steps), data)
        if args.format == "csv":
            buf = io.StringIO()
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(["w", "class", "probability"])
            w.writerows(curve.rows())
            _emit(buf.getvalue(), args.out)
            if args.out:
                side = {"schema_version": SCHEMA_VERSION, **curve.crossings_json()}
                Path(args.out + ".crossings.json").write_text(json.dumps(side, indent=2) + "\n")
            return EXIT_OK
        payload = {
            "schema_version": SCHEMA_VERSION,
            **curve.crossings_json(),
            "grid": curve.grid.tolist(),
            "probabilities": {str(g): p.tolist() for g, p in curve.probs.items()},
        }
        lines = [f"dominant-class switches | {ev}"]
        lines += [f"  w = {c.w:8.3f}  {c.before} -> {c.after}" for c in curve.crossings]
        _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
        return EXIT_OK

    if args.w is not None:
        post = posterior_given_extended(params, None, ExtendedEvidence(ev, args.w), data)
    else:
        post = model_posterior(params, ev, data)
    payload = {"schema_version": SCHEMA_VERSION, "evidence": str(ev), "posterior": post.to_json()}
    if args.w is not None:
        payload["w"] = args.w
    title = f"posterior | {ev}" + (f", w = {args.w:g}" if args.w is not None else "")
    lines = _dist_table(title, post.to_json())
    if args.shares:
        shares = responsibility_shares(post, _load_shares(args.shares))
        payload["shares"] = shares
        lines += [f"share {k}  {_pct(v)}" for k, v in shares.items()]
    _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    if args.design == "asbestos":
        data, labels = generate_asbestos_replica(seed, return_labels=True)
    else:
        data, labels = generate_simulation(SimConfig(n=args.n, seed=seed, error_dist=args.error_dist))
    labels = labels if args.ground_truth else None
    if args.out is None:
        write_dataset_csv(data, sys.stdout, labels)
    else:
        write_dataset_csv(data, args.out, labels)
    return EXIT_OK


def cmd_bootstrap(args) -> int:
    data, _ = read_dataset_csv(args.data)
    cfg = _fit_config(args)
    est = make_pipeline(args.pipeline, args.monotonic, args.restriction, cfg)
    res = bootstrap(data, est, B=args.B, seed=cfg.seed, level=args.level, n_jobs=args.n_jobs)
    payload = {"schema_version": SCHEMA_VERSION, "pipeline": args.pipeline, "level": args.level, **res.to_json()}
    lines = [f"{args.pipeline}: B = {res.B}, failed = {res.n_failed}"]
    for k, e in res.estimates.items():
        lines.append(f"  {k:24s} {e.point:10.6f}  se {e.se:.6f}  [{e.ci_low:.6f}, {e.ci_high:.6f}]")
    _emit(_render(payload, args.format, "\n".join(lines) + "\n"), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--format", choices=("json", "table", "csv"), default="json")
    common.add_argument("--out", default=None, help="write here instead of stdout")

    model = _Parser(add_help=False)
    model.add_argument("--monotonic", type=_bool, default=True)
    model.add_argument("--restriction", choices=[r.value for r in Restriction], default="none")
    model.add_argument("--config", default=None, help="flat key = value file of EM settings")
    model.add_argument("--n-starts", type=int, default=None)

    p = _Parser(prog="intercause", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("bounds", parents=[common], help="sharp bounds on class and posterior probabilities")
    s.add_argument("counts", help="z,m,cases,total CSV, or 'asbestos' for the built-in counts")
    s.add_argument("--evidence", type=_evidence, default=None)
    s.set_defaults(func=cmd_bounds)

    s = sub.add_parser("maxent", parents=[common], help="maximum-entropy class distribution")
    s.add_argument("counts")
    s.add_argument("--evidence", type=_evidence, default=None)
    s.set_defaults(func=cmd_maxent)

    s = sub.add_parser("fit", parents=[common, model], help="fit the Gaussian-mixture latent-class model")
    s.add_argument("data", help="z,m,y,w[,x1,...] CSV")
    s.set_defaults(func=cmd_fit)

    s = sub.add_parser("attribute", parents=[common], help="posterior attribution from a fitted model")
    s.add_argument("fit", help="fit JSON written by 'fit'")
    s.add_argument("--evidence", type=_evidence, required=True)
    s.add_argument("--w", type=float, default=None)
    s.add_argument("--curve", type=_curve_spec, default=None, help="wmin:wmax:steps")
    s.add_argument("--shares", default=None, help="attribution JSON, or 'default'")
    s.add_argument("--data", default=None, help="dataset the model was fitted to (needed with covariates)")
    s.set_defaults(func=cmd_attribute)

    s = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset CSV")
    s.add_argument("--design", choices=("d4", "asbestos"), default="d4")
    s.add_argument("--n", type=int, default=1000)
    s.add_argument("--error-dist", choices=ERROR_DISTS, default="normal")
    s.add_argument("--ground-truth", action="store_true", help="append the latent class column")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("bootstrap", parents=[common, model], help="percentile bootstrap intervals")
    s.add_argument("data")
    s.add_argument("--pipeline", choices=PIPELINES, default="fit+attribute")
    s.add_argument("-B", type=int, default=500)
    s.add_argument("--level", type=float, default=0.95)
    s.add_argument("--n-jobs", type=int, default=1)
    s.set_defaults(func=cmd_bootstrap)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"intercause: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, argparse.ArgumentTypeError) as exc:
        print(f"intercause: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, SchemaError, InsufficientDataError, json.JSONDecodeError) as exc:
        print(f"intercause: input error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (InfeasibleRatesError, FitFailedError, BootstrapInstabilityError, ArithmeticError, ValueError) as exc:
        print(f"intercause: model error: {exc}", file=sys.stderr)
        return EXIT_MODEL


if __name__ == "__main__":
    sys.exit(main())
