"""Command-line front end: ``sovrating <command> [options]``.

Every command writes its artifacts (CSV, aligned text, figures) under ``--out``
together with a ``manifest_<command>.txt`` echoing the effective configuration.
Exit codes: 0 success, 2 usage error, 3 data error, 4 internal invariant failure.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, cart, dataset, evaluate, explain, ordlogit, tune
from .errors import DataError, InvariantViolation, SovRatingError
from .mlp import MlpConfig
from .mlp import train as train_mlp

EXIT_USAGE, EXIT_DATA, EXIT_INVARIANT = 2, 3, 4
MODELS = ("mlp", "cart", "ol")
LABELS = {"mlp": "MLP", "cart": "CART", "ol": "OL"}
GRIDS = ("mlp-structure", "mlp-estimation", "cart-restriction", "cart-alpha")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", default="synthetic.csv", help="input CSV (default: synthetic.csv)")
    p.add_argument("--out", default="results", help="output directory (default: results)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--config", default=None, help="key=value file of option defaults")


def _protocol(p: argparse.ArgumentParser, reps: int) -> None:
    p.add_argument("--k", type=int, default=10, help="number of folds")
    p.add_argument("--reps", type=int, default=reps, help="cross-validation replications")
    p.add_argument("--jobs", type=int, default=1, help="worker processes")


def _model_flags(p: argparse.ArgumentParser, with_all: bool = True) -> None:
    choices = (*MODELS, "all") if with_all else MODELS
    p.add_argument("--model", choices=choices, default="all" if with_all else "mlp")
    d = MlpConfig()
    p.add_argument("--hidden-layers", type=int, default=d.hidden_layers)
    p.add_argument("--neurons", type=int, default=d.neurons_per_layer)
    p.add_argument("--dropout", type=float, default=d.dropout_rate)
    p.add_argument("--epochs", type=int, default=d.epochs)
    p.add_argument("--batch-size", type=int, default=d.batch_size)
    p.add_argument("--step-size", type=float, default=d.step_size)
    p.add_argument("--max-depth", type=int, default=None)
    p.add_argument("--min-samples-split", type=int, default=2)
    p.add_argument("--min-impurity-decrease", type=float, default=0.0)
    p.add_argument("--ccp-alpha", type=float, default=0.0)
    p.add_argument("--exclude", default=",".join(ordlogit.DEFAULT_EXCLUDED),
                   help="comma-separated features left out of the ordered logit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sovrating", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="descriptive statistics of the features")
    _common(p)

    p = sub.add_parser("evaluate", help="replicated k-fold notch-accuracy table")
    _common(p)
    _protocol(p, reps=100)
    _model_flags(p)
    p.add_argument("--dump", action="store_true", help="also write the full-data CART tree")

    p = sub.add_parser("explain", help="exact SHAP values, ranking and beeswarm plots")
    _common(p)
    _model_flags(p)
    p.add_argument("--rows", default="all", help="'all' or comma-separated row indices")
    p.add_argument("--background", type=int, default=100, help="background sample size")

    p = sub.add_parser("report-ol", help="ordered logit coefficient table")
    _common(p)
    p.add_argument("--exclude", default=",".join(ordlogit.DEFAULT_EXCLUDED))

    p = sub.add_parser("grid", help="hyperparameter grid searches")
    _common(p)
    _protocol(p, reps=5)
    _model_flags(p, with_all=False)
    p.add_argument("--grid", choices=GRIDS, required=True)
    p.add_argument("--alphas", default=",".join(str(a) for a in tune.DEFAULT_ALPHAS),
                   help="comma-separated pruning strengths for cart-alpha")
    p.add_argument("--delta", type=float, default=0.5, help="parsimony tolerance (points)")

    p = sub.add_parser("synth", help="write a synthetic panel CSV to --data")
    _common(p)
    p.add_argument("--n", type=int, default=1178)
    p.add_argument("--scenario", choices=("linear", "nonlinear"), default="linear")
    p.add_argument("--noise", type=float, default=0.1)
    return parser


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def read_config(path) -> dict[str, str]:
    """Parse a ``key=value`` file; blank lines and ``#`` comments are ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


def parse_args(argv) -> argparse.Namespace:
    """Flags override ``--config`` entries, which override built-in defaults."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sp = _subparser(parser, args.command)
        actions = {a.dest: a for a in sp._actions}
        defaults = {}
        for key, value in read_config(args.config).items():
            if key not in actions or key in ("config", "help"):
                raise UsageError(f"unknown config key {key!r} for {args.command}")
            act = actions[key]
            if isinstance(act, argparse._StoreTrueAction):
                defaults[key] = value.lower() in ("1", "true", "yes")
            elif value.lower() == "none":
                defaults[key] = None
            else:
                try:
                    defaults[key] = act.type(value) if act.type else value
                except ValueError as exc:
                    raise UsageError(f"config key {key}: {exc}") from None
                if act.choices and defaults[key] not in act.choices:
                    raise UsageError(f"config key {key}: {value!r} not in {list(act.choices)}")
        sp.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> Path:
    path.write_text(text, encoding="utf-8")
    return path


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]


def write_manifest(out: Path, args, artifacts, extra=None) -> Path:
    items = {k: v for k, v in sorted(vars(args).items())}
    items["version"] = __version__
    data = Path(args.data)
    if args.command != "synth" and data.exists():
        items["data_sha256"] = _file_digest(data)
    items.update(extra or {})
    items["artifacts"] = ",".join(sorted(Path(a).name for a in artifacts))
    lines = [f"{k}={'none' if v is None else v}" for k, v in items.items()]
    return _write(out / f"manifest_{args.command.replace('-', '_')}.txt", "\n".join(lines) + "\n")


def _load(args) -> dataset.Dataset:
    path = Path(args.data)
    if not path.exists():
        raise DataError(f"data file not found: {path}")
    return dataset.load_dataset(path)


def _mlp_config(args) -> MlpConfig:
    try:
        return MlpConfig(hidden_layers=args.hidden_layers, neurons_per_layer=args.neurons,
                         dropout_rate=args.dropout, epochs=args.epochs, batch_size=args.batch_size,
                         step_size=args.step_size, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _cart_config(args) -> cart.CartConfig:
    try:
        return cart.CartConfig(args.max_depth, args.min_samples_split,
                               args.min_impurity_decrease, args.ccp_alpha)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _included(args, schema) -> list[int]:
    excluded = {s.strip() for s in args.exclude.split(",") if s.strip()}
    unknown = excluded - set(schema.names)
    if unknown:
        raise UsageError(f"unknown feature(s) in --exclude: {', '.join(sorted(unknown))}")
    return [i for i, n in enumerate(schema.names) if n not in excluded]


def _selected_models(args) -> list[str]:
    return list(MODELS) if args.model == "all" else [args.model]


def _spec(name: str, args, schema):
    if name == "mlp":
        return evaluate.MlpSpec(_mlp_config(args))
    if name == "cart":
        return evaluate.CartSpec(_cart_config(args))
    return evaluate.OlSpec(tuple(_included(args, schema)))


def _check_protocol(args) -> None:
    if args.k < 2:
        raise UsageError("k must be >= 2")
    if args.reps < 1:
        raise UsageError("reps must be >= 1")
    if args.jobs < 1:
        raise UsageError("jobs must be >= 1")


def _plots():
    from . import plots
    return plots


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_stats(args) -> int:
    d = _load(args)
    out = _out_dir(args)
    table = dataset.descriptive_stats(d)
    arts = [_write(out / "stats.csv", table.to_csv()), _write(out / "stats.txt", table.to_text())]
    write_manifest(out, args, arts, {"rows": len(d)})
    return 0


def cmd_evaluate(args) -> int:
    _check_protocol(args)
    d = _load(args)
    if args.k > len(d):
        raise UsageError(f"k={args.k} exceeds the {len(d)} rows")
    out = _out_dir(args)
    names = _selected_models(args)
    specs = [_spec(m, args, d.schema) for m in names]
    results = []
    for spec in specs:
        res = evaluate.cross_validate(spec, d, args.k, args.reps, args.seed, args.jobs)
        if not all(t.check() for t in res.tables) or not res.mean.check(1e-9):
            raise InvariantViolation(f"notch table sums inconsistent for {res.label}")
        results.append(res)
    arts = [_write(out / "notch.csv", evaluate.results_csv(results)),
            _write(out / "notch.txt", evaluate.results_text(results))]
    per_rep = ["model,replication,exact"] + [
        f"{r.label},{i},{a:.4f}" for r in results for i, a in enumerate(r.accuracies)]
    arts.append(_write(out / "notch_replications.csv", "\n".join(per_rep) + "\n"))
    if len(results) > 1:
        comps = [evaluate.compare_models(a, b)
                 for i, a in enumerate(results) for b in results[i + 1:]]
        arts.append(_write(out / "comparisons.csv", evaluate.comparisons_csv(comps)))
    if args.dump and "cart" in names:
        tree = cart.grow(d.X, d.y, _cart_config(args))
        arts.append(_write(out / "cart_tree.txt", cart.dump(tree, d.schema.names)))
    arts.append(_plots().notch_png(results, out / "notch.png"))
    write_manifest(out, args, arts, {"rows": len(d)})
    return 0


def _fit_full(name: str, args, d: dataset.Dataset):
    if name == "mlp":
        model = train_mlp(_mlp_config(args), d.X, d.y)
        return explain.mlp_target(model)
    if name == "cart":
        return explain.cart_target(cart.grow(d.X, d.y, _cart_config(args)))
    model, _ = ordlogit.fit(d.X, d.y, _included(args, d.schema), compute_se=False)
    return explain.ol_target(model)


def _rows(args, n: int) -> np.ndarray:
    if args.rows.strip().lower() == "all":
        return np.arange(n)
    try:
        rows = np.array([int(s) for s in args.rows.split(",") if s.strip()], dtype=np.int64)
    except ValueError:
        raise UsageError("--rows must be 'all' or comma-separated integers") from None
    if rows.size == 0 or rows.min() < 0 or rows.max() >= n:
        raise UsageError(f"--rows must be indices in [0, {n})")
    return rows


def cmd_explain(args) -> int:
    d = _load(args)
    if args.background < 1:
        raise UsageError("background must be >= 1")
    out = _out_dir(args)
    rows = _rows(args, len(d))
    names = list(d.schema.names)
    bg = explain.background_sample(d.X, args.background, dataset.derive_seed(args.seed, 1))
    rankings, arts = {}, []
    for m in _selected_models(args):
        target = _fit_full(m, args, d)
        exps = explain.explain_rows(target, d.X[rows], bg)
        worst = max(e.local_error for e in exps)
        if worst > 1e-6:
            raise InvariantViolation(f"SHAP local accuracy off by {worst:.3g} for {target.label}")
        rankings[target.label] = explain.importance_ranking(exps, names)
        arts.extend(explain.beeswarm_export(exps, out / f"beeswarm_{m}", names, args.seed,
                                            f"{target.label} SHAP values"))
        arts.append(_plots().beeswarm_png(exps, out / f"beeswarm_{m}.png", names, args.seed,
                                          f"{target.label} SHAP values"))
    arts.append(_write(out / "shap_ranking.csv", explain.ranking_csv(rankings)))
    write_manifest(out, args, arts, {"rows_explained": len(rows)})
    return 0


def cmd_report_ol(args) -> int:
    d = _load(args)
    out = _out_dir(args)
    _, report = ordlogit.fit(d.X, d.y, _included(args, d.schema))
    if not report.converged:
        print("warning: ordered logit hit the iteration limit", file=sys.stderr)
    arts = [_write(out / "ol_coefficients.csv", report.to_csv()),
            _write(out / "ol_coefficients.txt", report.to_text())]
    write_manifest(out, args, arts, {"log_likelihood": f"{report.log_likelihood:.6f}",
                                     "iterations": report.iterations})
    return 0


def _parse_alphas(text: str) -> tuple[float, ...]:
    try:
        alphas = tuple(float(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise UsageError("--alphas must be comma-separated numbers") from None
    if not alphas or min(alphas) < 0:
        raise UsageError("--alphas must be non-empty and >= 0")
    return alphas


def cmd_grid(args) -> int:
    _check_protocol(args)
    if args.delta < 0:
        raise UsageError("delta must be >= 0")
    d = _load(args)
    out = _out_dir(args)
    protocol = tune.Protocol(args.k, args.reps, args.seed)
    if args.grid == "mlp-structure":
        base = replace(_mlp_config(args), epochs=400, batch_size=8)
        result = tune.mlp_structure_grid(d, protocol, base=base, jobs=args.jobs)
    elif args.grid == "mlp-estimation":
        result = tune.mlp_estimation_grid(d, _mlp_config(args), protocol, jobs=args.jobs)
    elif args.grid == "cart-restriction":
        result = tune.cart_restriction_grid(d, protocol)
    else:
        result = tune.cart_alpha_sweep(d, _parse_alphas(args.alphas), protocol)
    stem = "grid_" + args.grid.replace("-", "_")
    sel = tune.select_best(result, "parsimony", args.delta)
    arts = [_write(out / f"{stem}.csv", result.to_csv()),
            _write(out / f"{stem}.txt", result.to_text()),
            _plots().grid_png(result, out / f"{stem}.png")]
    write_manifest(out, args, arts, {
        "cells": len(result.cells),
        "best": ";".join(f"{k}={v}" for k, v in result.best_by_accuracy.params),
        "selected": ";".join(f"{k}={v}" for k, v in sel.params)})
    return 0


def cmd_synth(args) -> int:
    if args.n < 50:
        raise UsageError("n must be >= 50")
    d = dataset.synthesize_dataset(args.n, args.seed, args.scenario, noise=args.noise)
    path = Path(args.data)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    dataset.write_dataset(d, path)
    out = _out_dir(args)
    write_manifest(out, args, [path], {"rows": len(d)})
    return 0


COMMANDS = {"stats": cmd_stats, "evaluate": cmd_evaluate, "explain": cmd_explain,
            "report-ol": cmd_report_ol, "grid": cmd_grid, "synth": cmd_synth}


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    except (UsageError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except (DataError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SovRatingError as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


if __name__ == "__main__":
    sys.exit(main())
