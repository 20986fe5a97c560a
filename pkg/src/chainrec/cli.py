"""Command-line front end for the chainrec toolkit.

Subcommands wire the library into reproducible batch runs:

* ``simulate``: draw a synthetic dataset (and its generating parameters).
* ``train``: fit one model (proposed factor model or a baseline).
* ``predict``: write per-cell decision values and hard labels.
* ``evaluate``: score a model file against a labeled dataset.
* ``tune``: grid search regularizers on an internal train/validation
  split, then refit the winner on the full dataset.
* ``benchmark``: tune and compare all three methods on one shared
  train/validation/test split and emit a summary table.

Every command exits 0 on success and 1 with a one-line diagnostic on
stderr for any validation or file problem.  With ``--threads 1`` a
fixed seed reproduces output files byte for byte.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import sys

from .baselines import (
    OrdinalModel,
    StandardModel,
    fit_ordinal,
    fit_standard,
    predict_ordinal,
    predict_standard,
)
from .data import Dataset, load_cells, load_dataset, save_dataset, split_dataset, validate_chain
from .metrics import EvalReport, evaluate_model, overall_error, reports_table, save_table
from .model import HyperParams, ModelParams, all_pairs, predict_cells, predict_dataset
from .modelio import load_model, save_model
from .simulate import SimConfig, generate_dataset
from .train import fit

METHODS = ("proposed", "standard", "ordinal")

# Default tuning grids: one list per factor-model regularizer, plus the
# single-ridge list the baselines sweep (the union of the other three).
DEFAULT_GRID = {
    "l1": (0.001, 0.005, 0.01),
    "l2": (0.01, 0.05, 0.1),
    "l3": (0.0001, 0.0005, 0.001),
}
DEFAULT_GRID["lam"] = tuple(
    sorted({v for key in ("l1", "l2", "l3") for v in DEFAULT_GRID[key]})
)
GRID_KEYS = ("l1", "l2", "l3", "lam")


class CommandError(Exception):
    """A user-facing failure; main() prints it and exits nonzero."""


# ---------------------------------------------------------------------------
# Flag parsing helpers


def _parse_int_tuple(text: str, flag: str) -> tuple[int, ...]:
    try:
        vals = tuple(int(x) for x in text.split(",") if x.strip() != "")
    except ValueError as exc:
        raise CommandError(f"{flag}: expected comma-separated integers, got {text!r}") from exc
    if not vals:
        raise CommandError(f"{flag}: needs at least one value")
    return vals


def _parse_ratios(text: str) -> tuple[float, float, float]:
    parts = text.split(",")
    if len(parts) != 3:
        raise CommandError(f"--split: expected three comma-separated fractions, got {text!r}")
    try:
        ratios = tuple(float(x) for x in parts)
    except ValueError as exc:
        raise CommandError(f"--split: malformed fraction in {text!r}") from exc
    return ratios  # type: ignore[return-value]


def _parse_weights(text: str):
    """Weight flag: a preset name or an explicit ``t':t=w,...`` list."""
    if text in ("all", "next", "last"):
        return text
    out = {}
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        pair, _, val = chunk.partition("=")
        tp, _, t = pair.partition(":")
        try:
            out[(int(tp), int(t))] = float(val)
        except ValueError as exc:
            raise CommandError(
                f"--weights: expected \"t':t=w\" entries or a preset name, got {chunk!r}"
            ) from exc
    if not out:
        raise CommandError(f"--weights: no entries in {text!r}")
    return out


def _parse_stage_pairs(text: str) -> list[tuple[int, int]]:
    pairs = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        tp, sep, t = chunk.partition(":")
        if not sep:
            raise CommandError(f"--pairs: expected \"t':t\" entries, got {chunk!r}")
        try:
            pairs.append((int(tp), int(t)))
        except ValueError as exc:
            raise CommandError(f"--pairs: malformed stage pair {chunk!r}") from exc
    if not pairs:
        raise CommandError(f"--pairs: no entries in {text!r}")
    return pairs


def _parse_grid(text: str | None) -> dict[str, tuple[float, ...]]:
    """Grid flag: ``key=v1,v2;key=v1,...`` with per-key defaults.

    Keys: ``l1``/``l2``/``l3`` for the factor model, ``lam`` for the
    baselines' single ridge.  Omitted keys keep their default lists.
    """
    grid = dict(DEFAULT_GRID)
    if text is None:
        return grid
    for chunk in text.split(";"):
        chunk = chunk.strip()
        if not chunk:
            continue
        key, sep, vals = chunk.partition("=")
        key = key.strip()
        if not sep or key not in GRID_KEYS:
            raise CommandError(
                f"--grid: expected \"{'/'.join(GRID_KEYS)}=v1,v2,...\" sections, got {chunk!r}"
            )
        try:
            parsed = tuple(float(v) for v in vals.split(",") if v.strip() != "")
        except ValueError as exc:
            raise CommandError(f"--grid: malformed value list in {chunk!r}") from exc
        if not parsed:
            raise CommandError(f"--grid: empty value list for {key!r}")
        grid[key] = parsed
    return grid


def _load_data(args) -> Dataset:
    try:
        return load_dataset(args.data, getattr(args, "schema", None))
    except FileNotFoundError as exc:
        raise CommandError(f"cannot read dataset: {exc}") from exc
    except ValueError as exc:
        raise CommandError(f"malformed dataset under {args.data}: {exc}") from exc


def _check_chain(dataset: Dataset) -> None:
    report = validate_chain(dataset)
    if not report.ok:
        raise CommandError(f"dataset violates the label chain: {report}")


def _guard_schema(model, dataset: Dataset) -> None:
    if model.schema != dataset.schema:
        raise CommandError("model and dataset disagree on the feature schema")


def _hyper(args, lambdas=None) -> HyperParams:
    l1, l2, l3 = lambdas if lambdas is not None else (args.lambda1, args.lambda2, args.lambda3)
    return HyperParams(
        K=args.k,
        lambda1=l1,
        lambda2=l2,
        lambda3=l3,
        weights=_parse_weights(args.weights),
        tol_outer=args.tol,
        max_outer=args.max_iter,
        seed=args.seed,
        class_balance=args.balanced,
    )


def _predict_any(model, dataset: Dataset, pairs=None):
    if isinstance(model, ModelParams):
        return predict_dataset(model, dataset, pairs)
    if isinstance(model, StandardModel):
        return predict_standard(model, dataset, pairs)
    if isinstance(model, OrdinalModel):
        return predict_ordinal(model, dataset, pairs)
    raise CommandError(f"unsupported model type {type(model).__name__}")


def _method_name(model) -> str:
    if isinstance(model, ModelParams):
        return "proposed"
    if isinstance(model, StandardModel):
        return "standard"
    return "ordinal"


# ---------------------------------------------------------------------------
# Subcommands


def cmd_simulate(args) -> int:
    cfg = SimConfig(
        user_cardinalities=_parse_int_tuple(args.users, "--users"),
        item_cardinalities=_parse_int_tuple(args.items, "--items"),
        K=args.k,
        T=args.stages,
        n_pairs=args.count,
        noise_scale=args.noise,
        seed=args.seed,
    )
    dataset, truth = generate_dataset(cfg)
    save_dataset(dataset, args.out)
    if args.truth:
        save_model(truth, args.truth)
    alive = (dataset.Y == 1).sum(axis=0)
    stages = " ".join(f"t{r + 1}={int(c)}" for r, c in enumerate(alive))
    print(f"simulate: wrote {len(dataset)} cells to {args.out} (positives {stages})")
    return 0


def cmd_train(args) -> int:
    dataset = _load_data(args)
    _check_chain(dataset)
    if args.method == "proposed":
        model, trace = fit(dataset, _hyper(args), threads=args.threads)
        if args.trace:
            trace.save(args.trace)
        objective = trace.rows[-1].objective
        status = "converged" if trace.converged else "hit the sweep limit"
        detail = f"objective {objective:.6f} after {trace.rows[-1].iteration} sweeps ({status})"
    else:
        fitter = fit_standard if args.method == "standard" else fit_ordinal
        model = fitter(
            dataset,
            args.lambda1,
            weights=_parse_weights(args.weights),
            class_balance=args.balanced,
            tol=args.tol,
            max_iter=args.max_iter,
        )
        detail = f"lambda {args.lambda1}"
    save_model(model, args.out)
    print(f"train: wrote {args.method} model to {args.out} ({detail})")
    return 0


def cmd_predict(args) -> int:
    model = load_model(args.model)
    pairs = _parse_stage_pairs(args.pairs) if args.pairs else all_pairs(model.schema.T)
    if args.cells:
        if not isinstance(model, ModelParams):
            raise CommandError("label-free --cells prediction needs a proposed-method model")
        dataset = _load_data(args)
        _guard_schema(model, dataset)
        cells = load_cells(args.cells)
        pred = predict_cells(model, dataset.users, dataset.items, cells, pairs)
    else:
        dataset = _load_data(args)
        _guard_schema(model, dataset)
        pred = _predict_any(model, dataset, pairs)
    with open(args.out, "w", newline="", encoding="utf8") as fh:
        writer = csv.writer(fh)
        tags = [f"{tp}:{t}" for tp, t in pred.pairs]
        writer.writerow(
            ["i", "j"]
            + [f"f({s})" for s in tags]
            + [f"phi({s})" for s in tags]
            + [f"assumed({s})" for s in tags]
        )
        for n, (i, j) in enumerate(pred.cells):
            writer.writerow(
                [i, j]
                + [repr(float(v)) for v in pred.f[n]]
                + [int(v) for v in pred.phi[n]]
                + [int(v) for v in pred.assumed[n]]
            )
    print(f"predict: wrote {len(pred.cells)} cells x {len(pred.pairs)} stage pairs to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    dataset = _load_data(args)
    _check_chain(dataset)
    model = load_model(args.model)
    _guard_schema(model, dataset)
    pred = _predict_any(model, dataset)
    report = evaluate_model(pred, dataset, _parse_weights(args.weights), _method_name(model))
    report.save_json(args.out)
    if args.table:
        save_table([report], args.table)
    print(
        f"evaluate: {report.method} overall {report.overall_pooled:.6f} "
        f"inconsistency {report.inconsistency:.6f} -> {args.out}"
    )
    return 0


def _tune_method(method, train_ds, val_ds, args):
    """Grid search one method; returns (lambdas, val error, fitted model)."""
    weights = _parse_weights(args.weights)
    grid = _parse_grid(args.grid)
    best = None
    if method == "proposed":
        for l1, l2, l3 in itertools.product(grid["l1"], grid["l2"], grid["l3"]):
            model, _ = fit(train_ds, _hyper(args, (l1, l2, l3)), threads=args.threads)
            err = overall_error(predict_dataset(model, val_ds), val_ds, weights)
            if best is None or err < best[1]:
                best = ((l1, l2, l3), err, model)
    else:
        fitter = fit_standard if method == "standard" else fit_ordinal
        predictor = predict_standard if method == "standard" else predict_ordinal
        for lam in grid["lam"]:
            model = fitter(
                train_ds,
                lam,
                weights=weights,
                class_balance=args.balanced,
                tol=args.tol,
                max_iter=args.max_iter,
            )
            err = overall_error(predictor(model, val_ds), val_ds, weights)
            if best is None or err < best[1]:
                best = ((lam,), err, model)
    return best


def cmd_tune(args) -> int:
    dataset = _load_data(args)
    _check_chain(dataset)
    train_ds, val_ds, _ = split_dataset(dataset, args.split, seed=args.seed, allow_empty=True)
    if len(val_ds) == 0:
        raise CommandError("--split leaves no validation cells to score the grid on")
    lambdas, err, _ = _tune_method(args.method, train_ds, val_ds, args)
    if args.method == "proposed":
        model, _ = fit(dataset, _hyper(args, lambdas), threads=args.threads)
        tag = f"lambda1={lambdas[0]} lambda2={lambdas[1]} lambda3={lambdas[2]}"
    else:
        fitter = fit_standard if args.method == "standard" else fit_ordinal
        model = fitter(
            dataset,
            lambdas[0],
            weights=_parse_weights(args.weights),
            class_balance=args.balanced,
            tol=args.tol,
            max_iter=args.max_iter,
        )
        tag = f"lambda={lambdas[0]}"
    save_model(model, args.out)
    print(f"tune: {args.method} picked {tag} (validation error {err:.6f}) -> {args.out}")
    return 0


def cmd_benchmark(args) -> int:
    dataset = _load_data(args)
    _check_chain(dataset)
    train_ds, val_ds, test_ds = split_dataset(dataset, args.split, seed=args.seed)
    weights = _parse_weights(args.weights)
    reports: list[EvalReport] = []
    chosen = []
    for method in METHODS:
        lambdas, _, model = _tune_method(method, train_ds, val_ds, args)
        pred = _predict_any(model, test_ds)
        reports.append(evaluate_model(pred, test_ds, weights, method))
        chosen.append((method, lambdas))
    save_table(reports, args.out)
    for method, lambdas in chosen:
        print(f"benchmark: {method} lambdas {','.join(repr(v) for v in lambdas)}")
    for row in reports_table(reports):
        print("\t".join(row))
    print(f"benchmark: wrote table to {args.out}")
    return 0


# ---------------------------------------------------------------------------
# Parser assembly


def _add_common(sub, *names) -> None:
    if "data" in names:
        sub.add_argument("--data", required=True, help="dataset directory")
        sub.add_argument("--schema", default=None, help="schema file override")
    if "lambdas" in names:
        sub.add_argument("--k", type=int, default=8, help="latent dimension")
        sub.add_argument("--lambda1", type=float, default=0.005, help="numeric-table ridge (baselines: the single ridge)")
        sub.add_argument("--lambda2", type=float, default=0.05, help="category-table ridge")
        sub.add_argument("--lambda3", type=float, default=0.0005, help="stage-vector ridge")
        sub.add_argument("--weights", default="all", help="stage-pair weights: all|next|last|\"t':t=w,...\"")
        sub.add_argument("--tol", type=float, default=1e-4, help="outer-loop tolerance")
        sub.add_argument("--max-iter", type=int, default=50, help="outer sweep limit")
        sub.add_argument("--balanced", action="store_true", help="inverse class-frequency costs")
        sub.add_argument("--threads", type=int, default=1, help="parallel subproblem workers")
    if "method" in names:
        sub.add_argument("--method", choices=METHODS, default="proposed")
    sub.add_argument("--seed", type=int, default=0, help="run seed")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainrec",
        description="Monotonic multistage recommender classifiers: simulate, train, evaluate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic dataset")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--users", default="20,10", help="user category cardinalities, e.g. 20,10")
    p.add_argument("--items", default="20,10", help="item category cardinalities")
    p.add_argument("--k", type=int, default=8, help="latent dimension of the generator")
    p.add_argument("--stages", type=int, default=2, help="number of stages T")
    p.add_argument("--count", type=int, default=5000, help="number of (user, item) cells")
    p.add_argument("--noise", type=float, default=1.0, help="noise scale relative to score spread")
    p.add_argument("--truth", default=None, help="also write the generating parameters here")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit one model and write it to disk")
    _add_common(p, "data", "lambdas", "method")
    p.add_argument("--out", required=True, help="output model file (JSON)")
    p.add_argument("--trace", default=None, help="also write the objective trace CSV here")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="write per-cell decision values and labels")
    _add_common(p, "data")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--out", required=True, help="output CSV")
    p.add_argument("--pairs", default=None, help="stage pairs to emit, e.g. 0:1,0:2,1:2")
    p.add_argument(
        "--cells",
        default=None,
        help="CSV of i,j cells to score label-free (proposed models only)",
    )
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a model file on a labeled dataset")
    _add_common(p, "data")
    p.add_argument("--model", required=True, help="model file")
    p.add_argument("--out", required=True, help="output report (JSON)")
    p.add_argument("--table", default=None, help="also write a one-column summary table CSV")
    p.add_argument("--weights", default="all", help="stage-pair weights for the overall rate")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("tune", help="grid search regularizers, refit the winner on all data")
    _add_common(p, "data", "lambdas", "method")
    p.add_argument("--out", required=True, help="output model file (JSON)")
    p.add_argument(
        "--grid",
        default=None,
        help="grid spec l1=...;l2=...;l3=... (baselines: lam=...); defaults to the built-in grids",
    )
    p.add_argument(
        "--split",
        type=_parse_ratios,
        default=(0.1, 0.1, 0.8),
        help="train,validation,test fractions (test part unused here)",
    )
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("benchmark", help="tune and compare all methods on one shared split")
    _add_common(p, "data", "lambdas")
    p.add_argument("--out", required=True, help="output summary table CSV")
    p.add_argument("--grid", default=None, help="grid spec, as in tune")
    p.add_argument(
        "--split",
        type=_parse_ratios,
        default=(0.1, 0.1, 0.8),
        help="train,validation,test fractions",
    )
    p.set_defaults(func=cmd_benchmark)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"chainrec: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"chainrec: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
