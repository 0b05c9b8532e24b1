"""Command-line surface: estimate, simulate, bench.

Reports are JSON documents with the stable keys ``method``, ``delta_hat``,
``source_accuracy``, ``selected_features``, ``diagnostics`` and
``weight_metrics``; errors print a single ``ERROR <CATEGORY>: detail``
line and exit 2 for input problems, 1 for anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass

import numpy as np

from . import bench
from .baselines import run_bbse, run_dlu, run_kliep
from .data import (
    FeatureSchema,
    ShiftReport,
    TabularDataset,
    align_schemas,
    load_dataset,
    load_schema,
    save_dataset,
    validate_dataset,
)
from .errors import InputError, ShiftScopeError, ValidationError
from .estimator import (
    GroundTruth,
    estimate_gap,
    score_gap,
    score_weights,
    select_features,
    source_accuracy,
)
from .predictor import load_predictions, predict, train_logistic
from .sees_c import SeesCConfig, default_basis, run_sees_c
from .sees_d import SeesDConfig, run_sees_d, thread_cap
from .synth import ShiftSpec, apply_shift, empirical_marginal
from .tabulate import apply_discretizer, fit_discretizer
from .weights import TableWeight

METHODS = ("sees-d", "sees-c", "bbse", "kliep", "dlu")


@dataclass(frozen=True)
class RunConfig:
    source_path: str
    target_path: str
    schema_path: str
    output_path: str
    method: str = "sees-d"
    sparsity: int = 1
    eta: float = 0.001
    bins: int = 5
    weight_bound: float = 20.0
    kliep_iters: int = 2500
    seed: int = 0
    predictions_path: str | None = None
    truth_path: str | None = None

    def __post_init__(self):
        for name in ("source_path", "target_path", "schema_path", "output_path"):
            if not getattr(self, name):
                raise ValidationError(f"{name} must be nonempty")
        if self.sparsity < 0 or self.eta < 0:
            raise ValidationError("sparsity and eta must be >= 0")
        if self.method not in METHODS + ("all",):
            raise ValidationError(f"unknown method {self.method!r}")


# ---------------------------------------------------------------------------
# Config-file helpers.

def _encode_x(schema: FeatureSchema, indices, values) -> list:
    out = []
    for j, v in zip(indices, values):
        col = schema.column(j)
        out.append(col.categories[v - 1] if col.categories else str(v))
    return out


def _decode_feature(schema: FeatureSchema, ref) -> int:
    if isinstance(ref, int):
        return ref
    return schema.index_of(str(ref))


def _decode_value(schema: FeatureSchema, j: int, raw) -> int:
    col = schema.column(j)
    raw = str(raw)
    if col.categories and raw in col.categories:
        return col.categories.index(raw) + 1
    return int(raw)


def _decode_y(schema: FeatureSchema, raw) -> int:
    raw = str(raw)
    if schema.label_categories and raw in schema.label_categories:
        return schema.label_categories.index(raw) + 1
    return int(raw)


def load_shift_spec(path, schema: FeatureSchema) -> ShiftSpec:
    """Shift spec file: shifted feature names/indices plus (x_I, y) masses."""
    with open(path) as fh:
        raw = json.load(fh)
    shifted = tuple(sorted(_decode_feature(schema, f) for f in raw["shifted_features"]))
    cells = {}
    for cell in raw["cells"]:
        xv = tuple(
            _decode_value(schema, j, v) for j, v in zip(shifted, cell.get("x", []))
        )
        cells[(xv, _decode_y(schema, cell["y"]))] = float(cell["mass"])
    return ShiftSpec(shifted=shifted, cells=cells)


def save_truth(path, schema: FeatureSchema, truth: GroundTruth) -> None:
    weights = truth.true_weights
    if not isinstance(weights, TableWeight):
        raise ValidationError("only table truth weights are serializable")
    cells = []
    for (xv, y), w in sorted(weights.table.items()):
        lab = (schema.label_categories[y - 1] if schema.label_categories else str(y))
        cells.append({
            "x": _encode_x(schema, weights.index_set, xv),
            "y": lab,
            "w": w,
        })
    doc = {
        "shifted_features": [schema.column(j).name for j in truth.true_shift_set],
        "weights": cells,
        "true_target_accuracy": truth.true_target_accuracy,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_truth(path, schema: FeatureSchema) -> GroundTruth:
    with open(path) as fh:
        raw = json.load(fh)
    shifted = tuple(sorted(_decode_feature(schema, f) for f in raw["shifted_features"]))
    table = {}
    for cell in raw["weights"]:
        xv = tuple(_decode_value(schema, j, v) for j, v in zip(shifted, cell["x"]))
        table[(xv, _decode_y(schema, cell["y"]))] = float(cell["w"])
    return GroundTruth(
        true_weights=TableWeight(index_set=shifted, table=table),
        true_shift_set=shifted,
        true_target_accuracy=raw.get("true_target_accuracy"),
    )


# ---------------------------------------------------------------------------
# estimate

def _check(ds: TabularDataset, name: str) -> None:
    findings = validate_dataset(ds)
    if findings:
        raise ValidationError(f"{name}: " + "; ".join(findings[:5]))


def _run_one_method(method: str, cfg: RunConfig, raw_pair, disc_pair, truth):
    source_raw, target_raw = raw_pair
    source, target = disc_pair
    if method == "sees-d":
        dcfg = SeesDConfig(
            sparsity=cfg.sparsity,
            weight_bound=cfg.weight_bound,
            parallel=thread_cap() > 1,
        )
        weight, selected, diag = run_sees_d(source, target, dcfg)
        eval_ds = source
    elif method == "sees-c":
        basis = default_basis(source_raw.schema, reference=source_raw)
        weight, diag = run_sees_c(source_raw, target_raw, basis, SeesCConfig(eta=cfg.eta))
        selected = select_features(weight, cfg.sparsity)
        eval_ds = source_raw
    elif method == "bbse":
        weight, diag = run_bbse(source, target)
        selected = select_features(weight, cfg.sparsity)
        eval_ds = source
    elif method == "kliep":
        weight, diag = run_kliep(source_raw, target_raw, max_iters=cfg.kliep_iters)
        selected = ()
        eval_ds = source_raw
    else:  # dlu
        weight, diag = run_dlu(source, target)
        selected = ()
        eval_ds = source
    delta = estimate_gap(eval_ds, weight)
    acc = source_accuracy(eval_ds)
    weight_metrics = None
    if truth is not None:
        weight_metrics = score_weights(weight, truth, eval_ds)
        if truth.true_target_accuracy is not None:
            diag = dict(diag)
            diag["gap_sq_error"] = score_gap(delta, truth, acc)
    return ShiftReport(
        method=method,
        delta_hat=delta,
        source_accuracy=acc,
        selected_features=selected,
        diagnostics=diag,
        weight_metrics=weight_metrics,
    )


def cmd_estimate(cfg: RunConfig) -> None:
    schema = load_schema(cfg.schema_path)
    source = load_dataset(cfg.source_path, schema)
    target = load_dataset(cfg.target_path, schema)
    if source.labels is None:
        raise ValidationError("source file has no label column")
    target = target.without_labels()
    _check(source, "source")
    _check(target, "target")
    align_schemas(source, target)

    if cfg.predictions_path:
        parts = cfg.predictions_path.split(",")
        if len(parts) != 2:
            raise ValidationError(
                "--predictions-path takes SOURCE_CSV,TARGET_CSV (two files)"
            )
        source = load_predictions(source, parts[0])
        target = load_predictions(target, parts[1])
    else:
        model = train_logistic(source)
        source = predict(model, source)
        target = predict(model, target)

    if schema.all_discrete():
        disc_source, disc_target = source, target
    else:
        disc = fit_discretizer(source, cfg.bins)
        disc_source = apply_discretizer(disc, source)
        disc_target = apply_discretizer(disc, target)

    truth = load_truth(cfg.truth_path, schema) if cfg.truth_path else None
    methods = list(METHODS) if cfg.method == "all" else [cfg.method]
    reports = [
        _run_one_method(m, cfg, (source, target), (disc_source, disc_target), truth)
        for m in methods
    ]
    payload = reports[0].to_dict() if len(reports) == 1 else [r.to_dict() for r in reports]
    with open(cfg.output_path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"wrote {cfg.output_path}")


# ---------------------------------------------------------------------------
# simulate

def cmd_simulate(spec_path, base_path, schema_path, n: int, seed: int,
                 out_prefix: str) -> None:
    schema = load_schema(schema_path)
    base = load_dataset(base_path, schema)
    if base.labels is None:
        raise ValidationError("base file has no label column")
    spec = load_shift_spec(spec_path, schema)
    rng = np.random.default_rng(seed)
    s1, s2 = (int(v) for v in rng.integers(0, 2**31 - 1, size=2))
    identity = ShiftSpec(shifted=spec.shifted, cells=empirical_marginal(base, spec.shifted))
    source, _ = apply_shift(base, identity, n, s1)
    target, truth = apply_shift(base, spec, n, s2)

    model = train_logistic(source)
    target_scored = predict(model, target)
    true_acc = float(np.mean(target_scored.predictions == target_scored.labels))
    truth = GroundTruth(
        true_weights=truth.true_weights,
        true_shift_set=truth.true_shift_set,
        true_target_accuracy=true_acc,
    )
    save_dataset(source, f"{out_prefix}.source.csv", include_labels=True)
    save_dataset(target.without_labels(), f"{out_prefix}.target.csv")
    save_truth(f"{out_prefix}.truth.json", schema, truth)
    print(f"wrote {out_prefix}.source.csv, {out_prefix}.target.csv, {out_prefix}.truth.json")


# ---------------------------------------------------------------------------
# entry point

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shiftscope",
        description="Estimate and explain accuracy change under sparse joint shift",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate the accuracy gap on a source/target pair")
    est.add_argument("--source-path", required=True)
    est.add_argument("--target-path", required=True)
    est.add_argument("--schema-path", required=True)
    est.add_argument("--output-path", required=True)
    est.add_argument("--method", default="sees-d", choices=METHODS + ("all",))
    est.add_argument("--sparsity", type=int, default=1)
    est.add_argument("--eta", type=float, default=0.001)
    est.add_argument("--bins", type=int, default=5)
    est.add_argument("--weight-bound", type=float, default=20.0)
    est.add_argument("--kliep-iters", type=int, default=2500)
    est.add_argument("--seed", type=int, default=0)
    est.add_argument("--predictions-path", default=None,
                     help="external predictions: SOURCE_CSV,TARGET_CSV")
    est.add_argument("--truth-path", default=None,
                     help="truth file from `simulate` to score weights and gap")

    sim = sub.add_parser("simulate", help="draw a shifted source/target pair from a base")
    sim.add_argument("--spec-path", required=True)
    sim.add_argument("--base-path", required=True)
    sim.add_argument("--schema-path", required=True)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out-prefix", required=True)

    ben = sub.add_parser("bench", help="run a benchmark suite on bundled synthetic data")
    ben.add_argument("--suite", required=True,
                     choices=("tradeoff", "sparsity", "robustness", "sensitivity"))
    ben.add_argument("--seeds", type=int, default=5)
    ben.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "estimate":
            cfg = RunConfig(
                source_path=args.source_path,
                target_path=args.target_path,
                schema_path=args.schema_path,
                output_path=args.output_path,
                method=args.method,
                sparsity=args.sparsity,
                eta=args.eta,
                bins=args.bins,
                weight_bound=args.weight_bound,
                kliep_iters=args.kliep_iters,
                seed=args.seed,
                predictions_path=args.predictions_path,
                truth_path=args.truth_path,
            )
            cmd_estimate(cfg)
        elif args.command == "simulate":
            cmd_simulate(args.spec_path, args.base_path, args.schema_path,
                         args.n, args.seed, args.out_prefix)
        else:
            rows = bench.run_suite(args.suite, args.seeds, args.out)
            print(f"wrote {rows} rows to {args.out}")
    except FileNotFoundError as exc:
        print(f"ERROR FILE_NOT_FOUND: {exc}", file=sys.stderr)
        return 2
    except InputError as exc:
        print(f"ERROR {exc.category}: {exc}", file=sys.stderr)
        return 2
    except ShiftScopeError as exc:
        print(f"ERROR {exc.category}: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"ERROR INTERNAL: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
