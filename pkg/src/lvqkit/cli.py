"""Command line front end.

Subcommands: generate, train, crossval, inspect, export-sphere. All output
files are self-describing (versioned JSON or headed CSV) and byte-stable
under identical flags. Errors print one machine-parsable line
``error=<Code>: <text>`` and map to exit codes: 2 usage, 3 data, 4 numeric.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import data as data_mod
from . import evaluation, sphere
from .errors import (
    ClassTooSmall,
    DegenerateVector,
    EmptyClass,
    EmptyMask,
    FormatError,
    LvqError,
    MissingNotSupported,
    NonFinite,
    RankUnsupported,
    TooFewSamples,
    UnsupportedVariant,
    ZeroDenominator,
)
from .model import TrainingConfig, Variant, load_model, save_model, train

_DATA_ERRORS = (
    FormatError,
    ClassTooSmall,
    TooFewSamples,
    EmptyClass,
    MissingNotSupported,
    EmptyMask,
    UnsupportedVariant,
    RankUnsupported,
)
_NUMERIC_ERRORS = (DegenerateVector, ZeroDenominator, NonFinite)


def _write_json(path, document) -> None:
    Path(path).write_text(json.dumps(document, indent=1, allow_nan=False) + "\n")


def _data_options(parser):
    parser.add_argument("--data", required=True, help="input file (CSV, or UCI "
                        "processed-Cleveland format with --binary/--five-class)")
    parser.add_argument("--label-col", default="label",
                        help="label column name for generic CSVs (default: label)")
    group = parser.add_mutually_exclusive_group()
    group.add_argument("--binary", action="store_true",
                       help="Cleveland input, disease grades merged into one class")
    group.add_argument("--five-class", action="store_true",
                       help="Cleveland input, original five condition grades")
    parser.add_argument("--keep-minus-nine", action="store_true",
                        help="write the literal -9 convention into missing cells "
                        "(Cleveland modes only)")


def _train_options(parser):
    parser.add_argument("--variant", required=True,
                        help="eg|el|e2m|ag|al|a2m or the long names")
    parser.add_argument("--beta", type=float, default=1.0)
    parser.add_argument("--protos-per-class", type=int, default=1)
    parser.add_argument("--rank", type=int, default=None,
                        help="projection rank M (default: full rank)")
    parser.add_argument("--epochs", type=int, default=300)
    parser.add_argument("--lr", type=float, default=0.05, dest="lr")
    parser.add_argument("--lr-matrix", type=float, default=0.005)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--backend", choices=("auto", "compiled", "python"),
                        default="auto")


def _load_dataset(args) -> data_mod.LabeledDataset:
    if args.binary or args.five_class:
        ds = data_mod.load_cleveland(args.data)
        mode = "binary" if args.binary else "five-class"
        policy = "keep-minus-nine" if args.keep_minus_nine else "to-missing"
        return data_mod.relabel(ds, mode, missing_policy=policy)
    schema = data_mod.CsvSchema(label_column=args.label_col)
    return data_mod.load_csv(args.data, schema)


def _config_from(args) -> TrainingConfig:
    return TrainingConfig(
        prototypes_per_class=args.protos_per_class,
        epochs=args.epochs,
        lr_prototype=args.lr,
        lr_matrix=args.lr_matrix,
        beta=args.beta,
        rank=args.rank,
        seed=args.seed,
    )


def cmd_generate(args) -> int:
    if args.dataset != "football":
        raise ValueError(f"unknown dataset {args.dataset!r}; available: football")
    ds = data_mod.generate_football(args.n, args.seed)
    data_mod.save_csv(ds, args.out)
    print(f"wrote {args.n} samples to {args.out}")
    print(f"class balance: {data_mod.class_balance_text(ds)}")
    return 0


def cmd_train(args) -> int:
    dataset = _load_dataset(args)
    cfg = _config_from(args)
    model, trace = train(dataset, cfg, args.variant, backend=args.backend)
    save_model(model, args.out)
    trace_path = args.trace_out or str(Path(args.out).with_suffix("")) + ".trace.csv"
    with open(trace_path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "cost", "train_error"])
        for epoch, (c, e) in enumerate(zip(trace.cost, trace.error)):
            writer.writerow([epoch, repr(float(c)), repr(float(e))])
    print(f"trained {model.variant.value} on {dataset.n_samples} samples; "
          f"final epoch error {trace.error[-1]:.4f}")
    print(f"wrote {args.out} and {trace_path}")
    return 0


def cmd_crossval(args) -> int:
    dataset = _load_dataset(args)
    spec = evaluation.ExperimentSpec(
        dataset=dataset,
        variant=args.variant,
        configs=(_config_from(args),),
        folds=args.folds,
        runs=args.runs,
        oversample=args.oversample,
        smote_k=args.smote_k,
        zscore=not args.no_zscore,
        seed=args.seed,
        backend=args.backend,
    )
    report = evaluation.run_experiment(spec)
    _write_json(args.out, report.to_document())
    outputs = [args.out]
    if args.csv_out:
        Path(args.csv_out).write_text(report.cells_csv(dataset.class_names))
        outputs.append(args.csv_out)
    summary = report.summaries[0]
    print(f"{report.variant}: train error {summary.mean['train_error']:.3f} "
          f"(std {summary.std['train_error']:.3f}), "
          f"test error {summary.mean['test_error']:.3f} "
          f"(std {summary.std['test_error']:.3f})")
    print(f"sensitivity {summary.mean['sensitivity']:.3f}, "
          f"specificity {summary.mean['specificity']:.3f}")
    print("wrote " + " and ".join(outputs))
    return 0


def cmd_inspect(args) -> int:
    model = load_model(args.model)
    names = model.feature_names or tuple(
        f"f{j + 1}" for j in range(model.n_features)
    )
    class_names = model.class_names or tuple(
        str(c) for c in range(model.n_classes)
    )
    prefix = args.out_prefix

    relevances = evaluation.feature_relevances(model)
    with open(f"{prefix}_relevances.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["matrix", "feature", "relevance"])
        for block, values in relevances.items():
            for name, value in zip(names, values):
                writer.writerow([block, name, repr(float(value))])

    with open(f"{prefix}_prototypes.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["prototype", "class"] + list(names))
        for r in range(model.n_prototypes):
            writer.writerow(
                [r, class_names[model.proto_labels[r]]]
                + [repr(float(v)) for v in model.prototypes[r]]
            )

    profiles = evaluation.eigen_relevance(model)
    with open(f"{prefix}_eigenvalues.csv", "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["matrix", "position", "eigenvalue", "effective_rank"])
        for block, profile in profiles.items():
            for pos, value in enumerate(profile.eigenvalues):
                writer.writerow([block, pos, repr(float(value)), profile.effective_rank])

    print(f"wrote {prefix}_relevances.csv, {prefix}_prototypes.csv, "
          f"{prefix}_eigenvalues.csv")
    return 0


def cmd_export_sphere(args) -> int:
    model = load_model(args.model)
    dataset = None
    if args.data:
        dataset = data_mod.load_csv(
            args.data, data_mod.CsvSchema(label_column=args.label_col)
        )
    export = sphere.export_sphere(model, args.resolution, data=dataset)
    _write_json(args.out, export.to_document())
    print(f"wrote {args.out}: {export.grid_directions.shape[0]} directions, "
          f"rank {export.rank}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lvqkit",
        description="Prototype classifiers with adaptive angle and Euclidean "
        "dissimilarities: dataset generation, training, cross-validation, "
        "and interpretability exports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic dataset as CSV")
    p.add_argument("--dataset", default="football")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="train one model on a full dataset")
    _data_options(p)
    _train_options(p)
    p.add_argument("--out", required=True, help="model document path (JSON)")
    p.add_argument("--trace-out", default=None, help="cost-trace CSV path")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("crossval", help="stratified cross-validation")
    _data_options(p)
    _train_options(p)
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--oversample", choices=("none", "smote", "smoteg"),
                   default="none")
    p.add_argument("--smote-k", type=int, default=3)
    p.add_argument("--no-zscore", action="store_true",
                   help="skip per-fold z-scoring")
    p.add_argument("--out", required=True, help="report path (JSON)")
    p.add_argument("--csv-out", default=None, help="flat per-cell CSV path")
    p.set_defaults(func=cmd_crossval)

    p = sub.add_parser("inspect", help="export relevances, prototypes, eigenvalues")
    p.add_argument("--model", required=True)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("export-sphere", help="decision boundary samples on the "
                       "reduced-space unit sphere")
    p.add_argument("--model", required=True)
    p.add_argument("--resolution", type=int, default=24,
                   help="grid has resolution^2 directions")
    p.add_argument("--data", default=None, help="optional CSV to project")
    p.add_argument("--label-col", default="label")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_sphere)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except _NUMERIC_ERRORS as exc:
        print(f"error={exc.code}: {exc}", file=sys.stderr)
        return 4
    except _DATA_ERRORS as exc:
        print(f"error={exc.code}: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error=IOError: {exc}", file=sys.stderr)
        return 3
    except (ValueError, LvqError) as exc:
        print(f"error={type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
