"""Command-line interface.

Subcommands: synth, train, eval, explain, baseline, gridsearch. Every
command is deterministic given its flags and seed; report files are
byte-identical across reruns except for the isolated "timing" object.
Exit codes: 0 success, 1 runtime/data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from dataclasses import asdict, fields, replace

import numpy as np

from .baselines import DtwConfig, LrConfig, knn_dtw_predict, lr_predict_batch, lr_train
from .data import MtsDataset, SynthParams, generate_synthetic, load_dataset, save_dataset, stratified_split
from .errors import DataError, FormatError, UnsupportedOperationError, UsageError
from .evaluate import accuracy, evaluation_report, export_heatmap
from .model import ABLATIONS, ConvAttnConfig, config_for_dataset, load_model, save_model
from .trainer import TrainProtocol, grid_search, train, train_repeats

_MODEL_KEYS = {
    "kernel_len", "n_filters", "hidden_nodes", "reg_alpha", "conv_activation",
    "sigma1", "sigma2", "ablation", "seed", "conv_bias", "regularize_conv",
    "regularize_biases",
}
_PROTOCOL_KEYS = {f.name for f in fields(TrainProtocol)}


def _write_json(doc: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _default_threads() -> int:
    try:
        return max(1, int(os.environ.get("CONVATTN_THREADS", "1")))
    except ValueError:
        return 1


def _execution_info(args) -> dict:
    return {
        "threads": getattr(args, "threads", 1),
        "deterministic": bool(getattr(args, "deterministic", False)),
    }


def _load_run_config(path: str | None) -> tuple[dict, dict]:
    """Model/protocol override dicts from a run-config JSON file.

    Unknown keys anywhere are rejected.
    """
    if path is None:
        return {}, {}
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: bad JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: run config must be a JSON object")
    unknown = set(doc) - {"model", "protocol"}
    if unknown:
        raise FormatError(f"{path}: unknown top-level keys: {sorted(unknown)}")
    model_doc = doc.get("model", {})
    proto_doc = doc.get("protocol", {})
    for name, part, allowed in (("model", model_doc, _MODEL_KEYS), ("protocol", proto_doc, _PROTOCOL_KEYS)):
        if not isinstance(part, dict):
            raise FormatError(f"{path}: {name} section must be an object")
        bad = set(part) - allowed
        if bad:
            raise FormatError(f"{path}: unknown {name} keys: {sorted(bad)}")
    if "fractions" in proto_doc:
        proto_doc = dict(proto_doc)
        proto_doc["fractions"] = tuple(proto_doc["fractions"])
    return dict(model_doc), dict(proto_doc)


# -- commands -------------------------------------------------------------


def cmd_synth(args) -> int:
    try:
        params = SynthParams(
            n=args.n, noise_sigma=args.noise, len_min=args.len_min, len_max=args.len_max,
            mag_min=args.mag_min, mag_max=args.mag_max, seed=args.seed,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    dataset = generate_synthetic(params)
    save_dataset(dataset, args.out)
    counts = np.bincount(dataset.labels, minlength=dataset.class_count)
    balance = ", ".join(f"class {c}: {int(k)}" for c, k in enumerate(counts))
    print(f"wrote {dataset.n} instances ({dataset.p} x {dataset.t_len}) to {args.out} ({balance})")
    return 0


def _build_train_inputs(args, dataset: MtsDataset) -> tuple[ConvAttnConfig, TrainProtocol]:
    model_doc, proto_doc = _load_run_config(args.config)
    if args.ablate is not None:
        model_doc["ablation"] = args.ablate
    if args.seed is not None:
        model_doc["seed"] = args.seed
        proto_doc["seed"] = args.seed
    if args.max_epochs is not None:
        proto_doc["max_epochs"] = args.max_epochs
    if args.patience is not None:
        proto_doc["patience"] = args.patience
    if args.repeats is not None:
        proto_doc["repeats"] = args.repeats
    config = config_for_dataset(dataset, **model_doc)
    protocol = TrainProtocol(**proto_doc)
    return config, protocol


def cmd_train(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset(args.data)
    config, protocol = _build_train_inputs(args, dataset)
    runs, summary = train_repeats(dataset, config, protocol)
    best_i = max(range(len(runs)), key=lambda i: (runs[i][1].best_val_accuracy, -i))
    save_model(runs[best_i][0], args.out)
    report = {
        "command": "train",
        "ablation": config.ablation,
        "config": asdict(config),
        "protocol": {**asdict(protocol), "fractions": list(protocol.fractions)},
        "runs": [rep.to_dict() for _, rep in runs],
        "summary": summary,
        "saved_run": best_i,
        "execution": _execution_info(args),
        "timing": {
            "wall_seconds": time.perf_counter() - t0,
            "per_run_seconds": [rep.wall_seconds for _, rep in runs],
        },
    }
    _write_json(report, args.report)
    mean = summary["mean_test_accuracy"]
    print(f"trained {len(runs)} run(s); mean test accuracy {mean:.2f}% -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset(args.data)
    model = load_model(args.model)
    report = evaluation_report(model, dataset)
    report["command"] = "eval"
    report["timing"] = {"wall_seconds": time.perf_counter() - t0}
    _write_json(report, args.report)
    print(f"accuracy {report['accuracy']:.2f}% on {dataset.n} instances -> {args.report}")
    return 0


def cmd_explain(args) -> int:
    dataset = load_dataset(args.data)
    model = load_model(args.model)
    if not 0 <= args.index < dataset.n:
        raise ValueError(f"instance index {args.index} out of range [0, {dataset.n})")
    explanation = model.explain(dataset.instances[args.index])
    sidecar = export_heatmap(explanation, args.out)
    print(f"wrote heatmap {args.out} and scores {sidecar}")
    return 0


def cmd_baseline(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset(args.data)
    protocol = TrainProtocol(seed=args.seed)
    tr_idx, va_idx, te_idx = stratified_split(dataset, protocol.fractions, protocol.seed)
    x_tr, y_tr = dataset.instances[tr_idx], dataset.labels[tr_idx]
    x_va, y_va = dataset.instances[va_idx], dataset.labels[va_idx]
    x_te, y_te = dataset.instances[te_idx], dataset.labels[te_idx]
    report: dict = {
        "command": "baseline",
        "method": args.method,
        "seed": args.seed,
        "split_sizes": [len(tr_idx), len(va_idx), len(te_idx)],
        "execution": _execution_info(args),
    }
    if args.method == "dtw1nn":
        config = DtwConfig(znormalize=args.znormalize)
        preds = knn_dtw_predict(x_tr, y_tr, x_te, k=args.k, config=config)
        report["k"] = args.k
        report["znormalize"] = args.znormalize
        report["test_accuracy"] = accuracy(preds, y_te)
    else:
        config = LrConfig(seed=args.seed, reg_lambda=args.reg_lambda)
        model, info = lr_train(x_tr, y_tr, dataset.class_count, config, x_va, y_va)
        preds = lr_predict_batch(model, x_te)
        report["test_accuracy"] = accuracy(preds, y_te)
        report["selected_epoch"] = info["selected_epoch"]
        report["weight_l2_norm"] = float(np.sqrt((model.weights * model.weights).sum()))
    report["timing"] = {"wall_seconds": time.perf_counter() - t0}
    _write_json(report, args.report)
    print(f"{args.method} test accuracy {report['test_accuracy']:.2f}% -> {args.report}")
    return 0


def cmd_gridsearch(args) -> int:
    t0 = time.perf_counter()
    dataset = load_dataset(args.data)
    grids = None
    if args.grids is not None:
        with open(args.grids, "r", encoding="utf-8") as fh:
            try:
                grids = json.load(fh)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{args.grids}: bad JSON: {exc}") from exc
        if not isinstance(grids, dict):
            raise FormatError(f"{args.grids}: grids must be a JSON object")
    config = config_for_dataset(dataset, seed=args.seed)
    protocol = TrainProtocol(seed=args.seed, repeats=args.repeats)
    best_config, rows = grid_search(dataset, config, protocol, grids)
    report = {
        "command": "gridsearch",
        "best": asdict(best_config),
        "rows": rows,
        "seed": args.seed,
        "repeats": args.repeats,
        "execution": _execution_info(args),
        "timing": {"wall_seconds": time.perf_counter() - t0},
    }
    _write_json(report, args.report)
    print(f"searched {len(rows)} cells -> {args.report}")
    return 0


# -- parser ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="convattn",
        description="Explainable multivariate time-series classification with "
        "convolutional interval features and dual attention.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the synthetic square-wave benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--len-min", type=int, default=5)
    p.add_argument("--len-max", type=int, default=15)
    p.add_argument("--mag-min", type=float, default=1.0)
    p.add_argument("--mag-max", type=float, default=3.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--config", default=None, help="run-config JSON (model/protocol sections)")
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--report", required=True, help="report JSON path")
    p.add_argument("--ablate", choices=ABLATIONS, default=None)
    p.add_argument("--repeats", type=int, default=None)
    p.add_argument("--seed", type=int, default=None, help="overrides config-file seeds")
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a dataset file")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--report", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("explain", help="export the attention heatmap for one instance")
    p.add_argument("--data", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True, help="heatmap CSV path")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("baseline", help="run a reference classifier")
    p.add_argument("--data", required=True)
    p.add_argument("--method", choices=("dtw1nn", "lr"), required=True)
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--znormalize", action="store_true")
    p.add_argument("--reg-lambda", type=float, default=0.0)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("gridsearch", help="hyperparameter grid search")
    p.add_argument("--data", required=True)
    p.add_argument("--grids", default=None, help="JSON with any of n_filters/kernel_len/hidden_nodes/reg_alpha")
    p.add_argument("--report", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--repeats", type=int, default=1)
    p.add_argument("--threads", type=int, default=_default_threads())
    p.add_argument("--deterministic", action="store_true")
    p.set_defaults(func=cmd_gridsearch)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, DataError, FormatError, UnsupportedOperationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
