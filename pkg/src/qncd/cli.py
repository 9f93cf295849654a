"""Command-line interface: generate, train, eval, sweep-m, scaling, report.

Outputs live under an ``--out-dir`` tree with datasets/, models/ and
reports/ subdirectories. Every training run persists a ``*.report.json``
record; ``qncd report`` aggregates them into the 12-model x 6-task grid.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical error.
"""

from __future__ import annotations

import argparse
import base64
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import (
    DEFAULT_EDGE_PROB,
    DEFAULT_FRACTIONS,
    DEFAULT_STICKINESS,
    Dataset,
    TaskSpec,
    build_processes,
    build_task_spec,
    feature_view,
    generate,
    header_dict,
    read_qncd,
    spec_header_dict,
    split,
    write_qncd,
)
from .errors import NumericalError, QncdError, ValidationError
from .neural.core import accuracy_from_probs
from .neural.io import load_model as load_neural_model
from .neural.io import save_model as save_neural_model
from .neural.model import make_classifier
from .neural.search import hyperparameter_search
from .neural.train import DEFAULT_EPOCH_CAP, train
from .seeds import TAG_SWEEP, derive_seed
from .svm import model_from_json, model_to_json, predict_labels, train_svm
from .zoo import (
    MODEL_NAMES,
    default_mlp_config,
    default_rnn_config,
    resolve,
    search_space,
    svm_config_grid,
)

log = logging.getLogger("qncd")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3

TASK_COLUMNS = ("iid-0.1", "nm-0.1", "vs-0.1", "iid-1", "nm-1", "vs-1")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


class UsageError(QncdError):
    pass


def _out_dirs(out_dir: str) -> dict[str, Path]:
    root = Path(out_dir)
    dirs = {name: root / name for name in ("datasets", "models", "reports")}
    for path in dirs.values():
        path.mkdir(parents=True, exist_ok=True)
    return dirs


def _dataset_fingerprint(spec: TaskSpec) -> dict:
    return {
        "task": spec.task,
        "t_total": spec.t_total,
        "steps": spec.steps,
        "nodes": spec.nodes,
        "edge_prob": spec.edge_prob,
        "n_samples": spec.n_samples,
        "master_seed": spec.master_seed,
    }


def _variant_key(spec: TaskSpec) -> str:
    return f"{spec.task}-{spec.t_total:g}"


def _pair_digests(ds: Dataset) -> np.ndarray:
    mixes = np.array(
        [derive_seed(s.topology_seed, s.noise_seed) for s in ds.samples], dtype=np.uint64
    )
    return np.sort(mixes)


def _digests_to_b64(digests: np.ndarray) -> str:
    return base64.b64encode(digests.tobytes()).decode("ascii")


def _digests_from_b64(blob: str) -> np.ndarray:
    return np.frombuffer(base64.b64decode(blob), dtype=np.uint64)


def _balanced_subsample(x, y, n: int, seed: int):
    if n >= len(y):
        return x, y
    if n < 2 or n % 2:
        raise ValidationError("subsample size must be even and >= 2")
    rng = np.random.default_rng(derive_seed(seed, 301))
    keep = []
    for label in (0, 1):
        idx = np.flatnonzero(y == label)
        rng.shuffle(idx)
        keep.extend(idx[: n // 2])
    keep = np.sort(np.array(keep))
    return x[keep], y[keep]


def _train_on_dataset(ds: Dataset, model_name: str, seed: int, budget: int,
                      epochs: int | None, subsample: int | None):
    """Train a roster model on a dataset; returns (kind, artifacts, record)."""
    mspec = resolve(model_name)
    t0 = time.perf_counter()
    parts = split(ds, DEFAULT_FRACTIONS)
    train_ds, val_ds, test_ds = parts
    x_tr, y_tr = feature_view(train_ds, mspec.feature_mode)
    x_va, y_va = feature_view(val_ds, mspec.feature_mode)
    x_te, y_te = feature_view(test_ds, mspec.feature_mode)
    meta = {
        "model": mspec.name,
        "feature_mode": mspec.feature_mode,
        "dataset": _dataset_fingerprint(ds.spec),
        "fractions": list(DEFAULT_FRACTIONS),
        "subsample": subsample,
        "seed": seed,
        "budget": budget,
        "train_pair_digest_b64": _digests_to_b64(_pair_digests(train_ds)),
        "generator_version": ds.generator_version,
    }

    if mspec.kind == "svm":
        flat_tr = x_tr.reshape(x_tr.shape[0], -1)
        flat_va = x_va.reshape(x_va.shape[0], -1)
        flat_te = x_te.reshape(x_te.shape[0], -1)
        if subsample:
            flat_tr, y_tr = _balanced_subsample(flat_tr, y_tr, subsample, seed)
        signed = 2.0 * y_tr - 1.0
        grid = svm_config_grid(flat_tr)[: max(1, budget)]
        best = None
        for kernel, c in grid:
            log.info("svm: training %s C=%g on %d samples", kernel.describe(), c, len(signed))
            model = train_svm(flat_tr, signed, kernel, c)
            val_acc = accuracy_of_labels(predict_labels(model, flat_va), y_va)
            log.info("svm: %s C=%g -> validation %.2f%%", kernel.describe(), c, val_acc)
            if best is None or val_acc > best[0]:
                best = (val_acc, model)
        val_acc, model = best
        model.feature_mode = mspec.feature_mode
        model.training_meta.update(meta)
        test_acc = accuracy_of_labels(predict_labels(model, flat_te), y_te)
        record = {
            "model": mspec.name,
            "variant": _variant_key(ds.spec),
            "dataset": meta["dataset"],
            "seed": seed,
            "budget": budget,
            "config": {"kernel": model.kernel.describe(), "c": model.c},
            "val_accuracy": val_acc,
            "test_accuracy": test_acc,
            "wall_clock_seconds": time.perf_counter() - t0,
            "generator_version": ds.generator_version,
        }
        return "svm", model, record

    # neural families
    epoch_cap = epochs if epochs is not None else DEFAULT_EPOCH_CAP
    if subsample:
        x_tr, y_tr = _balanced_subsample(x_tr, y_tr, subsample, seed)
    if budget > 1:
        nm_short = ds.spec.task == "nm" and ds.spec.t_total <= 0.1
        space = search_space(mspec, nm_short_time=nm_short)
        result = hyperparameter_search(
            space, budget=budget, seed=seed,
            train_data=(x_tr, y_tr), val_data=(x_va, y_va),
            epoch_budget=epochs if epochs is not None else 40,
        )
        classifier = space.make_classifier(result.best_config)
        params, report = result.best_params, result.best_report
        report.meta["trials"] = [
            {
                "index": t.index,
                "config": t.config,
                "best_val_accuracy": t.best_val_accuracy,
                "epochs_trained": t.epochs_trained,
                "pruned_at_rung": t.pruned_at_rung,
                "winner": t.winner,
            }
            for t in result.trials
        ]
    else:
        if mspec.kind == "mlp":
            config = default_mlp_config(mspec, int(np.prod(x_tr.shape[1:])))
        else:
            config = default_rnn_config(mspec, x_tr.shape[-1])
        classifier = make_classifier(mspec.kind, config)
        params, report = train(
            classifier, (x_tr, y_tr), (x_va, y_va), epoch_cap=epoch_cap, seed=seed
        )
    probs = classifier.predict_proba(params, x_te)
    report.test_accuracy = accuracy_from_probs(probs, y_te)
    record = {
        "model": mspec.name,
        "variant": _variant_key(ds.spec),
        "dataset": meta["dataset"],
        "seed": seed,
        "budget": budget,
        "config": classifier.config.to_dict(),
        "val_accuracy": report.best_val_accuracy,
        "test_accuracy": report.test_accuracy,
        "wall_clock_seconds": time.perf_counter() - t0,
        "train_report": report.to_dict(),
        "generator_version": ds.generator_version,
    }
    return "neural", (classifier, params, meta), record


def accuracy_of_labels(predicted: np.ndarray, truth: np.ndarray) -> float:
    return float(100.0 * np.mean(predicted == truth))


def _save_trained(kind, artifacts, record, out_path: Path):
    out_path.parent.mkdir(parents=True, exist_ok=True)
    if kind == "svm":
        out_path.write_text(model_to_json(artifacts))
    else:
        classifier, params, meta = artifacts
        save_neural_model(out_path, classifier, params, meta)
    record = dict(record, qncd_version=__version__)
    report_path = out_path.with_name(out_path.name + ".report.json")
    report_path.write_text(json.dumps(record, indent=1))
    if "train_report" in record:
        from .neural.train import TrainReport

        csv_path = out_path.with_name(out_path.name + ".epochs.csv")
        csv_path.write_text(TrainReport.from_dict(record["train_report"]).epochs_csv())
    return report_path


def _load_model_any(path: Path):
    """Returns (kind, payload, meta) for either model file format."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == b"QNNM":
        classifier, params, meta = load_neural_model(path)
        return "neural", (classifier, params), meta
    model = model_from_json(Path(path).read_text())
    return "svm", model, model.training_meta


# ---------------------------------------------------------------- commands


def cmd_generate(args) -> int:
    spec = build_task_spec(
        task=args.task,
        t_total=args.t_total,
        master_seed=args.seed,
        steps=args.steps,
        nodes=args.nodes,
        edge_prob=args.edge_prob,
        n_samples=args.samples,
        stickiness=args.stickiness,
        shots=args.shots,
    )
    ds = generate(spec, workers=args.workers)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_qncd(ds, out)
    header = header_dict(ds)
    print(f"wrote {out} ({out.stat().st_size} bytes)")
    summary = {k: header[k] for k in ("task", "t_total", "steps", "nodes", "edge_prob", "n_samples", "master_seed")}
    print(json.dumps(summary))
    return EXIT_OK


def cmd_train(args) -> int:
    ds = read_qncd(args.data)
    kind, artifacts, record = _train_on_dataset(
        ds, args.model, seed=args.seed, budget=args.budget,
        epochs=args.epochs, subsample=args.subsample,
    )
    report_path = _save_trained(kind, artifacts, record, Path(args.out))
    print(
        f"{record['model']} on {record['variant']}: "
        f"validation {record['val_accuracy']:.1f}%, test {record['test_accuracy']:.1f}%"
    )
    print(f"model -> {args.out}\nreport -> {report_path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    kind, payload, meta = _load_model_any(Path(args.model))
    ds = read_qncd(args.data)
    parts = dict(zip(("train", "val", "test"), split(ds, DEFAULT_FRACTIONS)))
    if args.split not in parts:
        raise UsageError(f"unknown split {args.split!r}")
    part = parts[args.split]
    feature_mode = meta.get("feature_mode", "final")
    x, y = feature_view(part, feature_mode)

    stored = meta.get("train_pair_digest_b64")
    if stored:
        train_digests = _digests_from_b64(stored)
        eval_digests = _pair_digests(part)
        overlap = np.intersect1d(train_digests, eval_digests).size
        if overlap and args.split != "train":
            raise ValidationError(
                f"split leakage: {overlap} evaluation samples were in the model's training set"
            )

    if kind == "svm":
        gamma = accuracy_of_labels(predict_labels(payload, x.reshape(x.shape[0], -1)), y)
    else:
        classifier, params = payload
        gamma = accuracy_from_probs(classifier.predict_proba(params, x), y)
    tag = ""
    if args.split == "train":
        tag = "  (training split: optimistic, not a generalization estimate)"
    print(f"gamma[{args.split}] = {gamma:.1f}{tag}")
    record = {
        "model_path": str(args.model),
        "model": meta.get("model"),
        "data": str(args.data),
        "split": args.split,
        "gamma": gamma,
        "n": int(len(y)),
    }
    out = Path(args.model).with_name(Path(args.model).name + f".eval-{args.split}.json")
    out.write_text(json.dumps(record, indent=1))
    return EXIT_OK


def _cached_dataset(dirs, spec: TaskSpec, workers: int | None) -> Dataset:
    key = json.dumps(spec_header_dict(spec, ""), sort_keys=True)
    digest = hashlib.sha256(key.encode()).hexdigest()[:12]
    path = dirs["datasets"] / f"{spec.task}-t{spec.t_total:g}-M{spec.steps}-{digest}.qncd"
    if path.exists():
        log.info("reusing cached dataset %s", path)
        return read_qncd(path)
    ds = generate(spec, workers=workers)
    write_qncd(ds, path)
    log.info("generated %s", path)
    return ds


def cmd_sweep_m(args) -> int:
    dirs = _out_dirs(args.out_dir)
    m_values = []
    for raw in args.m_list.split(","):
        m = int(raw)
        if m in m_values:
            log.warning("duplicate M=%d ignored", m)
            continue
        m_values.append(m)
    if not m_values:
        raise UsageError("--m-list must name at least one step count")
    class0, class1 = build_processes(args.task, args.seed, args.stickiness)
    rows = []
    for m in m_values:
        spec = TaskSpec(
            task=args.task,
            t_total=args.t_total,
            steps=m,
            nodes=args.nodes,
            edge_prob=args.edge_prob,
            class0=class0,
            class1=class1,
            n_samples=args.samples,
            master_seed=derive_seed(args.seed, TAG_SWEEP, m),
        )
        ds = _cached_dataset(dirs, spec, args.workers)
        kind, artifacts, record = _train_on_dataset(
            ds, args.model, seed=derive_seed(args.seed, TAG_SWEEP, m, 1) % (2**32),
            budget=args.budget, epochs=args.epochs, subsample=args.subsample,
        )
        model_path = dirs["models"] / f"sweep-{args.task}-M{m}-{args.model.lower()}.model"
        _save_trained(kind, artifacts, record, model_path)
        rows.append((m, record["test_accuracy"]))
        print(f"M={m:4d}  gamma={record['test_accuracy']:.1f}")
    csv_path = dirs["reports"] / f"sweep-{args.task}-t{args.t_total:g}-{args.model.lower()}.csv"
    csv_path.write_text("M,gamma\n" + "\n".join(f"{m},{g:.2f}" for m, g in rows) + "\n")
    print(f"sweep table -> {csv_path}")
    return EXIT_OK


def cmd_scaling(args) -> int:
    plans = [
        ("delta-prime > delta", 15),
        ("delta-prime = delta", 30),
    ]
    specs = [
        build_task_spec(
            task="iid", t_total=2.0, master_seed=derive_seed(args.seed, TAG_SWEEP, 2, m),
            steps=m, n_samples=args.samples,
        )
        for _, m in plans
    ]
    if args.dry_run:
        for (label, m), spec in zip(plans, specs):
            print(f"{label}: task=iid t_total=2 steps={m} nodes={spec.nodes} "
                  f"samples={spec.n_samples} master_seed={spec.master_seed}")
        return EXIT_OK
    dirs = _out_dirs(args.out_dir)
    results = []
    for (label, m), spec in zip(plans, specs):
        ds = _cached_dataset(dirs, spec, args.workers)
        kind, artifacts, record = _train_on_dataset(
            ds, args.model, seed=args.seed, budget=args.budget,
            epochs=args.epochs, subsample=args.subsample,
        )
        model_path = dirs["models"] / f"scaling-M{m}-{args.model.lower()}.model"
        _save_trained(kind, artifacts, record, model_path)
        results.append((label, m, record["test_accuracy"]))
        print(f"{label} (M={m}): gamma={record['test_accuracy']:.1f}")
    out = dirs["reports"] / "scaling.csv"
    out.write_text("label,M,gamma\n" + "\n".join(f"{l},{m},{g:.2f}" for l, m, g in results) + "\n")
    print(f"scaling table -> {out}")
    return EXIT_OK


def cmd_report(args) -> int:
    dirs = _out_dirs(args.out_dir)
    cells: dict[tuple[str, str], tuple[float, float]] = {}
    for path in sorted(dirs["reports"].glob("**/*.report.json")) + sorted(
        dirs["models"].glob("**/*.report.json")
    ):
        try:
            record = json.loads(path.read_text())
        except json.JSONDecodeError:
            log.warning("skipping unreadable report %s", path)
            continue
        key = (record.get("model"), record.get("variant"))
        stamp = path.stat().st_mtime
        if key not in cells or stamp > cells[key][1]:
            cells[key] = (record.get("test_accuracy"), stamp)
    header = ["model"] + list(TASK_COLUMNS)
    lines = [",".join(header)]
    width = max(len(n) for n in MODEL_NAMES) + 2
    print("model".ljust(width) + "".join(c.rjust(9) for c in TASK_COLUMNS))
    for name in MODEL_NAMES:
        row = [name]
        shown = name.ljust(width)
        for col in TASK_COLUMNS:
            value = cells.get((name, col))
            if value is None or value[0] is None:
                row.append("")
                shown += "-".rjust(9)
            else:
                row.append(f"{value[0]:.1f}")
                shown += f"{value[0]:.1f}".rjust(9)
        lines.append(",".join(row))
        print(shown)
    csv_path = dirs["reports"] / "results_table.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    print(f"results table -> {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> _Parser:
    parser = _Parser(prog="qncd", description=__doc__)
    parser.add_argument("--version", action="version", version=f"qncd {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="synthesize a QNCD dataset")
    gen.add_argument("--task", required=True, choices=("iid", "nm", "vs"))
    gen.add_argument("--t-total", type=float, required=True, dest="t_total")
    gen.add_argument("--steps", type=int, default=15)
    gen.add_argument("--nodes", type=int, default=40)
    gen.add_argument("--edge-prob", type=float, default=DEFAULT_EDGE_PROB, dest="edge_prob")
    gen.add_argument("--samples", type=int, default=20_000)
    gen.add_argument("--seed", type=int, required=True)
    gen.add_argument("--out", required=True)
    gen.add_argument("--stickiness", type=float, default=DEFAULT_STICKINESS)
    gen.add_argument("--shots", type=int, default=None)
    gen.add_argument("--workers", type=int, default=None)
    gen.set_defaults(func=cmd_generate)

    tr = sub.add_parser("train", help="train a roster model on a dataset")
    tr.add_argument("--model", required=True, help=f"one of: {', '.join(MODEL_NAMES)}")
    tr.add_argument("--data", required=True)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", required=True)
    tr.add_argument("--budget", type=int, default=1)
    tr.add_argument("--epochs", type=int, default=None)
    tr.add_argument("--subsample", type=int, default=None)
    tr.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a persisted model on a dataset split")
    ev.add_argument("--model", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--split", default="test")
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep-m", help="accuracy versus number of steps M")
    sw.add_argument("--task", required=True, choices=("iid", "nm", "vs"))
    sw.add_argument("--t-total", type=float, required=True, dest="t_total")
    sw.add_argument("--m-list", required=True, dest="m_list")
    sw.add_argument("--model", default="m-biGRU-max")
    sw.add_argument("--seed", type=int, required=True)
    sw.add_argument("--samples", type=int, default=20_000)
    sw.add_argument("--nodes", type=int, default=40)
    sw.add_argument("--edge-prob", type=float, default=DEFAULT_EDGE_PROB, dest="edge_prob")
    sw.add_argument("--stickiness", type=float, default=DEFAULT_STICKINESS)
    sw.add_argument("--budget", type=int, default=1)
    sw.add_argument("--epochs", type=int, default=None)
    sw.add_argument("--subsample", type=int, default=None)
    sw.add_argument("--out-dir", default="qncd-out", dest="out_dir")
    sw.add_argument("--workers", type=int, default=None)
    sw.set_defaults(func=cmd_sweep_m)

    sc = sub.add_parser("scaling", help="total-time-2 experiment: M=15 vs M=30")
    sc.add_argument("--model", default="m-biGRU-max")
    sc.add_argument("--seed", type=int, default=20)
    sc.add_argument("--samples", type=int, default=20_000)
    sc.add_argument("--budget", type=int, default=1)
    sc.add_argument("--epochs", type=int, default=None)
    sc.add_argument("--subsample", type=int, default=None)
    sc.add_argument("--out-dir", default="qncd-out", dest="out_dir")
    sc.add_argument("--workers", type=int, default=None)
    sc.add_argument("--dry-run", action="store_true", dest="dry_run")
    sc.set_defaults(func=cmd_scaling)

    rp = sub.add_parser("report", help="aggregate train reports into the results grid")
    rp.add_argument("--out-dir", default="qncd-out", dest="out_dir")
    rp.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except QncdError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
