"""Command-line front end.

Exit codes: 0 success, 1 error, 2 search finished best-effort (gamma not met).
``AXBXP_THREADS`` caps the thread pools of the numerical backend.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK, EXIT_ERROR, EXIT_BEST_EFFORT = 0, 1, 2
_THREAD_VARS = ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS")


def _apply_thread_cap() -> None:
    n = os.environ.get("AXBXP_THREADS")
    if n:
        for var in _THREAD_VARS:
            os.environ[var] = n


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _csv(rows: list[dict]) -> str:
    import csv
    import io

    buf = io.StringIO()
    if rows:
        w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    return buf.getvalue()


def _config_from(args, require_pruned: bool = True):
    from .config import AxBxPConfig

    cfg = AxBxPConfig(args.k, args.ntw, args.nta, args.mode)
    if require_pruned:
        cfg.require_pruned()
    return cfg


def _load_tensor(path: str):
    import numpy as np

    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"input tensor {path} not found")
    if p.suffix == ".npy":
        return np.load(p)
    return np.loadtxt(p, delimiter=",", dtype=np.int64, ndmin=1)


def _save_tensor(arr, path: str) -> None:
    import numpy as np

    if path.endswith(".npy"):
        np.save(path, arr)
    else:
        np.savetxt(path, arr.reshape(arr.shape[0], -1) if arr.ndim > 1 else arr,
                   fmt="%d", delimiter=",")


def _dataset(args):
    from .engine.data import Dataset, load_digits, read_csv_pair

    if getattr(args, "images", None):
        x, y = read_csv_pair(args.images, args.labels)
        return Dataset(x, y, x, y)
    return load_digits()


# ------------------------------------------------------------------ subcommands


def cmd_enumerate(args) -> int:
    from .design_space import enumerate_pruned, size_constrained, size_pruned_subsets

    space = enumerate_pruned(args.k, args.mode)
    rows = [{"K": c.K, "n_tilde_w": c.n_tilde_w, "n_tilde_a": c.n_tilde_a, "L": c.L, "N": c.N}
            for c in space]
    counts = {"constrained": size_constrained(), "pruned_subsets": size_pruned_subsets(),
              "table": len(rows)}
    if args.format == "json":
        doc = {"configs": rows}
        if args.counts:
            doc["counts"] = counts
        _emit(json.dumps(doc, indent=2) + "\n", args.out)
    else:
        text = _csv(rows)
        if args.counts:
            text += "\n" + _csv([counts])
        _emit(text, args.out)
    return EXIT_OK


def cmd_convert(args) -> int:
    from .config import Mode
    from .tensor import convert, element_bits, footprint_bits, serialize

    src = _load_tensor(args.input)
    t = convert(src, args.k, args.nt, Mode(args.mode), scale=args.scale)
    data = serialize(t)
    Path(args.out).write_bytes(data)
    summary = {
        "elements": t.size, "K": t.K, "N": t.N, "n_tilde": t.n_tilde, "mode": t.mode.value,
        "bits_per_element": element_bits(t.K, t.n_tilde, t.mode),
        "payload_bits": footprint_bits(t.K, t.n_tilde, t.mode, t.size, include_header=False),
        "total_bytes": len(data),
    }
    if args.format == "json":
        print(json.dumps(summary))
    else:
        sys.stdout.write(_csv([summary]))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    from .tensor import deserialize, reconstruct

    p = Path(args.input)
    if not p.exists():
        raise FileNotFoundError(f"input {args.input} not found")
    _save_tensor(reconstruct(deserialize(p.read_bytes())), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    from .engine import float_accuracy, quantize_model, save_model, train_tiny

    ds = _dataset(args)
    fm = train_tiny(ds, epochs=args.epochs, seed=args.seed, arch=args.arch)
    qm = quantize_model(fm, ds.train_x)
    save_model(qm, args.out)
    print(json.dumps({"train_accuracy": float_accuracy(fm, ds.train_x, ds.train_y),
                      "test_accuracy": float_accuracy(fm, ds.test_x, ds.test_y),
                      "checkpoint": str(args.out)}))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    from .engine import accuracy, assign_all, load_model

    model = load_model(args.model)
    ds = _dataset(args)
    if args.ntw is not None:
        model = assign_all(model, _config_from(args), pin_first_last=not args.no_pin)
    print(json.dumps({"exact_accuracy": accuracy(model, ds.test_x, ds.test_y, approx=False),
                      "axbxp_accuracy": accuracy(model, ds.test_x, ds.test_y)}))
    return EXIT_OK


def cmd_search(args) -> int:
    from .engine import load_model, save_model
    from .search import SearchSettings, design_axbxp_dnn

    settings = SearchSettings(gamma=args.gamma, k_tgt=args.k, eval_subset=args.eval_subset,
                              max_epoch=args.max_epoch, seed=args.seed, mode=args.mode,
                              pin_first_last=not args.no_pin,
                              retrain_candidates=args.retrain_candidates)
    model = load_model(args.model)
    report = design_axbxp_dnn(model, _dataset(args), settings)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    if args.save_model:
        save_model(report.model, args.save_model)
    return EXIT_BEST_EFFORT if report.best_effort else EXIT_OK


def _report_tables(args) -> dict[str, list[dict]]:
    from .analysis import block_histogram, collect_activations, error_analysis
    from .blocked import num_blocks
    from .config import AxBxPConfig, Mode
    from .engine import assign_all, load_model
    from .perf import cost_report, throughput_table

    model = load_model(args.model)
    if args.assignment:
        doc = json.loads(Path(args.assignment).read_text())
        model = model.with_configs({l["layer_index"]: AxBxPConfig.from_dict(l["config"])
                                    for l in doc["layers"]})
    elif args.ntw is not None:
        model = assign_all(model, _config_from(args), pin_first_last=not args.no_pin)
    for c in model.configs().values():
        if c is not None:
            c.require_pruned()
    tables: dict[str, list[dict]] = {"mae": [], "blocks": [], "cost": [], "throughput": []}
    if not model.layers:
        return tables
    ds = _dataset(args)
    x = ds.test_x[: args.eval_subset]
    acts = collect_activations(model, x)
    K = args.k
    for i in model.weighted_indices():
        for role, vals in (("weight", model.layers[i].weight.values), ("act", acts[i])):
            for nt in range(1, num_blocks(K) + 1):
                res = error_analysis(vals, K, nt)
                tables["mae"].append({"layer": i, "tensor": role, "K": K, "n_tilde": nt,
                                      "static_mae": res[Mode.STATIC.value].mae,
                                      "dynamic_mae": res[Mode.DYNAMIC.value].mae})
            bh = block_histogram(vals, K)
            tables["blocks"].append({"layer": i, "tensor": role, "K": K,
                                     **{f"block{b}": c for b, c in enumerate(bh.nonzero_counts)}})
    cost = cost_report(model, K=K, area_ratio=args.area_ratio)
    tables["cost"] = [dict(vars(l)) for l in cost.layers]
    tables["throughput"] = throughput_table(K, Mode(args.mode))
    return tables


def cmd_report(args) -> int:
    tables = _report_tables(args)
    if args.format == "json":
        _emit(json.dumps(tables, indent=2) + "\n", args.out)
    elif args.out:
        root = Path(args.out)
        root.mkdir(parents=True, exist_ok=True)
        for name, rows in tables.items():
            (root / f"{name}.csv").write_text(_csv(rows))
    else:
        sys.stdout.write(_csv(tables[args.table]))
    return EXIT_OK


# ----------------------------------------------------------------------- parser


def _k(value: str) -> int:
    k = int(value)
    if k not in (2, 3, 4):
        raise argparse.ArgumentTypeError(f"K must be 2, 3 or 4 (got {k})")
    return k


class _Parser(argparse.ArgumentParser):
    # usage errors exit 1; exit code 2 is reserved for best-effort searches
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="axbxp", description="Approximate blocked fixed-point toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, k_default=2, k_required=False):
        sp.add_argument("--k", type=_k, default=None if k_required else k_default,
                        required=k_required)
        sp.add_argument("--mode", choices=["static", "dynamic"], default="dynamic")
        sp.add_argument("--format", choices=["json", "csv"], default="json")
        sp.add_argument("--out")
        sp.add_argument("--seed", type=int, default=0)

    def model_flags(sp):
        sp.add_argument("--model", required=True, help="checkpoint directory or manifest")
        sp.add_argument("--images", help="CSV of input features (overrides bundled digits)")
        sp.add_argument("--labels", help="CSV of labels, used with --images")
        sp.add_argument("--eval-subset", type=int, default=None)
        sp.add_argument("--no-pin", action="store_true",
                        help="also approximate the first and last weighted layers")

    sp = sub.add_parser("enumerate", help="list the pruned design space")
    common(sp, k_default=None)
    sp.add_argument("--counts", action="store_true")
    sp.set_defaults(func=cmd_enumerate)

    sp = sub.add_parser("convert", help="convert an FxP8 tensor to AXBP v1")
    common(sp, k_required=True)
    sp.add_argument("--input", required=True)
    sp.add_argument("--nt", type=int, required=True)
    sp.add_argument("--scale", type=float, default=1.0)
    sp.set_defaults(func=cmd_convert)

    sp = sub.add_parser("reconstruct", help="decode an AXBP v1 file to integers")
    sp.add_argument("--input", required=True)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("train", help="train and quantize the tiny digits model")
    sp.add_argument("--arch", choices=["mlp", "cnn"], default="mlp")
    sp.add_argument("--epochs", type=int, default=30)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--images")
    sp.add_argument("--labels")
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="exact vs Ax-BxP accuracy of a checkpoint")
    common(sp)
    model_flags(sp)
    sp.add_argument("--ntw", type=int)
    sp.add_argument("--nta", type=int)
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("search", help="greedy per-layer configuration search")
    common(sp)
    model_flags(sp)
    sp.add_argument("--gamma", type=float, default=1.0)
    sp.add_argument("--max-epoch", type=int, default=0)
    sp.add_argument("--retrain-candidates", action="store_true")
    sp.add_argument("--save-model")
    sp.set_defaults(func=cmd_search)

    sp = sub.add_parser("report", help="histograms, truncation error and cost model")
    common(sp)
    model_flags(sp)
    sp.add_argument("--ntw", type=int)
    sp.add_argument("--nta", type=int)
    sp.add_argument("--assignment", help="search report JSON whose configs are applied")
    sp.add_argument("--area-ratio", type=float, default=1.0)
    sp.add_argument("--table", choices=["mae", "blocks", "cost", "throughput"], default="mae")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if hasattr(args, "ntw") and (args.ntw is None) != (getattr(args, "nta", None) is None):
            parser.error("--ntw and --nta must be given together")
        if getattr(args, "images", None) and not getattr(args, "labels", None):
            parser.error("--images requires --labels")
    except SystemExit as exc:  # usage error or --help
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    from .errors import AxBxPError

    try:
        return args.func(args)
    except (AxBxPError, FileNotFoundError) as exc:
        print(f"axbxp: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
