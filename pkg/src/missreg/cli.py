"""Command-line interface.

Subcommands: generate (synthetic train/test CSVs plus manifest), train (fit
one pipeline, emit a model JSON), predict (model JSON + CSV -> predictions
CSV), benchmark (experiment config -> results.csv / summary.json /
manifest.json), verify-theory (oracle pass/fail table), plot-data (aggregate
results into a figure-ready long CSV).

Exit codes: 0 success, 1 usage error, 2 runtime failure (including failed
theory checks).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

from . import __version__
from .bench import (ExperimentConfig, plot_data, read_results_csv,
                    run_experiment, summarize, write_results_csv)
from .data import read_csv, write_csv
from .datagen import SyntheticConfig, generate
from .pipelines import (fit_pipeline, method_name, pipeline_from_dict,
                        pipeline_to_dict)
from .verify import run_checks


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        sys.exit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="missreg",
                description="Prediction with missing data: adaptive linear "
                            "models, joint impute-then-regress, baselines, "
                            "and a benchmark harness.")
    p.add_argument("--version", action="version", version=f"missreg {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="write synthetic train/test CSVs")
    g.add_argument("--config", help="JSON file with SyntheticConfig fields")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--d", type=int, default=10)
    g.add_argument("--r", type=int, default=None,
                   help="covariance rank (default min(5, d))")
    g.add_argument("--k", type=int, default=None,
                   help="signal support size (default min(5, d))")
    g.add_argument("--n-train", type=int, default=1000)
    g.add_argument("--n-test", type=int, default=5000)
    g.add_argument("--p-missing", type=float, default=0.3)
    g.add_argument("--mechanism", choices=("mcar", "censoring"), default="mcar")
    g.add_argument("--signal", choices=("linear", "nn"), default="linear")
    g.add_argument("--snr", type=float, default=2.0)
    g.add_argument("--na-token", default="NA")

    t = sub.add_parser("train", help="fit one pipeline and emit a model JSON")
    t.add_argument("--data", required=True, help="training CSV")
    t.add_argument("--target", required=True, help="target column name")
    t.add_argument("--method", required=True,
                   help="method JSON (inline or a file path)")
    t.add_argument("--out", required=True, help="model JSON path")
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--na-token", default="NA")

    pr = sub.add_parser("predict", help="apply a model JSON to a CSV")
    pr.add_argument("--model", required=True)
    pr.add_argument("--data", required=True)
    pr.add_argument("--out", required=True, help="predictions CSV path")
    pr.add_argument("--target", default=None,
                    help="label column to drop if present in the CSV")
    pr.add_argument("--na-token", default="NA")

    b = sub.add_parser("benchmark", help="run an experiment config")
    b.add_argument("--config", required=True, help="experiment JSON file")
    b.add_argument("--out", required=True, help="output directory")
    b.add_argument("--seed", type=int, default=None, help="override config seed")
    b.add_argument("--threads", type=int, default=None)
    b.add_argument("--quiet", action="store_true")

    v = sub.add_parser("verify-theory", help="run the theory oracle checks")
    v.add_argument("--random-joints", type=int, default=200)
    v.add_argument("--corollary-joints", type=int, default=100)

    pl = sub.add_parser("plot-data", help="aggregate results for plotting")
    pl.add_argument("--results", required=True, help="results.csv path")
    pl.add_argument("--out", required=True, help="aggregated CSV path")
    return p


def _cmd_generate(args) -> int:
    fields = {}
    if args.config:
        with open(args.config, encoding="utf-8") as fh:
            fields = json.load(fh)
    else:
        fields = {"d": args.d, "n_train": args.n_train, "n_test": args.n_test,
                  "p_missing": args.p_missing, "mechanism": args.mechanism,
                  "signal_kind": args.signal, "snr": args.snr,
                  "r": min(5, args.d) if args.r is None else args.r,
                  "k": min(5, args.d) if args.k is None else args.k}
    if args.seed is not None:
        fields["seed"] = args.seed
    cfg = SyntheticConfig(**fields)
    data = generate(cfg)
    os.makedirs(args.out, exist_ok=True)
    write_csv(os.path.join(args.out, "train.csv"), data.train[0],
              target=data.train[1], na_token=args.na_token)
    write_csv(os.path.join(args.out, "test.csv"), data.test[0],
              target=data.test[1], na_token=args.na_token)
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(data.manifest(), fh, indent=2)
    print(f"wrote train.csv ({cfg.n_train} rows), test.csv ({cfg.n_test} rows), "
          f"manifest.json to {args.out}")
    return 0


def _load_method(spec: str) -> dict:
    if os.path.exists(spec):
        with open(spec, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(spec)


def _cmd_train(args) -> int:
    method = _load_method(args.method)
    mm, tv = read_csv(args.data, na_token=args.na_token, target=args.target)
    if tv is None:
        raise ValueError("training data must include the target column")
    fp = fit_pipeline(method, mm, tv, seed=args.seed)
    doc = pipeline_to_dict(fp)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
    print(f"trained {method_name(method)} on {mm.n_rows} rows -> {args.out}")
    return 0


def _cmd_predict(args) -> int:
    with open(args.model, encoding="utf-8") as fh:
        fp = pipeline_from_dict(json.load(fh))
    mm, _ = read_csv(args.data, na_token=args.na_token, target=args.target)
    pred = fp.predict(mm)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["prediction"])
        for v in pred:
            w.writerow([repr(float(v))])
    print(f"wrote {len(pred)} predictions to {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.threads is not None:
        doc["threads"] = args.threads
    config = ExperimentConfig.from_dict(doc)
    os.makedirs(args.out, exist_ok=True)

    progress = None
    if not args.quiet:
        def progress(rec):
            print(f"  {rec.dataset} {rec.method} rep={rec.replication} "
                  f"{rec.metric}={rec.value:.4f} ({rec.seconds:.1f}s)"
                  + (f" [{rec.note}]" if rec.note else ""))

    records = run_experiment(config, progress=progress)
    write_results_csv(os.path.join(args.out, "results.csv"), records)
    with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
        json.dump(summarize(records), fh, indent=2)
    with open(os.path.join(args.out, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump({"missreg": __version__, "config": config.to_dict()}, fh, indent=2)
    n_err = sum(1 for r in records if r.metric == "error")
    print(f"{len(records)} records ({n_err} errors) -> {args.out}")
    return 0


def _cmd_verify_theory(args) -> int:
    checks = run_checks(n_random=args.random_joints,
                        n_corollary=args.corollary_joints)
    width = max(len(name) for name, _, _ in checks)
    ok_all = True
    for name, ok, detail in checks:
        ok_all &= ok
        print(f"{name:<{width}}  {'PASS' if ok else 'FAIL'}  {detail}")
    return 0 if ok_all else 2


def _cmd_plot_data(args) -> int:
    records = read_results_csv(args.results)
    rows = plot_data(records)
    fields = ["dataset", "method", "mechanism", "n_train", "p_missing",
              "k_missing", "metric", "mean", "se", "replications"]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=fields)
        w.writeheader()
        w.writerows(rows)
    print(f"wrote {len(rows)} aggregated rows to {args.out}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "train": _cmd_train,
    "predict": _cmd_predict,
    "benchmark": _cmd_benchmark,
    "verify-theory": _cmd_verify_theory,
    "plot-data": _cmd_plot_data,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except BrokenPipeError:
        return 0
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        sys.stderr.write(f"missreg: {type(exc).__name__}: {exc}\n")
        return 2


if __name__ == "__main__":
    sys.exit(main())
