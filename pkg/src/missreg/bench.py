"""Experiment engine: datasets x methods x replications -> metric records.

Within one replication every method sees the same train/test split (seeded
by a stable hash of master seed, dataset id, and replication index), so
per-replication metrics are paired across methods.  Per-pipeline failures
become error records and the run continues.

Results CSV columns, in order:
    dataset, method, replication, mechanism, p_missing, k_missing, n_train,
    metric, value, seconds, note
"""

from __future__ import annotations

import csv
import hashlib
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .data import MaskedMatrix, TargetVector, read_csv
from .datagen import (SemiSynConfig, SyntheticConfig, adversarial_reassign,
                      generate, semisyn_signal)
from .impute import fit_chained
from .metrics import auc_norm, r2
from .pipelines import fit_pipeline, method_name

__all__ = ["ExperimentConfig", "ResultRecord", "run_experiment",
           "write_results_csv", "read_results_csv", "summarize", "plot_data",
           "stable_seed", "RESULT_FIELDS"]

RESULT_FIELDS = ("dataset", "method", "replication", "mechanism", "p_missing",
                 "k_missing", "n_train", "metric", "value", "seconds", "note")


@dataclass(frozen=True)
class ResultRecord:
    dataset: str
    method: str
    replication: int
    mechanism: str
    p_missing: float | None
    k_missing: int | None
    n_train: int
    metric: str
    value: float
    seconds: float
    note: str = ""

    def row(self):
        return [self.dataset, self.method, self.replication, self.mechanism,
                "" if self.p_missing is None else self.p_missing,
                "" if self.k_missing is None else self.k_missing,
                self.n_train, self.metric, self.value,
                round(self.seconds, 4), self.note]


@dataclass(frozen=True)
class ExperimentConfig:
    datasets: tuple          # dataset config dicts, each with an "id"
    methods: tuple           # method dicts (see pipelines)
    replications: int = 10
    seed: int = 0
    threads: int = 1

    @staticmethod
    def from_dict(doc: dict) -> "ExperimentConfig":
        datasets = doc["datasets"] if "datasets" in doc else [doc["data"]]
        return ExperimentConfig(
            datasets=tuple(dict(d) for d in datasets),
            methods=tuple(dict(m) for m in doc["methods"]),
            replications=int(doc.get("replications", 10)),
            seed=int(doc.get("seed", 0)),
            threads=int(doc.get("threads", 1)),
        )

    def to_dict(self) -> dict:
        return {"datasets": list(self.datasets), "methods": list(self.methods),
                "replications": self.replications, "seed": self.seed,
                "threads": self.threads}


def stable_seed(*parts) -> int:
    """Deterministic 63-bit seed from heterogeneous parts (not Python's
    session-randomized hash)."""
    h = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(h[:8], "big") >> 1


@dataclass
class _Split:
    train: MaskedMatrix
    train_y: TargetVector
    test: MaskedMatrix
    test_y: TargetVector
    x_full_train: np.ndarray | None = None
    x_full_test: np.ndarray | None = None
    mechanism: str = ""
    p_missing: float | None = None
    k_missing: int | None = None


def _dataset_split(ds_cfg: dict, rep_seed: int) -> _Split:
    kind = ds_cfg.get("kind", "synthetic")
    if kind == "synthetic":
        params = {k: v for k, v in ds_cfg.items() if k not in ("kind", "id")}
        cfg = SyntheticConfig(**params, seed=rep_seed) \
            if "seed" not in params else SyntheticConfig(**params)
        data = generate(cfg)
        return _Split(train=data.train[0], train_y=data.train[1],
                      test=data.test[0], test_y=data.test[1],
                      x_full_train=data.x_full_train,
                      x_full_test=data.x_full_test,
                      mechanism=cfg.mechanism, p_missing=cfg.p_missing)
    if kind == "csv":
        mm, tv = read_csv(ds_cfg["path"], na_token=ds_cfg.get("na_token", "NA"),
                          target=ds_cfg["target"], kinds=ds_cfg.get(
                              "column_kinds"))
        return _holdout_split(mm, tv, ds_cfg.get("test_fraction", 0.3), rep_seed,
                              mechanism="real")
    if kind == "semisyn":
        return _semisyn_split(ds_cfg, rep_seed)
    raise ValueError(f"unknown dataset kind {kind!r}")


def _holdout_split(mm: MaskedMatrix, tv: TargetVector, test_fraction: float,
                   seed: int, mechanism: str, x_full=None,
                   p_missing=None, k_missing=None) -> _Split:
    n = mm.n_rows
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    te, tr = perm[:n_test], perm[n_test:]
    return _Split(
        train=mm.take_rows(tr), train_y=tv.take(tr),
        test=mm.take_rows(te), test_y=tv.take(te),
        x_full_train=None if x_full is None else x_full[tr],
        x_full_test=None if x_full is None else x_full[te],
        mechanism=mechanism, p_missing=p_missing, k_missing=k_missing,
    )


def _semisyn_split(ds_cfg: dict, rep_seed: int) -> _Split:
    """Real (or supplied) design matrix and mask, synthetic signal.

    The matrix is completed by the chained-equations imputer, a synthetic
    signal is drawn on top (MAR, NMAR, or MAR plus adversarial mask
    reassignment), then rows are split."""
    mm, _ = read_csv(ds_cfg["path"], na_token=ds_cfg.get("na_token", "NA"))
    cfg = SemiSynConfig(
        k_missing=int(ds_cfg.get("k_missing", 0)),
        mechanism=ds_cfg.get("mechanism", "mar"),
        signal_kind=ds_cfg.get("signal_kind", "linear"),
        snr=float(ds_cfg.get("snr", 2.0)),
        seed=rep_seed,
    )
    completer = fit_chained(mm, n_sweeps=int(ds_cfg.get("n_sweeps", 5)))
    x_full = completer.transform_train().values
    y, _model = semisyn_signal(x_full, mm.mask, cfg)
    mask = mm.mask
    note_mech = cfg.mechanism
    if cfg.mechanism == "am":
        res = adversarial_reassign(x_full, mm.mask, y)
        mask, y = res.mask, res.y
    masked = MaskedMatrix(np.where(mask, np.nan, x_full), mask,
                          mm.column_kinds, mm.column_names)
    return _holdout_split(masked, y, ds_cfg.get("test_fraction", 0.3),
                          stable_seed(rep_seed, "split"), mechanism=note_mech,
                          x_full=x_full, k_missing=cfg.k_missing)


def _score(split: _Split, pred: np.ndarray) -> tuple[str, float]:
    if split.test_y.task == "binary":
        return "auc_norm", auc_norm(split.test_y.y, pred)
    return "r2", r2(split.test_y.y, pred)


def _run_one(config: ExperimentConfig, ds_index: int, rep: int,
             m_index: int) -> ResultRecord:
    ds_cfg = config.datasets[ds_index]
    method = config.methods[m_index]
    ds_id = ds_cfg.get("id", f"dataset{ds_index}")
    name = method_name(method)
    data_seed = stable_seed(config.seed, ds_id, rep)
    split = _dataset_split(ds_cfg, data_seed)
    fit_seed = stable_seed(config.seed, ds_id, name, rep)
    t0 = time.perf_counter()
    try:
        fp = fit_pipeline(method, split.train, split.train_y, seed=fit_seed,
                          x_full_train=split.x_full_train)
        pred = fp.predict(split.test, x_full_test=split.x_full_test)
        metric, value = _score(split, pred)
        note = ""
    except Exception as exc:  # noqa: BLE001 - recorded, run continues
        metric, value, note = "error", float("nan"), f"{type(exc).__name__}: {exc}"
    seconds = time.perf_counter() - t0
    return ResultRecord(dataset=ds_id, method=name, replication=rep,
                        mechanism=split.mechanism, p_missing=split.p_missing,
                        k_missing=split.k_missing, n_train=split.train.n_rows,
                        metric=metric, value=value, seconds=seconds, note=note)


def _run_one_star(args):
    return _run_one(*args)


def run_experiment(config: ExperimentConfig, progress=None) -> list[ResultRecord]:
    tasks = [(config, di, rep, mi)
             for di in range(len(config.datasets))
             for rep in range(config.replications)
             for mi in range(len(config.methods))]
    records: list[ResultRecord] = []
    if config.threads > 1:
        with ProcessPoolExecutor(max_workers=config.threads) as pool:
            for rec in pool.map(_run_one_star, tasks, chunksize=1):
                records.append(rec)
                if progress:
                    progress(rec)
    else:
        for t in tasks:
            rec = _run_one_star(t)
            records.append(rec)
            if progress:
                progress(rec)
    records.sort(key=lambda r: (r.dataset, r.method, r.replication, r.metric))
    return records


def write_results_csv(path, records) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(RESULT_FIELDS)
        for r in records:
            w.writerow(r.row())


def read_results_csv(path) -> list[ResultRecord]:
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        rd = csv.DictReader(fh)
        for row in rd:
            out.append(ResultRecord(
                dataset=row["dataset"], method=row["method"],
                replication=int(row["replication"]), mechanism=row["mechanism"],
                p_missing=float(row["p_missing"]) if row["p_missing"] else None,
                k_missing=int(row["k_missing"]) if row["k_missing"] else None,
                n_train=int(row["n_train"]), metric=row["metric"],
                value=float(row["value"]), seconds=float(row["seconds"]),
                note=row.get("note", ""),
            ))
    return out


def summarize(records) -> dict:
    """Group means and standard errors, recomputable from the raw records."""
    groups: dict = {}
    for r in records:
        if r.metric == "error":
            groups.setdefault((r.dataset, r.method, "error"), []).append(1.0)
            continue
        groups.setdefault((r.dataset, r.method, r.metric), []).append(r.value)
    out = {}
    for (ds, m, metric), vals in sorted(groups.items()):
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0
        out[f"{ds}|{m}|{metric}"] = {
            "dataset": ds, "method": m, "metric": metric,
            "mean": float(v.mean()), "se": se, "n": len(v),
        }
    return out


def plot_data(records) -> list[dict]:
    """Figure-ready long format: one row per (dataset, method, mechanism,
    sweep point) with mean metric and standard error."""
    groups: dict = {}
    for r in records:
        if r.metric == "error":
            continue
        key = (r.dataset, r.method, r.mechanism, r.n_train,
               r.p_missing, r.k_missing, r.metric)
        groups.setdefault(key, []).append(r.value)
    rows = []
    for key, vals in sorted(groups.items(), key=lambda kv: str(kv[0])):
        ds, m, mech, n_train, p, k, metric = key
        v = np.asarray(vals)
        rows.append({
            "dataset": ds, "method": m, "mechanism": mech,
            "n_train": n_train,
            "p_missing": "" if p is None else p,
            "k_missing": "" if k is None else k,
            "metric": metric, "mean": float(v.mean()),
            "se": float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else 0.0,
            "replications": len(v),
        })
    return rows
