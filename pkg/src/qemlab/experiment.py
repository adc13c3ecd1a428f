"""Experiment orchestration: datasets, training, baselines, metrics and structure analysis."""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import jsonschema
import numpy as np

from . import accumulation
from .analysis import curve_correlation, entropy_curve, spearman_matrix, sum_pool
from .baselines.cdr import cdr_mitigate
from .baselines.overhead import OverheadLedger, ml_ledger, noisy_ledger
from .baselines.pec import PEC_TOTAL_SHOTS, calibrate_circuit, pec_mitigate
from .baselines.zne import zne_mitigate
from .dataset import (
    DatasetConfig,
    DatasetError,
    SequenceRecord,
    config_hash,
    dataset_header,
    generate_records,
    read_dataset,
    record_circuits,
    to_batches,
    write_dataset,
)
from .metrics import MetricReport, fit_rate, score_sequences, theta_estimate
from .nn.models import KINDS, SurrogateModel, task_features
from .nn.training import TrainingConfig, group_by_length, train
from .noise import DecoherenceSpec
from .simulator import exact_executor, shot_executor

log = logging.getLogger(__name__)

BASELINES = ("ZNE", "PEC", "CDR")
MODELS = ("Noisy",) + KINDS + BASELINES

CONFIG_SCHEMA = {
    "type": "object",
    "required": ["task", "noise_levels", "models", "seed"],
    "additionalProperties": False,
    "properties": {
        "task": {"enum": ["trotter", "ghz"]},
        "n": {"type": "integer", "minimum": 2, "maximum": 6},
        "max_length": {"type": "integer", "minimum": 1, "maximum": 20},
        "noise_levels": {"type": "array", "minItems": 1, "items": {"type": "number", "exclusiveMinimum": 0}},
        "models": {"type": "array", "minItems": 1, "items": {"enum": list(MODELS)}},
        "seed": {"type": "integer", "minimum": 0},
        "train_size": {"type": "integer", "minimum": 1},
        "test_size": {"type": "integer", "minimum": 1},
        "p_r": {"type": "number", "minimum": 0, "maximum": 1},
        "shots": {"type": "integer", "minimum": 1},
        "p_scale": {"type": "number", "exclusiveMinimum": 0},
        "hidden": {"type": "integer", "minimum": 1},
        "bucket_width": {"type": "integer", "minimum": 1},
        "baseline_limit": {"type": ["integer", "null"], "minimum": 1},
        "baseline_mode": {"enum": ["sampled", "exact"]},
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "optimizer": {"enum": ["adam", "sgd"]},
            },
        },
    },
}

DEFAULTS = {
    "n": 4,
    "max_length": 10,
    "train_size": 100,
    "test_size": 200,
    "p_r": 0.25,
    "shots": 8192,
    "p_scale": 1.0,
    "hidden": 32,
    "bucket_width": 5,
    "baseline_limit": None,
    "baseline_mode": "sampled",
    "training": {},
}
TRAINING_DEFAULTS = {"learning_rate": 1e-3, "epochs": 100, "batch_size": 16, "optimizer": "adam"}


class ConfigError(ValueError):
    pass


def load_config(source) -> dict:
    """Validate a config (dict or JSON path) and fill defaults."""
    if not isinstance(source, dict):
        try:
            with open(source) as fh:
                source = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
    try:
        jsonschema.validate(source, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise ConfigError(exc.message) from exc
    cfg = {**DEFAULTS, **source}
    cfg["training"] = {**TRAINING_DEFAULTS, **source.get("training", {})}
    if cfg["task"] == "ghz":
        cfg["n"] = cfg["max_length"]
        if cfg["max_length"] > 6:
            raise ConfigError("the ghz task is capped at 6 qubits")
    return cfg


def noise_spec(t1: float) -> DecoherenceSpec:
    return DecoherenceSpec.scaled(t1)


def _level_tag(t1: float) -> str:
    return f"{t1:g}".replace(".", "p")


# -- datasets -------------------------------------------------------------------


def dataset_configs(cfg: dict) -> dict[str, DatasetConfig]:
    common = dict(task=cfg["task"], n=cfg["n"], p_r=cfg["p_r"], max_length=cfg["max_length"], shots=cfg["shots"])
    return {
        "train": DatasetConfig(size=cfg["train_size"], split="train", **common),
        "test": DatasetConfig(size=cfg["test_size"], split="test", **common),
    }


def ensure_dataset(path: Path, dcfg: DatasetConfig, spec: DecoherenceSpec, seed: int) -> list[SequenceRecord]:
    header = dataset_header(dcfg, spec, seed)
    if path.exists():
        try:
            stored, records = read_dataset(path)
            if stored.get("config_hash") == header["config_hash"]:
                return records
        except (DatasetError, json.JSONDecodeError, TypeError, ValueError):
            pass
        log.info("regenerating %s", path)
    records = generate_records(dcfg, spec, seed)
    write_dataset(path, header, records)
    return records


# -- per-model predictions ----------------------------------------------------------


def model_seed(cfg: dict, kind: str) -> int:
    return int(cfg["seed"]) * 1000 + KINDS.index(kind) if kind in KINDS else int(cfg["seed"])


def fit_surrogate(kind: str, train_records, spec, cfg: dict, p_scale: float = 1.0, seed: Optional[int] = None):
    seed = model_seed(cfg, kind) if seed is None else seed
    model = SurrogateModel(kind, task_features(), hidden=cfg["hidden"], max_len=cfg["max_length"], seed=seed)
    tcfg = TrainingConfig(seed=seed, **cfg["training"])
    curve = train(model, to_batches(train_records, spec, p_scale), tcfg)
    return model, curve


def predict_records(model: SurrogateModel, records, spec, p_scale: float = 1.0) -> list[list[float]]:
    batches = to_batches(records, spec, p_scale)
    out: list = [None] * len(batches)
    by_len: dict[int, list[int]] = {}
    for i, b in enumerate(batches):
        by_len.setdefault(b.length, []).append(i)
    for idx in by_len.values():
        merged = group_by_length([batches[i] for i in idx])[0]
        for i, row in zip(idx, model.predict(merged)):
            out[i] = row.tolist()
    return out


def apply_baseline(name: str, record: SequenceRecord, spec: DecoherenceSpec, rng, shots: int, mode: str):
    """Run one baseline on the circuit(s) behind a record; returns (sequence, ledger)."""
    circuits, how = record_circuits(record, spec)

    def run(circuit):
        if name == "ZNE":
            executor = exact_executor("noisy") if mode == "exact" else None
            return zne_mitigate(circuit, shots=shots, rng=rng, executor=executor)
        if name == "PEC":
            models = calibrate_circuit(circuit, "exact" if mode == "exact" else "sampled", shots=shots, rng=rng)
            return pec_mitigate(circuit, models, mode, rng=rng, total_shots=PEC_TOTAL_SHOTS * shots // 8192)
        if name == "CDR":
            noisy_exec = exact_executor("noisy") if mode == "exact" else shot_executor(shots, rng)
            return cdr_mitigate(circuit, rng=rng, shots=shots, noisy_executor=noisy_exec, on_degenerate="noisy")
        raise ValueError(f"unknown baseline {name!r}")

    if how == "prefix":
        values, ledger = run(circuits[0])
        return [float(v) for v in values], ledger
    values, ledger = [], None
    for c in circuits:
        seq, ledger = run(c)
        values.append(float(seq[-1]))
    return values, ledger


def _cell_path(out: Path, model: str, t1: float) -> Path:
    return out / "cells" / f"{model}_{_level_tag(t1)}.json"


def run_cell(model: str, cfg: dict, t1: float, train_records, test_records, out: Path) -> dict:
    """Predictions for one (model, noise level) cell, reusing a finished cell on disk."""
    path = _cell_path(out, model, t1)
    key = config_hash({"cfg": cfg, "model": model, "t1": t1})
    if path.exists():
        with open(path) as fh:
            cell = json.load(fh)
        if cell.get("key") == key:
            return cell
    spec = noise_spec(t1)
    cell = {"key": key, "model": model, "t1": t1}
    if model == "Noisy":
        cell["predictions"] = [r.noisy for r in test_records]
        cell["indices"] = list(range(len(test_records)))
        cell["ledger"] = noisy_ledger().to_json()
    elif model in KINDS:
        surrogate, curve = fit_surrogate(model, train_records, spec, cfg, cfg["p_scale"])
        ckpt = out / "checkpoints" / f"{model}_{_level_tag(t1)}.json"
        ckpt.parent.mkdir(parents=True, exist_ok=True)
        surrogate.save(ckpt)
        cell["predictions"] = predict_records(surrogate, test_records, spec, cfg["p_scale"])
        cell["indices"] = list(range(len(test_records)))
        cell["loss_curve"] = curve
        cell["checkpoint"] = str(ckpt)
        cell["ledger"] = ml_ledger(cfg["shots"]).to_json()
    else:
        limit = cfg["baseline_limit"] or len(test_records)
        rng = np.random.default_rng([cfg["seed"], MODELS.index(model)])
        preds, ledger = [], None
        for rec in test_records[:limit]:
            seq, ledger = apply_baseline(model, rec, spec, rng, cfg["shots"], cfg["baseline_mode"])
            preds.append(seq)
        cell["predictions"] = preds
        cell["indices"] = list(range(len(preds)))
        cell["ledger"] = ledger.to_json()
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(cell, fh)
    return cell


# -- scoring ------------------------------------------------------------------------------


def depth_buckets(max_length: int, width: int) -> list[tuple[str, int, int]]:
    out = [(f"{lo}-{min(lo + width - 1, max_length)}", lo, min(lo + width - 1, max_length)) for lo in range(1, max_length + 1, width)]
    return out + [("all", 1, max_length)]


def score_cell(cell: dict, test_records, cfg: dict) -> list[MetricReport]:
    idx = cell["indices"]
    preds = [np.asarray(p) for p in cell["predictions"]]
    truth = [np.asarray(test_records[i].noiseless) for i in idx]
    noisy = [np.asarray(test_records[i].noisy) for i in idx]
    overhead = OverheadLedger(cell["ledger"]["method"], cell["ledger"]["circuit_instances"], cell["ledger"]["total_shots"]).total
    reports = []
    for name, lo, hi in depth_buckets(cfg["max_length"], cfg["bucket_width"]):
        sl = slice(lo - 1, hi)
        p = [x[sl] for x in preds if x[sl].size]
        if not p:
            continue
        t = [x[sl] for x in truth if x[sl].size]
        nz = [x[sl] for x in noisy if x[sl].size]
        reports.append(score_sequences(cell["model"], cell["t1"], name, p, nz, t, overhead, seed=cfg["seed"]))
    if cfg["task"] == "ghz":
        r, rmse = metrology_from_predictions(preds, [test_records[i] for i in idx], cfg["shots"])
        for rep in reports:
            if rep.bucket == "all":
                rep.fit_rate_r, rep.rmse_theta = r, rmse
    return reports


def write_reports(reports: Sequence[MetricReport], out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    names = [f.name for f in fields(MetricReport)]
    with open(out / "metrics.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=names)
        writer.writeheader()
        for rep in reports:
            writer.writerow(rep.to_row())
    with open(out / "metrics.json", "w") as fh:
        json.dump([rep.to_row() for rep in reports], fh, indent=1)


def run_experiment(config, out_dir) -> list[MetricReport]:
    cfg = load_config(config)
    out = Path(out_dir)
    reports = []
    for level, t1 in enumerate(cfg["noise_levels"]):
        spec = noise_spec(t1)
        dcfgs = dataset_configs(cfg)
        base_seed = int(cfg["seed"]) * 100 + level
        train_records = ensure_dataset(out / "data" / f"train_{_level_tag(t1)}.jsonl", dcfgs["train"], spec, base_seed)
        test_records = ensure_dataset(out / "data" / f"test_{_level_tag(t1)}.jsonl", dcfgs["test"], spec, base_seed + 50)
        for model in cfg["models"]:
            cell = run_cell(model, cfg, t1, train_records, test_records, out)
            reports.extend(score_cell(cell, test_records, cfg))
    write_reports(reports, out)
    return reports


# -- metrology ----------------------------------------------------------------------------


def principal_branch(records: Sequence[SequenceRecord]) -> list[int]:
    """Records whose θ keeps ``n θ < π`` for every ``n`` in the sequence."""
    return [i for i, r in enumerate(records) if r.length * r.params["theta"] < math.pi]


def metrology_curves(predictions, records: Sequence[SequenceRecord], shots: int):
    """Per-n mean squared θ error (averaged over θ) and its noiseless delta-method reference.

    Trials sharing a θ are pooled: ``MSE(n, θ) = mean_trials (θ_est - θ)^2``.
    The reference is ``Var[θ_est] = 1 / (N n^2)`` evaluated from the exact
    noiseless expectations by the delta method.
    """
    keep = principal_branch(records)
    if not keep:
        raise ValueError("no records on the principal branch")
    L = min(records[i].length for i in keep)
    ns = np.arange(1, L + 1)
    by_theta: dict[float, list[np.ndarray]] = {}
    clean_var = np.zeros(L)
    for i in keep:
        rec = records[i]
        est = theta_estimate(np.asarray(predictions[i][:L]), ns)
        by_theta.setdefault(rec.params["theta"], []).append((est - rec.params["theta"]) ** 2)
        y = np.asarray(rec.noiseless[:L])
        slope = ns * np.sqrt(np.clip(1.0 - y**2, 1e-300, None))
        clean_var += (1.0 - y**2) / shots / slope**2
    mse = np.mean([np.mean(v, axis=0) for v in by_theta.values()], axis=0)
    return ns, mse, clean_var / len(keep)


def delta_method_curve(expectations, records: Sequence[SequenceRecord], shots: int):
    """Per-n mean over θ of ``bias^2 + Var`` for exact (shot-free) expectations.

    ``bias = θ_est(y) - θ`` and ``Var = (1 - y^2) / N * (dθ_est/dy)^2``, which
    reduces to ``1 / (N n^2)`` inside the open interval.
    """
    keep = principal_branch(records)
    if not keep:
        raise ValueError("no records on the principal branch")
    L = min(records[i].length for i in keep)
    ns = np.arange(1, L + 1)
    by_theta: dict[float, np.ndarray] = {}
    for i in keep:
        theta = records[i].params["theta"]
        y = np.clip(np.asarray(expectations[i][:L], dtype=float), -1.0 + 1e-15, 1.0 - 1e-15)
        bias = theta_estimate(y, ns) - theta
        slope = 1.0 / (ns * np.sqrt(1.0 - y**2))
        by_theta[theta] = bias**2 + (1.0 - y**2) / shots * slope**2
    return ns, np.mean(list(by_theta.values()), axis=0)


def exact_sequences(records: Sequence[SequenceRecord], spec: DecoherenceSpec, mode: str = "noisy") -> list[list[float]]:
    """Shot-free expectations behind each record."""
    out = []
    for rec in records:
        circuits, how = record_circuits(rec, spec)
        if how == "prefix":
            out.append(exact_executor(mode)(circuits[0]).tolist())
        else:
            out.append([float(exact_executor(mode)(c)[-1]) for c in circuits])
    return out


def metrology_from_predictions(predictions, records, shots: int) -> tuple[float, float]:
    """``(r, RMSE at the largest n)`` with ``r`` fitted to the mean squared θ error."""
    ns, mse, clean = metrology_curves(predictions, records, shots)
    _, r = fit_rate(ns, np.clip(mse, 1e-300, None), clean)
    return r, float(math.sqrt(mse[-1]))


# -- structure analysis ------------------------------------------------------------------


def analyze_structure(model: SurrogateModel, records, spec: DecoherenceSpec, out_dir, pool_window: int = 2):
    """Per-layer PTMs of the cumulative noise against NNAS surrogates; writes CSV files.

    Returns a list of ``(pearson, spearman, flagged)`` per record.
    """
    if model.kind != "NNAS":
        raise ValueError("structure analysis needs an NNAS checkpoint")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results, rows = [], []
    for k, rec in enumerate(records):
        if rec.task != "trotter":
            raise ValueError("structure analysis is defined for the trotter task")
        if rec.n > accumulation.MAX_PTM_QUBITS:
            raise ValueError(f"structure analysis supports n <= {accumulation.MAX_PTM_QUBITS}")
        circuits, _ = record_circuits(rec, spec)
        states = accumulation.track(circuits[0])
        batch = to_batches([rec], spec)[0]
        parts = model.surrogates(batch)
        n_hat = [p["N"][0] for p in parts]
        ptms = [s.noise_ptm for s in states]
        h_s, f_s = entropy_curve(n_hat)
        h_p, f_p = entropy_curve(ptms)
        if len(h_s) >= 3:
            pearson, spearman = curve_correlation(h_s, h_p)
        else:
            pearson = spearman = float("nan")
        flagged = f_s or f_p or math.isnan(pearson)
        results.append((pearson, spearman, flagged))
        rows.append({"record": k, "pearson": pearson, "spearman": spearman, "flagged": flagged})
        if k == 0:
            _write_case_study(out, ptms, n_hat, h_s, h_p, pool_window)
    with open(out / "entropy_correlations.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=["record", "pearson", "spearman", "flagged"])
        writer.writeheader()
        writer.writerows(rows)
    return results


def _write_matrix(path: Path, m: np.ndarray) -> None:
    np.savetxt(path, np.atleast_2d(m), delimiter=",")


def _write_case_study(out: Path, ptms, n_hat, h_s, h_p, window: int) -> None:
    for l, (ptm, v) in enumerate(zip(ptms, n_hat), start=1):
        d = v.size
        _write_matrix(out / f"layer{l:02d}_pooled_ptm.csv", sum_pool(ptm, window) if ptm.shape[0] % window == 0 else ptm)
        _write_matrix(out / f"layer{l:02d}_surrogate_outer.csv", np.outer(v, v))
        if ptm.shape[0] % d == 0:
            _write_matrix(out / f"layer{l:02d}_spearman.csv", spearman_matrix(v, ptm))
    with open(out / "entropy_curves.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["layer", "surrogate_entropy", "ptm_entropy"])
        for l, (a, b) in enumerate(zip(h_s, h_p), start=1):
            writer.writerow([l, a, b])
