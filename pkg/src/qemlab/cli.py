"""Command-line entry point: ``qemlab {generate,train,mitigate,evaluate,analyze,ledger}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import experiment
from .baselines.overhead import SHOTS, OverheadLedger, ml_ledger, noisy_ledger
from .dataset import DatasetConfig, DatasetError, generate_dataset, read_dataset
from .metrics import score_sequences
from .nn.models import KINDS, SurrogateModel
from .noise import BASELINE_T1, DecoherenceSpec

EXIT_OK, EXIT_CONFIG, EXIT_DATA = 0, 2, 3

log = logging.getLogger("qemlab")


class UsageError(Exception):
    """Bad flags or config; maps to exit code 2."""


def _spec(args) -> DecoherenceSpec:
    if getattr(args, "noiseless", False):
        return DecoherenceSpec.noiseless()
    return DecoherenceSpec.scaled(args.t1)


def _load(path):
    try:
        return read_dataset(path)
    except FileNotFoundError as exc:
        raise DatasetError(f"missing dataset {path}") from exc


def _training_cfg(args) -> dict:
    return {
        "hidden": args.hidden,
        "max_length": args.max_length,
        "seed": args.seed,
        "training": {"learning_rate": args.lr, "epochs": args.epochs, "batch_size": args.batch_size},
    }


def cmd_generate(args) -> int:
    try:
        cfg = DatasetConfig(
            task=args.task, n=args.n, size=args.size, p_r=args.p_r,
            max_length=args.max_length, split=args.split, shots=args.shots,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    records = generate_dataset(args.out, cfg, _spec(args), args.seed)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    header, records = _load(args.data)
    spec = DecoherenceSpec.from_json(header["noise"])
    cfg = _training_cfg(args)
    model, curve = experiment.fit_surrogate(args.model, records, spec, cfg, args.p_scale, seed=args.seed)
    model.save(args.out)
    print(f"{args.model}: loss {curve[0]:.4g} -> {curve[-1]:.4g}; checkpoint {args.out}")
    return EXIT_OK


def cmd_mitigate(args) -> int:
    header, records = _load(args.data)
    spec = DecoherenceSpec.from_json(header["noise"])
    if args.method in KINDS or args.method == "checkpoint":
        if not args.checkpoint:
            raise UsageError("--checkpoint is required for learned models")
        model = SurrogateModel.load(args.checkpoint)
        preds = experiment.predict_records(model, records, spec, args.p_scale)
        ledger = ml_ledger(SHOTS)
    elif args.method == "Noisy":
        preds, ledger = [r.noisy for r in records], noisy_ledger()
    else:
        rng = np.random.default_rng(args.seed)
        limit = args.limit or len(records)
        preds, ledger = [], None
        for rec in records[:limit]:
            seq, ledger = experiment.apply_baseline(args.method, rec, spec, rng, SHOTS, args.mode)
            preds.append(seq)
    with open(args.out, "w") as fh:
        json.dump({"method": args.method, "predictions": preds, "ledger": ledger.to_json()}, fh)
    print(f"wrote {len(preds)} mitigated sequences to {args.out}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.config:
        try:
            reports = experiment.run_experiment(args.config, args.out)
        except experiment.ConfigError as exc:
            raise UsageError(str(exc)) from exc
        print(f"wrote {len(reports)} report rows to {args.out}")
        return EXIT_OK
    if not (args.data and args.predictions):
        raise UsageError("give --config, or both --data and --predictions")
    _, records = _load(args.data)
    with open(args.predictions) as fh:
        blob = json.load(fh)
    preds = blob["predictions"]
    recs = records[: len(preds)]
    led = blob["ledger"]
    overhead = OverheadLedger(led["method"], led["circuit_instances"], led["total_shots"]).total
    rep = score_sequences(
        blob["method"], args.t1, "all", preds, [r.noisy for r in recs], [r.noiseless for r in recs], overhead
    )
    print(json.dumps(rep.to_row()))
    return EXIT_OK


def cmd_analyze(args) -> int:
    header, records = _load(args.data)
    spec = DecoherenceSpec.from_json(header["noise"])
    model = SurrogateModel.load(args.checkpoint)
    try:
        results = experiment.analyze_structure(model, records[: args.limit], spec, args.out)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    pearson = np.array([r[0] for r in results])
    finite = pearson[np.isfinite(pearson)]
    summary = f"{finite.mean():.4f}" if finite.size else "n/a"
    print(f"mean pearson {summary} over {len(results)} sequences ({finite.size} unflagged); outputs in {args.out}")
    return EXIT_OK


def cmd_ledger(args) -> int:
    from .baselines.cdr import CliffordSubstitution
    from .baselines.pec import PEC_INSTANCES, PEC_TOTAL_SHOTS
    from .baselines.zne import zne_mitigate  # noqa: F401  (keeps the table next to its source)

    sub = CliffordSubstitution()
    rows = [
        noisy_ledger(),
        OverheadLedger("ZNE", 2, 2 * SHOTS),
        OverheadLedger("PEC", PEC_INSTANCES, PEC_TOTAL_SHOTS),
        OverheadLedger("CDR", sub.training_circuits + 1, (sub.training_circuits + 1) * SHOTS),
        ml_ledger(SHOTS),
    ]
    for row in rows:
        print(f"{row.method:6s} instances={row.circuit_instances:4d} shots={row.total_shots:7d} total={row.total}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qemlab", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a JSON-lines dataset")
    g.add_argument("--task", choices=["trotter", "ghz"], default="trotter")
    g.add_argument("--n", type=int, default=4)
    g.add_argument("--size", type=int, default=100)
    g.add_argument("--p-r", dest="p_r", type=float, default=0.25)
    g.add_argument("--max-length", type=int, default=10)
    g.add_argument("--split", choices=["train", "test"], default="train")
    g.add_argument("--shots", type=int, default=SHOTS)
    g.add_argument("--t1", type=float, default=BASELINE_T1)
    g.add_argument("--noiseless", action="store_true")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train a surrogate model on a dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--model", choices=list(KINDS), default="NNAS")
    t.add_argument("--seed", type=int, required=True)
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch-size", type=int, default=16)
    t.add_argument("--hidden", type=int, default=32)
    t.add_argument("--max-length", type=int, default=10)
    t.add_argument("--p-scale", type=float, default=1.0)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    m = sub.add_parser("mitigate", help="mitigate a dataset with a baseline or a checkpoint")
    m.add_argument("--data", required=True)
    m.add_argument("--method", choices=["Noisy", *KINDS, "ZNE", "PEC", "CDR"], required=True)
    m.add_argument("--checkpoint")
    m.add_argument("--mode", choices=["sampled", "exact"], default="sampled")
    m.add_argument("--limit", type=int)
    m.add_argument("--p-scale", type=float, default=1.0)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_mitigate)

    e = sub.add_parser("evaluate", help="score predictions or run a full experiment config")
    e.add_argument("--config")
    e.add_argument("--data")
    e.add_argument("--predictions")
    e.add_argument("--t1", type=float, default=BASELINE_T1)
    e.add_argument("--out", default="results")
    e.set_defaults(func=cmd_evaluate)

    a = sub.add_parser("analyze", help="structure analysis of an NNAS checkpoint")
    a.add_argument("--data", required=True)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--limit", type=int, default=20)
    a.add_argument("--out", default="analysis")
    a.set_defaults(func=cmd_analyze)

    led = sub.add_parser("ledger", help="print the default overhead ledgers")
    led.set_defaults(func=cmd_ledger)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, experiment.ConfigError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DatasetError, json.JSONDecodeError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
