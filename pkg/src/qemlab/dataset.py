"""Sequence datasets: hard-regime length sampling, generation and JSON-lines storage."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .circuits import LayeredCircuit, build_ghz_metrology, build_ising_trotter
from .nn.models import OBSERVABLE_SLOTS, Batch
from .noise import T1_GRID, DecoherenceSpec, GateNoise, attach_noise, single_qubit_channel, table_row
from .simulator import sample_sequence, simulate

SCHEMA = "qemlab-dataset"
SCHEMA_VERSION = 1
SHOTS = 8192
TASKS = ("trotter", "ghz")
J_OVER_H = 0.6
HDT_RANGE = (0.5, 2.0)


# -- hard-regime plans ---------------------------------------------------------


@dataclass(frozen=True)
class RegimePlan:
    """Base length with probability ``1 - p_r``; otherwise a bucket ``[lo, hi]`` chosen by weight."""

    base: int
    buckets: tuple[tuple[int, int, float], ...]

    def __post_init__(self):
        if abs(sum(w for _, _, w in self.buckets) - 1.0) > 1e-12:
            raise ValueError("bucket weights must sum to 1")
        prev = self.base
        for lo, hi, _ in self.buckets:
            if lo <= prev or hi < lo:
                raise ValueError(f"bucket [{lo}, {hi}] does not extend past {prev}")
            prev = hi

    @property
    def max_length(self) -> int:
        return self.buckets[-1][1] if self.buckets else self.base

    def probabilities(self, p_r: float) -> list[float]:
        _check_rate(p_r)
        return [1.0 - p_r] + [p_r * w for _, _, w in self.buckets]

    def sample(self, p_r: float, rng: np.random.Generator) -> int:
        probs = self.probabilities(p_r)
        k = rng.choice(len(probs), p=probs)
        if k == 0:
            return self.base
        lo, hi, _ = self.buckets[k - 1]
        return int(rng.integers(lo, hi + 1))

    def sample_many(self, p_r: float, rng: np.random.Generator, size: int) -> np.ndarray:
        """Vectorized ``sample``; draws are not stream-compatible with repeated ``sample`` calls."""
        probs = self.probabilities(p_r)
        k = rng.choice(len(probs), p=probs, size=size)
        lo = np.array([self.base] + [b[0] for b in self.buckets])
        hi = np.array([self.base] + [b[1] for b in self.buckets])
        return rng.integers(lo[k], hi[k] + 1)

    def expected_length(self, p_r: float) -> float:
        """Mean length under uniform sampling within buckets."""
        probs = self.probabilities(p_r)
        means = [self.base] + [(lo + hi) / 2 for lo, hi, _ in self.buckets]
        return float(np.dot(probs, means))

    def nominal_length(self, p_r: float) -> float:
        """Mean length if every bucket contributed its upper edge (the published point count)."""
        probs = self.probabilities(p_r)
        return float(np.dot(probs, [self.base] + [hi for _, hi, _ in self.buckets]))

    def scaled(self, max_length: int) -> "RegimePlan":
        """Shrink to a smaller maximum length, keeping bucket weights.

        Base and upper edges are scaled and floored; lower edges follow the
        previous upper edge. Buckets that become empty are merged away.
        """
        if max_length >= self.max_length:
            return self
        s = max_length / self.max_length
        base = max(1, math.floor(self.base * s))
        buckets, prev, carry = [], base, 0.0
        for lo, hi, w in self.buckets:
            top = math.floor(hi * s)
            if top <= prev:
                carry += w
                continue
            buckets.append((prev + 1, top, w + carry))
            prev, carry = top, 0.0
        if carry and buckets:
            lo, hi, w = buckets[-1]
            buckets[-1] = (lo, hi, w + carry)
        return RegimePlan(base, tuple(buckets))

    def bucket_of(self, length: int) -> int:
        """0 for the base length, otherwise the 1-based bucket index."""
        if length <= self.base:
            return 0
        for k, (lo, hi, _) in enumerate(self.buckets, start=1):
            if lo <= length <= hi:
                return k
        raise ValueError(f"length {length} outside the plan")


PLANS = {
    "trotter": RegimePlan(10, ((11, 13, 0.5), (14, 17, 0.3), (18, 20, 0.2))),
    "ghz": RegimePlan(5, ((6, 8, 0.7), (9, 10, 0.3))),
}


def _check_rate(p_r: float) -> None:
    if not 0.0 <= p_r <= 1.0:
        raise ValueError(f"p_r={p_r} outside [0, 1]")


def plan_for(task: str, max_length: Optional[int] = None) -> RegimePlan:
    if task not in PLANS:
        raise ValueError(f"unknown task {task!r}")
    plan = PLANS[task]
    return plan if max_length is None else plan.scaled(max_length)


def sample_max_length(task: str, p_r: float, seed=None, max_length: Optional[int] = None) -> int:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return plan_for(task, max_length).sample(p_r, rng)


# -- records --------------------------------------------------------------------


@dataclass
class SequenceRecord:
    task: str
    params: dict
    n: int
    length: int
    noisy: list
    noiseless: list
    p_hats: list
    seed: int

    def __post_init__(self):
        if not (len(self.noisy) == len(self.noiseless) == len(self.p_hats) == self.length):
            raise ValueError("record arrays must all have the record's length")
        for name in ("noisy", "noiseless"):
            if any(abs(v) > 1 + 1e-9 for v in getattr(self, name)):
                raise ValueError(f"{name} expectations outside [-1, 1]")
        if any(not 0.0 <= p < 1.0 for p in self.p_hats):
            raise ValueError("effectiveness factors must lie in [0, 1)")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SequenceRecord":
        return cls(**data)


@dataclass(frozen=True)
class DatasetConfig:
    task: str = "trotter"
    n: int = 4
    size: int = 100
    p_r: float = 0.25
    max_length: int = 10
    split: str = "train"
    shots: int = SHOTS
    p_scale: float = 1.0

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}")
        _check_rate(self.p_r)
        if self.size < 0 or self.shots < 1 or self.max_length < 1:
            raise ValueError("invalid dataset sizes")
        if self.split not in ("train", "test"):
            raise ValueError(f"unknown split {self.split!r}")
        if self.task == "trotter" and self.n < 2:
            raise ValueError("the trotter task needs n >= 2")

    def to_json(self) -> dict:
        return asdict(self)


def config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


def _ghz_thetas(split: str, size: int) -> np.ndarray:
    """Training grid 0.1..5.0 and test grid 0.05..5.05 (step 0.1), ten trials each, cycled to ``size``."""
    grid = np.round(0.1 + 0.1 * np.arange(50), 10) if split == "train" else np.round(0.05 + 0.1 * np.arange(51), 10)
    return np.resize(np.repeat(grid, 10), size)


def trotter_circuit(n: int, hdt: float, length: int) -> LayeredCircuit:
    return build_ising_trotter(n, J=J_OVER_H, h=1.0, dt=hdt, L=length)


def _keyed_noise(circuit: LayeredCircuit, table: dict) -> LayeredCircuit:
    compiled = circuit.compile()
    noise = [
        [GateNoise((l, g), table[(gate.kind, gate.qubits)], table[(gate.kind, gate.qubits)].error_rate)
         for g, gate in enumerate(layer)]
        for l, layer in enumerate(compiled.layers)
    ]
    return compiled.with_noise(noise)


def ghz_circuits(theta: float, length: int, spec: DecoherenceSpec) -> list[LayeredCircuit]:
    """Noisy GHZ circuits for ``n = 1..length``; gate noise is drawn once and shared by gate."""
    largest = attach_noise(build_ghz_metrology(length, theta), spec)
    table = {(gate.kind, gate.qubits): largest.noise[l][g].channel for l, g, gate in largest.gates()}
    return [_keyed_noise(build_ghz_metrology(n, theta), table) for n in range(1, length + 1)]


def _survival_to_p(survival: np.ndarray) -> np.ndarray:
    prev = np.concatenate([[1.0], survival[:-1]])
    return 1.0 - survival / prev


def _ghz_p_hats(circuits: Sequence[LayeredCircuit]) -> np.ndarray:
    survival = np.array([np.prod(1.0 - np.array([gn.channel.error_rate for row in c.noise for gn in row])) for c in circuits])
    return _survival_to_p(survival)


def record_circuits(record: SequenceRecord, spec: DecoherenceSpec) -> tuple[list[LayeredCircuit], str]:
    """Rebuild the noisy circuit(s) behind a record.

    Returns ``(circuits, how)``: for ``"prefix"`` the single circuit's
    per-layer values are the sequence; for ``"final"`` each circuit's last
    layer gives one sequence entry.
    """
    noise_spec = spec.with_seed(record.seed)
    if record.task == "trotter":
        c = attach_noise(trotter_circuit(record.n, record.params["hdt"], record.length), noise_spec)
        return [c], "prefix"
    return ghz_circuits(record.params["theta"], record.length, noise_spec), "final"


def make_record(cfg: DatasetConfig, spec: DecoherenceSpec, seed_seq: np.random.SeedSequence, param: float, length: int) -> SequenceRecord:
    rng = np.random.default_rng(seed_seq)
    record_seed = int(seed_seq.generate_state(1)[0])
    noise_spec = spec.with_seed(record_seed)
    if cfg.task == "trotter":
        circuit = attach_noise(trotter_circuit(cfg.n, param, length), noise_spec)
        clean = simulate(circuit, "noiseless")
        exact = simulate(circuit, "noisy")
        p_hats = circuit.layer_effectiveness()
        params = {"hdt": float(param), "ratio": J_OVER_H}
        n = cfg.n
    else:
        circuits = ghz_circuits(param, length, noise_spec)
        clean = np.array([simulate(c, "noiseless")[-1] for c in circuits])
        exact = np.array([simulate(c, "noisy")[-1] for c in circuits])
        p_hats = _ghz_p_hats(circuits)
        params = {"theta": float(param)}
        n = length
    noisy = sample_sequence(exact, cfg.shots, rng)
    p_hats = np.clip(p_hats * cfg.p_scale, 0.0, 1.0 - 1e-12)
    return SequenceRecord(
        task=cfg.task,
        params=params,
        n=int(n),
        length=int(length),
        noisy=[float(v) for v in noisy],
        noiseless=[float(v) for v in clean],
        p_hats=[float(v) for v in p_hats],
        seed=record_seed,
    )


def generate_records(cfg: DatasetConfig, spec: DecoherenceSpec, seed: int) -> list[SequenceRecord]:
    """Records of a dataset. Each record gets its own spawned seed stream.

    Training lengths follow the hard-regime plan; test sequences always run
    to the plan's maximum length.
    """
    root = np.random.SeedSequence([int(seed), TASKS.index(cfg.task), 0 if cfg.split == "train" else 1])
    children = root.spawn(cfg.size + 1)
    draw = np.random.default_rng(children[0])
    plan = plan_for(cfg.task, cfg.max_length)
    if cfg.task == "ghz":
        params = _ghz_thetas(cfg.split, cfg.size)
    else:
        params = draw.uniform(*HDT_RANGE, size=cfg.size)
    records = []
    for i in range(cfg.size):
        length = plan.sample(cfg.p_r, draw) if cfg.split == "train" else plan.max_length
        records.append(make_record(cfg, spec, children[i + 1], float(params[i]), length))
    return records


def dataset_header(cfg: DatasetConfig, spec: DecoherenceSpec, seed: int) -> dict:
    payload = {"dataset": cfg.to_json(), "noise": spec.to_json(), "seed": int(seed)}
    return {
        "schema": SCHEMA,
        "version": SCHEMA_VERSION,
        **payload,
        "config_hash": config_hash(payload),
    }


def write_dataset(path, header: dict, records: Iterable[SequenceRecord]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for rec in records:
            fh.write(json.dumps(rec.to_json(), sort_keys=True) + "\n")


class DatasetError(ValueError):
    pass


def read_dataset(path) -> tuple[dict, list[SequenceRecord]]:
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"dataset {path} not found")
    with open(path) as fh:
        lines = [line for line in fh if line.strip()]
    if not lines:
        raise DatasetError(f"dataset {path} is empty")
    try:
        header = json.loads(lines[0])
        if not isinstance(header, dict) or header.get("schema") != SCHEMA or header.get("version") != SCHEMA_VERSION:
            raise DatasetError(f"{path} is not a version-{SCHEMA_VERSION} dataset")
        records = [SequenceRecord.from_json(json.loads(line)) for line in lines[1:]]
    except (json.JSONDecodeError, TypeError) as exc:
        raise DatasetError(f"malformed dataset {path}: {exc}") from exc
    except ValueError as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"invalid record in {path}: {exc}") from exc
    return header, records


def generate_dataset(path, cfg: DatasetConfig, spec: DecoherenceSpec, seed: int) -> list[SequenceRecord]:
    records = generate_records(cfg, spec, seed)
    write_dataset(path, dataset_header(cfg, spec, seed), records)
    return records


# -- model inputs -----------------------------------------------------------------


def noise_code(spec: DecoherenceSpec) -> int:
    """0 for noiseless, else 1 + position of T1 in the standard grid (or the grid size if absent)."""
    if spec.is_noiseless:
        return 0
    for i, t1 in enumerate(T1_GRID):
        if abs(spec.t1 - t1) < 1e-6:
            return i + 1
    return len(T1_GRID) + 1


def observable_code(task: str, n: int) -> list[int]:
    letters = "I" * (n - 1) + "Z" if task == "trotter" else "X" * n
    digits = ["IXYZ".index(c) for c in letters][:OBSERVABLE_SLOTS]
    return digits + [0] * (OBSERVABLE_SLOTS - len(digits))


def record_features(record: SequenceRecord, spec: DecoherenceSpec) -> np.ndarray:
    if spec.is_noiseless:
        err1 = err2 = 0.0
    else:
        err1 = 100.0 * single_qubit_channel(spec).error_rate
        err2 = 100.0 * table_row(spec.t1, spec.t2, spec.two_gate_time)[1]
    if record.task == "trotter":
        param, ratio, circuit = record.params["hdt"], record.params.get("ratio", J_OVER_H), 0
    else:
        param, ratio, circuit = record.params["theta"], 0.0, 1
    head = [record.n, circuit, noise_code(spec), err1, err2, param, ratio]
    return np.array(head + observable_code(record.task, record.n), dtype=float)


def to_batches(records: Sequence[SequenceRecord], spec: DecoherenceSpec, p_scale: float = 1.0) -> list[Batch]:
    """One single-sequence batch per record (training merges equal lengths)."""
    out = []
    for rec in records:
        p = np.clip(np.asarray(rec.p_hats) * p_scale, 0.0, 1.0 - 1e-12)
        out.append(Batch.from_arrays(record_features(rec, spec), rec.noisy, p, rec.noiseless))
    return out
