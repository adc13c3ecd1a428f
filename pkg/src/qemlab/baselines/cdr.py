"""Clifford data regression: learn an affine noisy -> ideal map on near-Clifford circuits."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..circuits import Gate, LayeredCircuit, rotation_matrix
from ..simulator import exact_executor, shot_executor
from .overhead import SHOTS, OverheadLedger

log = logging.getLogger(__name__)

Executor = Callable[[LayeredCircuit], np.ndarray]
CLIFFORD_ANGLES = tuple(k * math.pi / 2 for k in range(4))


class DegenerateRegression(ValueError):
    """All training points share one noisy value, so the slope is undetermined."""


@dataclass(frozen=True)
class CliffordSubstitution:
    rate: float = 0.5
    max_nonclifford: int = 20
    training_circuits: int = 10

    def __post_init__(self):
        if not 0.0 <= self.rate <= 1.0:
            raise ValueError("replacement rate must lie in [0, 1]")
        if self.max_nonclifford < 0 or self.training_circuits < 1:
            raise ValueError("invalid substitution sizes")


def is_clifford_angle(angle: float, tol: float = 1e-9) -> bool:
    r = math.remainder(angle, math.pi / 2)
    return abs(r) < tol


def clifford_weights(kind: str, angle: float) -> np.ndarray:
    """``e^{-4 d_k^2}`` with ``d_k`` the Frobenius distance to ``R(k π/2)``, normalized."""
    target = rotation_matrix(kind, angle)
    d = np.array([np.linalg.norm(target - rotation_matrix(kind, a)) for a in CLIFFORD_ANGLES])
    w = np.exp(-4.0 * d**2)
    return w / w.sum()


def near_clifford_variant(
    circuit: LayeredCircuit, substitution: CliffordSubstitution, rng: np.random.Generator
) -> LayeredCircuit:
    """Replace a random subset of non-Clifford rotations by Clifford rotations.

    At least a fraction ``rate`` is replaced, more if needed to leave at most
    ``max_nonclifford`` non-Clifford gates. Attached noise is kept per gate.
    """
    targets = [
        (l, g)
        for l, g, gate in circuit.gates()
        if gate.kind in ("RX", "RY", "RZ") and not is_clifford_angle(gate.angle)
    ]
    if any(gate.kind == "RZZ" for _, _, gate in circuit.gates()):
        raise ValueError("compile the circuit before Clifford substitution")
    count = len(targets)
    n_replace = min(count, max(math.ceil(substitution.rate * count), count - substitution.max_nonclifford))
    chosen = {targets[i] for i in rng.choice(count, size=n_replace, replace=False)} if count else set()
    layers = []
    for l, layer in enumerate(circuit.layers):
        row = []
        for g, gate in enumerate(layer):
            if (l, g) in chosen:
                k = rng.choice(4, p=clifford_weights(gate.kind, gate.angle))
                gate = Gate(gate.kind, gate.qubits, CLIFFORD_ANGLES[k])
            row.append(gate)
        layers.append(row)
    return LayeredCircuit(circuit.n, layers, circuit.observable, circuit.noise)


def _affine_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    if np.ptp(x) < 1e-12:
        raise DegenerateRegression("training noisy values are all identical")
    design = np.column_stack([x, np.ones_like(x)])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(a), float(b)


def cdr_mitigate(
    circuit: LayeredCircuit,
    substitution: CliffordSubstitution = CliffordSubstitution(),
    rng: Optional[np.random.Generator] = None,
    shots: int = SHOTS,
    noisy_executor: Optional[Executor] = None,
    ideal_executor: Optional[Executor] = None,
    on_degenerate: str = "raise",
) -> tuple[np.ndarray, OverheadLedger]:
    """Per-layer CDR estimate.

    A separate affine fit is made at every layer. With ``on_degenerate="noisy"``
    a layer whose training values are all equal falls back to the noisy value
    instead of raising.
    """
    if on_degenerate not in ("raise", "noisy"):
        raise ValueError(f"unknown on_degenerate {on_degenerate!r}")
    rng = rng if rng is not None else np.random.default_rng()
    noisy_executor = noisy_executor or shot_executor(shots, rng)
    ideal_executor = ideal_executor or exact_executor("noiseless")

    xs, ys = [], []
    for _ in range(substitution.training_circuits):
        variant = near_clifford_variant(circuit, substitution, rng)
        xs.append(noisy_executor(variant))
        ys.append(ideal_executor(variant))
    xs, ys = np.array(xs), np.array(ys)
    target = np.asarray(noisy_executor(circuit), dtype=float)

    out = np.empty(circuit.depth)
    for l in range(circuit.depth):
        try:
            a, b = _affine_fit(xs[:, l], ys[:, l])
        except DegenerateRegression:
            if on_degenerate == "raise":
                raise
            log.info("CDR layer %d: degenerate training set, returning the noisy value", l)
            out[l] = target[l]
            continue
        out[l] = a * target[l] + b
    n_c = substitution.training_circuits + 1
    return out, OverheadLedger("cdr", n_c, n_c * shots)
