"""Zero-noise extrapolation by CNOT unfolding and Richardson extrapolation."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..circuits import LayeredCircuit
from ..simulator import shot_executor
from .overhead import SHOTS, OverheadLedger

Executor = Callable[[LayeredCircuit], np.ndarray]


@dataclass(frozen=True)
class RichardsonPlan:
    scales: tuple[float, ...]
    coefficients: tuple[float, ...]

    def extrapolate(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        return np.tensordot(np.asarray(self.coefficients), values, axes=1)


def richardson_coefficients(scales: Sequence[float]) -> RichardsonPlan:
    """``γ_i = prod_{j != i} x_j / (x_j - x_i)``."""
    x = [float(s) for s in scales]
    if not x:
        raise ValueError("need at least one scale")
    if len(set(x)) != len(x):
        raise ValueError(f"duplicate scales in {x}")
    if any(b <= a for a, b in zip(x, x[1:])):
        raise ValueError("scales must be strictly increasing")
    gammas = []
    for i, xi in enumerate(x):
        g = 1.0
        for j, xj in enumerate(x):
            if j != i:
                g *= xj / (xj - xi)
        gammas.append(g)
    return RichardsonPlan(tuple(x), tuple(gammas))


def unfold(circuit: LayeredCircuit, factor: int) -> LayeredCircuit:
    """Repeat every two-qubit gate ``factor`` times, each copy keeping the gate's noise."""
    if factor < 1 or factor % 2 == 0:
        raise ValueError(f"unfolding factor must be odd and positive, got {factor}")
    layers, noise = [], []
    for l, layer in enumerate(circuit.layers):
        row_g, row_n = [], []
        for g, gate in enumerate(layer):
            reps = factor if gate.arity == 2 else 1
            row_g += [gate] * reps
            if circuit.noise is not None:
                row_n += [circuit.noise[l][g]] * reps
        layers.append(row_g)
        noise.append(row_n)
    return LayeredCircuit(circuit.n, layers, circuit.observable, noise if circuit.noise is not None else None)


def zne_mitigate(
    circuit: LayeredCircuit,
    scales: Sequence[int] = (1, 3),
    shots: int = SHOTS,
    rng: Optional[np.random.Generator] = None,
    executor: Optional[Executor] = None,
) -> tuple[np.ndarray, OverheadLedger]:
    """Per-layer ZNE estimate. ``executor`` defaults to shot-sampled noisy simulation."""
    plan = richardson_coefficients(scales)
    if executor is None:
        executor = shot_executor(shots, rng if rng is not None else np.random.default_rng())
    values = [executor(unfold(circuit, int(s))) for s in plan.scales]
    ledger = OverheadLedger("zne", len(plan.scales), len(plan.scales) * shots)
    return plan.extrapolate(values), ledger
