"""Probabilistic error cancellation with a sparse Pauli-Lindblad (SPL) noise model.

The model for a two-qubit gate is ``prod_k (ω_k I + (1 - ω_k) P_k)`` over the 15
non-identity Paulis, ``ω_k = (1 + e^{-2 λ_k}) / 2``. Its Pauli fidelities are
``f_a = exp(-2 sum_{k: P_k anticommutes with P_a} λ_k)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..accumulation import gate_ptm
from ..circuits import Gate, LayeredCircuit
from ..pauli import PauliChannel, PauliMap, commutation_signs, pauli_product_index
from ..simulator import circuit_superops, sample_shots, simulate
from .overhead import SHOTS, OverheadLedger

log = logging.getLogger(__name__)

REPETITIONS = (2, 4, 6, 8, 10)
GAMMA_LIMIT = 1e6
PEC_INSTANCES = 100
PEC_TOTAL_SHOTS = 2 * SHOTS


def anticommutation_matrix(n: int = 2) -> np.ndarray:
    """``M[a, k] = 1`` if ``P_a`` and ``P_k`` anticommute, over non-identity Paulis."""
    signs = commutation_signs(n)[1:, 1:]
    return (signs < 0).astype(float)


@dataclass(frozen=True)
class SPLModel:
    lambdas: np.ndarray
    n: int = 2
    clamped: bool = False

    def __post_init__(self):
        lam = np.asarray(self.lambdas, dtype=float)
        if lam.shape != (4**self.n - 1,):
            raise ValueError(f"need {4**self.n - 1} SPL coefficients")
        if np.any(lam < 0):
            raise ValueError("SPL coefficients must be non-negative")
        object.__setattr__(self, "lambdas", lam)

    @property
    def omegas(self) -> np.ndarray:
        return (1.0 + np.exp(-2.0 * self.lambdas)) / 2.0

    def fidelities(self) -> np.ndarray:
        return np.concatenate([[1.0], np.exp(-2.0 * anticommutation_matrix(self.n) @ self.lambdas)])

    def channel(self) -> PauliChannel:
        coeffs = np.clip(PauliMap.from_fidelities(self.fidelities(), self.n).coeffs, 0.0, None)
        return PauliChannel(self.n, coeffs / coeffs.sum())

    def inverse(self) -> PauliMap:
        """Signed Pauli map ``γ prod_k (ω_k I - (1 - ω_k) P_k)``."""
        return PauliMap.from_fidelities(1.0 / self.fidelities(), self.n)

    @property
    def gamma(self) -> float:
        return float(math.exp(2.0 * self.lambdas.sum()))


def _fit_lambdas(fidelities: np.ndarray, n: int) -> tuple[np.ndarray, bool]:
    f = np.asarray(fidelities, dtype=float)[1:]
    if np.any(f <= 0):
        raise ValueError("non-positive Pauli fidelity; noise too strong to fit")
    target = -np.log(f) / 2.0
    lam, *_ = np.linalg.lstsq(anticommutation_matrix(n), target, rcond=None)
    clamped = bool(np.any(lam < -1e-8))
    if clamped:
        log.debug("clamping negative SPL coefficients (min %.3g) to zero", lam.min())
    return np.clip(lam, 0.0, None), clamped


def _repeated_decay(gate: Gate, channel: PauliChannel, reps: Sequence[int]) -> np.ndarray:
    """``Tr[P_a (ε G)^m (P_a)] / 2^n`` for every Pauli ``a`` and repetition count ``m``."""
    n = gate.arity
    local = Gate(gate.kind, tuple(range(n)), gate.angle)
    step = channel.fidelities()[:, None] * gate_ptm(local, n)
    out = []
    for m in reps:
        out.append(np.diag(np.linalg.matrix_power(step, m)))
    return np.array(out)


def spl_calibrate(
    gate: Gate,
    channel: PauliChannel,
    mode: str = "exact",
    repetitions: Sequence[int] = REPETITIONS,
    shots: int = SHOTS,
    rng: Optional[np.random.Generator] = None,
) -> SPLModel:
    """Learn an SPL model for a noisy self-inverse two-qubit gate.

    ``exact`` reads the fidelities off the channel's PTM diagonal. ``sampled``
    repeats the noisy gate an even number of times, estimates each Pauli's
    decay with ``shots`` shots and fits ``a_0 f^m``. Repetition only exposes
    the product of fidelities along the gate's Pauli orbit, so the sampled fit
    returns their geometric mean per repetition.
    """
    if channel.n != gate.arity:
        raise ValueError("channel size does not match the gate")
    if mode == "exact":
        lam, clamped = _fit_lambdas(channel.fidelities(), channel.n)
        return SPLModel(lam, channel.n, clamped)
    if mode != "sampled":
        raise ValueError(f"unknown calibration mode {mode!r}")
    if any(m % 2 for m in repetitions):
        raise ValueError("repetition counts must be even for a self-inverse gate")
    rng = rng if rng is not None else np.random.default_rng()
    decays = _repeated_decay(gate, channel, repetitions)
    m = np.asarray(repetitions, dtype=float)
    fids = np.ones(4**channel.n)
    for a in range(1, 4**channel.n):
        est = np.array([sample_shots(float(np.clip(v, -1, 1)), shots, rng) for v in decays[:, a]])
        est = np.clip(est, 1.0 / shots, None)
        slope, _ = np.polyfit(m, np.log(est), 1)
        fids[a] = min(math.exp(slope), 1.0)
    lam, clamped = _fit_lambdas(fids, channel.n)
    return SPLModel(lam, channel.n, clamped)


def calibrate_circuit(circuit: LayeredCircuit, mode: str = "exact", shots: int = SHOTS, rng=None) -> dict:
    """One SPL model per CNOT position ``(layer, index)``."""
    if circuit.noise is None:
        raise ValueError("calibration needs a noisy circuit")
    return {
        (l, g): spl_calibrate(gate, circuit.noise[l][g].channel, mode, shots=shots, rng=rng)
        for l, g, gate in circuit.gates()
        if gate.kind == "CNOT"
    }


def _cnot_positions(circuit: LayeredCircuit) -> list[tuple[int, int]]:
    return [(l, g) for l, g, gate in circuit.gates() if gate.kind == "CNOT"]


def _cumulative_gamma(circuit: LayeredCircuit, models: dict) -> np.ndarray:
    per_layer = np.zeros(circuit.depth)
    for l, g in _cnot_positions(circuit):
        per_layer[l] += 2.0 * models[(l, g)].lambdas.sum()
    gammas = np.exp(np.cumsum(per_layer))
    if gammas[-1] > GAMMA_LIMIT:
        raise OverflowError(f"PEC overhead {gammas[-1]:.3g} exceeds {GAMMA_LIMIT:g}")
    return gammas


def pec_mitigate(
    circuit: LayeredCircuit,
    models: dict,
    mode: str = "sampled",
    instances: int = PEC_INSTANCES,
    total_shots: int = PEC_TOTAL_SHOTS,
    rng: Optional[np.random.Generator] = None,
) -> tuple[np.ndarray, OverheadLedger]:
    """Per-layer PEC estimate; only CNOT noise is cancelled.

    ``exact`` inserts the signed inverse map after every CNOT and returns exact
    expectations. ``sampled`` draws ``instances`` Pauli insertions (per SPL
    factor: identity with probability ω_k, else P_k with a sign flip), runs
    each with ``ceil(total_shots / instances)`` shots and rescales by γ.
    """
    missing = [pos for pos in _cnot_positions(circuit) if pos not in models]
    if missing:
        raise ValueError(f"uncalibrated CNOT gates at {missing}")
    gammas = _cumulative_gamma(circuit, models)
    ledger = OverheadLedger("pec", instances, total_shots)
    if mode == "exact":
        inserts = {pos: models[pos].inverse() for pos in _cnot_positions(circuit)}
        return simulate(circuit, "noisy", insertions=inserts), ledger
    if mode != "sampled":
        raise ValueError(f"unknown PEC mode {mode!r}")

    rng = rng if rng is not None else np.random.default_rng()
    shots = math.ceil(total_shots / instances)
    acc = np.zeros(circuit.depth)
    positions = _cnot_positions(circuit)
    superops = circuit_superops(circuit, "noisy")
    for _ in range(instances):
        inserts = {}
        sign_flips = np.zeros(circuit.depth, dtype=int)
        for pos in positions:
            model = models[pos]
            hits = rng.random(model.lambdas.size) >= model.omegas
            idx = 0
            for k in np.flatnonzero(hits):
                idx = int(pauli_product_index(idx, int(k) + 1, model.n))
            if idx:
                coeffs = np.zeros(4**model.n)
                coeffs[idx] = 1.0
                inserts[pos] = PauliMap(model.n, coeffs)
            sign_flips[pos[0]] += int(hits.sum())
        signs = np.where(np.cumsum(sign_flips) % 2, -1.0, 1.0)
        values = simulate(circuit, "noisy", insertions=inserts, superops=superops)
        sampled = np.array([sample_shots(float(v), shots, rng) for v in values])
        acc += signs * sampled
    return gammas * acc / instances, ledger
