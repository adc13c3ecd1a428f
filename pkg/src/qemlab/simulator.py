"""Exact density-matrix simulation of layered circuits with per-gate Pauli noise."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .circuits import Gate, LayeredCircuit
from .pauli import PauliMap, PauliString, pauli_matrix

log = logging.getLogger(__name__)

MAX_SIM_QUBITS = 6


@dataclass
class DensityMatrix:
    n: int
    matrix: np.ndarray

    @classmethod
    def zero(cls, n: int) -> "DensityMatrix":
        rho = np.zeros((2**n, 2**n), dtype=complex)
        rho[0, 0] = 1.0
        return cls(n, rho)

    def expectation(self, observable: PauliString) -> float:
        return expectation(self.matrix, observable)

    def check(self, tol: float = 1e-10, psd_tol: float = 1e-9) -> None:
        m = self.matrix
        if np.max(np.abs(m - m.conj().T)) > tol:
            raise AssertionError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1.0) > tol:
            raise AssertionError(f"density matrix trace {np.trace(m).real:.3g} != 1")
        if np.linalg.eigvalsh(m).min() < -psd_tol:
            raise AssertionError("density matrix is not positive semidefinite")


def expectation(rho: np.ndarray, observable: PauliString) -> float:
    p = pauli_matrix(observable.index, observable.n)
    # Tr[P rho] = sum_ij P_ij rho_ji
    return float(np.real(np.sum(p * rho.T)))


def unitary_superop(u: np.ndarray) -> np.ndarray:
    """Row-major vectorization of ``rho -> u rho u^dag``."""
    return np.kron(u, u.conj())


def apply_superop(rho: np.ndarray, superop: np.ndarray, qubits, n: int) -> np.ndarray:
    """Apply a local superoperator on ``qubits`` to a ``2^n x 2^n`` density matrix."""
    k = len(qubits)
    t = rho.reshape((2,) * (2 * n))
    s = superop.reshape((2,) * (4 * k))
    rows = [n - 1 - q for q in reversed(qubits)]
    axes = rows + [n + r for r in rows]
    out = np.tensordot(s, t, axes=(list(range(2 * k, 4 * k)), axes))
    out = np.moveaxis(out, list(range(2 * k)), axes)
    return out.reshape(2**n, 2**n)


def gate_superop(gate: Gate, noise: Optional[PauliMap] = None) -> np.ndarray:
    s = unitary_superop(gate.matrix())
    if noise is not None:
        s = noise.superoperator() @ s
    return s


def circuit_superops(circuit: LayeredCircuit, mode: str = "noisy") -> list[list[np.ndarray]]:
    noisy = mode == "noisy"
    return [
        [gate_superop(gate, circuit.noise[l][g].channel if noisy else None) for g, gate in enumerate(layer)]
        for l, layer in enumerate(circuit.layers)
    ]


def _check_size(n: int) -> None:
    if n > MAX_SIM_QUBITS:
        raise ValueError(f"density-matrix simulation is capped at {MAX_SIM_QUBITS} qubits, got {n}")


def run(
    circuit: LayeredCircuit,
    mode: str = "noisy",
    insertions: Optional[Mapping[tuple[int, int], PauliMap]] = None,
    initial: Optional[np.ndarray] = None,
    debug: bool = False,
    superops=None,
) -> list[np.ndarray]:
    """Density matrices after every layer.

    ``insertions`` maps ``(layer, position)`` to an extra Pauli map applied
    after that gate (and after its noise); used for error cancellation.
    ``superops`` may hold precomputed ``circuit_superops`` for repeated runs.
    """
    if mode not in ("noisy", "noiseless"):
        raise ValueError(f"unknown mode {mode!r}")
    _check_size(circuit.n)
    noisy = mode == "noisy"
    if noisy and circuit.noise is None:
        raise ValueError("noisy simulation needs noise attached to every gate")
    n = circuit.n
    if superops is None:
        superops = circuit_superops(circuit, mode)
    rho = DensityMatrix.zero(n).matrix if initial is None else np.array(initial, dtype=complex)
    states = []
    for l, layer in enumerate(circuit.layers):
        for g, gate in enumerate(layer):
            s = superops[l][g]
            if insertions and (l, g) in insertions:
                s = insertions[(l, g)].superoperator() @ s
            rho = apply_superop(rho, s, gate.qubits, n)
        if debug:
            DensityMatrix(n, rho).check()
        states.append(rho)
    return states


def simulate(
    circuit: LayeredCircuit,
    mode: str = "noisy",
    insertions: Optional[Mapping[tuple[int, int], PauliMap]] = None,
    debug: bool = False,
    superops=None,
) -> np.ndarray:
    """Per-layer expectation values of the circuit observable."""
    states = run(circuit, mode, insertions, debug=debug, superops=superops)
    return np.array([expectation(rho, circuit.observable) for rho in states])


def sample_shots(value: float, shots: int, seed=None) -> float:
    """Empirical mean of ``shots`` ±1 outcomes with mean ``value``.

    ``seed`` may be an int, a SeedSequence or a Generator.
    """
    if shots < 1:
        raise ValueError("need at least one shot")
    if abs(value) > 1 + 1e-9 or math.isnan(value):
        raise ValueError(f"expectation {value} outside [-1, 1]")
    if abs(value) > 1:
        log.warning("clamping expectation %r into [-1, 1]", value)
        value = max(-1.0, min(1.0, value))
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    k = rng.binomial(shots, (1.0 + value) / 2.0)
    return 2.0 * k / shots - 1.0


def sample_sequence(values, shots: int, rng: np.random.Generator) -> np.ndarray:
    return np.array([sample_shots(float(v), shots, rng) for v in values])


def exact_executor(mode: str = "noisy"):
    """Executor returning exact per-layer expectations."""

    def execute(circuit: LayeredCircuit) -> np.ndarray:
        return simulate(circuit, mode)

    return execute


def shot_executor(shots: int, rng: np.random.Generator, mode: str = "noisy"):
    """Executor that samples each layer's expectation with ``shots`` shots."""

    def execute(circuit: LayeredCircuit) -> np.ndarray:
        return sample_sequence(simulate(circuit, mode), shots, rng)

    return execute
