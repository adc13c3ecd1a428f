"""Layer-wise cumulative noise in the Pauli transfer matrix picture.

Writing the noisy map after ``l`` layers as ``U_l (s_l I + N_l)``, where
``U_l`` is the ideal circuit and ``s_l`` the survival product, each new
noisy layer ``ε_l u_l`` with ``ε_l = (1 - p_l) I + p_l Λ_l`` updates

    N_l = (1 - p_l) N_{l-1} + p_l s_{l-1} a_l + p_l a_l N_{l-1},
    a_l = U_l^T Λ_l U_l,

and the noisy state is ``ρ̃_l = s_l ρ_l + R_l(ρ_l)`` with ``R_l = U_l N_l U_l^T``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .circuits import Gate, LayeredCircuit
from .pauli import mnd, pauli_basis, ptm_from_unitary

MAX_PTM_QUBITS = 3


def embed_operator(u: np.ndarray, qubits, n: int) -> np.ndarray:
    """Full ``2^n x 2^n`` matrix of a local operator on ``qubits``."""
    k = len(qubits)
    op = u.reshape((2,) * (2 * k))
    eye = np.eye(2**n, dtype=complex).reshape((2,) * n + (2**n,))
    axes = [n - 1 - q for q in reversed(qubits)]
    out = np.tensordot(op, eye, axes=(list(range(k, 2 * k)), axes))
    out = np.moveaxis(out, list(range(k)), axes)
    return out.reshape(2**n, 2**n)


def _check_cap(n: int, cap: int) -> None:
    if n > cap:
        raise ValueError(f"PTM tracking is capped at {cap} qubits, got {n}")


def gate_ptm(gate: Gate, n: int) -> np.ndarray:
    return ptm_from_unitary(embed_operator(gate.matrix(), gate.qubits, n), max_qubits=n)


def layer_ptms(circuit: LayeredCircuit, cap: int = MAX_PTM_QUBITS) -> list[tuple[np.ndarray, np.ndarray]]:
    """``(ideal, noisy)`` PTM per layer. Noisy equals ideal when no noise is attached."""
    n = circuit.n
    _check_cap(n, cap)
    dim = 4**n
    out = []
    for l, layer in enumerate(circuit.layers):
        ideal = np.eye(dim)
        noisy = np.eye(dim)
        for g, gate in enumerate(layer):
            r = gate_ptm(gate, n)
            ideal = r @ ideal
            noisy = r @ noisy
            if circuit.noise is not None:
                fids = circuit.noise[l][g].channel.embed(gate.qubits, n).fidelities()
                noisy = fids[:, None] * noisy
        out.append((ideal, noisy))
    return out


@dataclass(frozen=True)
class CumulativeNoiseState:
    layer: int
    circuit_ptm: np.ndarray
    noise_ptm: np.ndarray
    survival: float

    @classmethod
    def initial(cls, n: int) -> "CumulativeNoiseState":
        dim = 4**n
        return cls(0, np.eye(dim), np.zeros((dim, dim)), 1.0)


def accumulate_noise(
    state: CumulativeNoiseState,
    ideal_ptm: np.ndarray,
    noisy_ptm: np.ndarray,
    p: Optional[float] = None,
) -> CumulativeNoiseState:
    """Advance the cumulative noise by one noisy layer.

    The layer channel is ``ε = noisy · ideal^T``. ``p`` defaults to its
    maximum noise decomposition; any ``p`` in (0, 1] keeps the recursion
    exact, only the CPTP-ness of ``Λ`` depends on the choice.
    """
    eps = noisy_ptm @ ideal_ptm.T
    eye = np.eye(eps.shape[0])
    if p is None:
        p = mnd(eps).p
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"effectiveness factor {p} outside [0, 1]")
    circuit = ideal_ptm @ state.circuit_ptm
    if p == 0.0:
        return CumulativeNoiseState(state.layer + 1, circuit, state.noise_ptm, state.survival)
    # p * a_l, without dividing by p
    pa = circuit.T @ (eps - (1.0 - p) * eye) @ circuit
    noise = (1.0 - p) * state.noise_ptm + state.survival * pa + pa @ state.noise_ptm
    return CumulativeNoiseState(state.layer + 1, circuit, noise, state.survival * (1.0 - p))


def track(circuit: LayeredCircuit, p_source: str = "gates", cap: int = MAX_PTM_QUBITS) -> list[CumulativeNoiseState]:
    """Cumulative-noise state after each layer of a noisy circuit.

    ``p_source="gates"`` takes each layer's factor from its per-gate channels
    (what a practitioner would estimate); ``"mnd"`` decomposes the exact layer channel.
    """
    if p_source not in ("gates", "mnd"):
        raise ValueError(f"unknown p_source {p_source!r}")
    ps = circuit.layer_effectiveness() if p_source == "gates" else [None] * circuit.depth
    state = CumulativeNoiseState.initial(circuit.n)
    states = []
    for (ideal, noisy), p in zip(layer_ptms(circuit, cap), ps):
        state = accumulate_noise(state, ideal, noisy, None if p is None else float(p))
        states.append(state)
    return states


def pauli_vector(rho: np.ndarray) -> np.ndarray:
    """Coefficients ``Tr[P_i rho]``."""
    n = int(round(np.log2(rho.shape[0])))
    return np.real(np.einsum("iab,ba->i", pauli_basis(n), rho))


def state_from_pauli_vector(v: np.ndarray) -> np.ndarray:
    n = int(round(np.log(v.shape[0]) / np.log(4)))
    return np.tensordot(v, pauli_basis(n), axes=1) / 2**n


def apply_ptm(ptm: np.ndarray, rho: np.ndarray) -> np.ndarray:
    return state_from_pauli_vector(ptm @ pauli_vector(rho))


@dataclass(frozen=True)
class Envelope:
    ptm: np.ndarray
    r: float
    degenerate: bool


def noise_envelope(state: CumulativeNoiseState, rho: np.ndarray, observable_index: int) -> Envelope:
    """``R_l = U_l N_l U_l^T`` and its impact ``r_l = Tr[O R_l(ρ_l)] / Tr[O ρ_l]``.

    When ``|Tr[O ρ_l]| < 1e-9`` the ratio is undefined: ``r`` is set to 0
    and ``degenerate`` is raised.
    """
    envelope = state.circuit_ptm @ state.noise_ptm @ state.circuit_ptm.T
    v = pauli_vector(rho)
    y = v[observable_index]
    shift = (envelope @ v)[observable_index]
    if abs(y) < 1e-9:
        return Envelope(envelope, 0.0, True)
    return Envelope(envelope, float(shift / y), False)
