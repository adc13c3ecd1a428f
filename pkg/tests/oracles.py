"""Brute-force dense references used as independent oracles in the tests."""

import itertools
from functools import reduce

import numpy as np

from qemlab.pauli import PauliChannel, ptm_from_channel

I2 = np.eye(2, dtype=complex)
PAULIS = [
    I2,
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]]),
    np.diag([1.0, -1.0]).astype(complex),
]


def full_operator(local, qubits, n):
    """Dense operator of ``local`` on ``qubits``; ``qubits[0]`` is the rightmost factor of ``local``."""
    k = len(qubits)
    dim = 2**n
    out = np.zeros((dim, dim), dtype=complex)
    for col in range(dim):
        bits = [(col >> q) & 1 for q in range(n)]
        # local index: qubits[0] is the rightmost factor of the local matrix
        lin = sum(bits[q] << i for i, q in enumerate(qubits))
        for lout in range(2**k):
            amp = local[lout, lin]
            if amp == 0:
                continue
            nb = list(bits)
            for i, q in enumerate(qubits):
                nb[q] = (lout >> i) & 1
            row = sum(b << q for q, b in enumerate(nb))
            out[row, col] += amp
    return out


def pauli_string_matrix(digits_by_qubit, n):
    """``digits_by_qubit[q]`` is the letter index on qubit q."""
    return reduce(np.kron, [PAULIS[digits_by_qubit[q]] for q in reversed(range(n))], np.eye(1))


def channel_kraus(channel: PauliChannel, qubits, n):
    out = []
    for idx, c in enumerate(channel.coeffs):
        if c <= 0:
            continue
        digits = [(idx >> (2 * i)) & 3 for i in range(channel.n)]
        local = reduce(np.kron, [PAULIS[d] for d in reversed(digits)], np.eye(1))
        out.append(np.sqrt(c) * full_operator(local, qubits, n))
    return out


def apply_kraus(rho, kraus):
    return sum(k @ rho @ k.conj().T for k in kraus)


def dense_run(circuit, noisy=True):
    """Per-layer density matrices by explicit dense matrix products."""
    n = circuit.n
    rho = np.zeros((2**n, 2**n), dtype=complex)
    rho[0, 0] = 1
    states = []
    for l, layer in enumerate(circuit.layers):
        for g, gate in enumerate(layer):
            u = full_operator(gate.matrix(), gate.qubits, n)
            rho = u @ rho @ u.conj().T
            if noisy and circuit.noise is not None:
                rho = apply_kraus(rho, channel_kraus(circuit.noise[l][g].channel, gate.qubits, n))
        states.append(rho)
    return states


def dense_expectations(circuit, noisy=True):
    obs = circuit.observable
    p = pauli_string_matrix([ "IXYZ".index(ch) for ch in obs.letters], obs.n)
    return np.array([np.real(np.trace(p @ rho)) for rho in dense_run(circuit, noisy)])


def dense_layer_ptms(circuit):
    """(ideal, noisy) layer PTMs from dense Kraus operators."""
    n = circuit.n
    out = []
    for l, layer in enumerate(circuit.layers):
        kraus = [np.eye(2**n, dtype=complex)]
        ideal = np.eye(2**n, dtype=complex)
        for g, gate in enumerate(layer):
            u = full_operator(gate.matrix(), gate.qubits, n)
            ideal = u @ ideal
            kraus = [u @ k for k in kraus]
            if circuit.noise is not None:
                kraus = [e @ k for e in channel_kraus(circuit.noise[l][g].channel, gate.qubits, n) for k in kraus]
        out.append((ptm_from_channel(ideal, max_qubits=n), ptm_from_channel(np.array(kraus), max_qubits=n)))
    return out


def expansion_noise(ideals, channels, ps):
    """Explicit sum over all nonempty noise-occurrence sets S of the relocated noise terms.

    ``channels[l]`` is the layer noise PTM ε_l, ``ideals[l]`` the ideal layer PTM.
    Returns ``(survival, N)`` after the last layer.
    """
    L = len(ideals)
    dim = ideals[0].shape[0]
    eye = np.eye(dim)
    cum = []
    c = eye
    for u in ideals:
        c = u @ c
        cum.append(c)
    lam = [(e - (1 - p) * eye) / p if p > 0 else eye for e, p in zip(channels, ps)]
    relocated = [cum[l].T @ lam[l] @ cum[l] for l in range(L)]
    total = np.zeros((dim, dim))
    for size in range(1, L + 1):
        for S in itertools.combinations(range(L), size):
            weight = 1.0
            for l in range(L):
                weight *= ps[l] if l in S else (1 - ps[l])
            term = eye
            for l in S:  # later layers multiply on the left
                term = relocated[l] @ term
            total = total + weight * term
    return float(np.prod([1 - p for p in ps])), total
