"""Layered circuits: gates, compilation to CNOT form, and the two task families."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .pauli import PauliString, effectiveness_of_layer, mnd

ONE_QUBIT = ("RX", "RY", "RZ", "H")
TWO_QUBIT = ("CNOT", "RZZ")
ROTATIONS = ("RX", "RY", "RZ", "RZZ")

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
# Local basis index = bit(qubits[0]) + 2*bit(qubits[1]); control is qubits[0].
_CNOT = np.eye(4, dtype=complex)[[0, 3, 2, 1]]


def rotation_matrix(kind: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    if kind == "RX":
        return np.array([[c, -1j * s], [-1j * s, c]])
    if kind == "RY":
        return np.array([[c, -s], [s, c]], dtype=complex)
    if kind == "RZ":
        return np.diag([np.exp(-0.5j * angle), np.exp(0.5j * angle)])
    if kind == "RZZ":
        a, b = np.exp(-0.5j * angle), np.exp(0.5j * angle)
        return np.diag([a, b, b, a])
    raise ValueError(f"not a rotation: {kind}")


@dataclass(frozen=True)
class Gate:
    kind: str
    qubits: tuple[int, ...]
    angle: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "qubits", tuple(int(q) for q in self.qubits))
        arity = 1 if self.kind in ONE_QUBIT else 2 if self.kind in TWO_QUBIT else None
        if arity is None:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if len(self.qubits) != arity:
            raise ValueError(f"{self.kind} acts on {arity} qubit(s), got {self.qubits}")
        if len(set(self.qubits)) != len(self.qubits):
            raise ValueError(f"repeated qubit in {self.qubits}")
        if not math.isfinite(self.angle):
            raise ValueError("gate angle must be finite")

    @property
    def arity(self) -> int:
        return len(self.qubits)

    @property
    def is_rotation(self) -> bool:
        return self.kind in ROTATIONS

    def matrix(self) -> np.ndarray:
        """Unitary on the gate's own qubits (qubits[0] is the least significant bit)."""
        if self.kind == "H":
            return _H
        if self.kind == "CNOT":
            return _CNOT
        return rotation_matrix(self.kind, self.angle)

    def decompose(self) -> list["Gate"]:
        if self.kind == "RZZ":
            a, b = self.qubits
            return [Gate("CNOT", (a, b)), Gate("RZ", (b,), self.angle), Gate("CNOT", (a, b))]
        return [self]

    def to_json(self) -> dict:
        out = {"kind": self.kind, "qubits": list(self.qubits)}
        if self.is_rotation:
            out["angle"] = self.angle
        return out

    @classmethod
    def from_json(cls, data: dict) -> "Gate":
        return cls(data["kind"], tuple(data["qubits"]), float(data.get("angle", 0.0)))


@dataclass(frozen=True)
class LayeredCircuit:
    """Ordered layers of gates. Gates in a layer are applied in list order.

    ``noise`` (if present) holds one ``GateNoise`` per gate, same nesting as
    ``layers``; each channel acts right after its gate.
    """

    n: int
    layers: tuple[tuple[Gate, ...], ...]
    observable: PauliString
    noise: Optional[tuple] = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(tuple(layer) for layer in self.layers))
        if not self.layers:
            raise ValueError("a circuit needs at least one layer")
        if self.observable.n != self.n:
            raise ValueError("observable size does not match the circuit")
        for layer in self.layers:
            for gate in layer:
                if max(gate.qubits) >= self.n:
                    raise ValueError(f"{gate} outside a {self.n}-qubit register")
        if self.noise is not None:
            noise = tuple(tuple(row) for row in self.noise)
            if [len(r) for r in noise] != [len(l) for l in self.layers]:
                raise ValueError("noise attachments do not match the gate layout")
            for row, layer in zip(noise, self.layers):
                for gn, gate in zip(row, layer):
                    if gn.channel.n != gate.arity:
                        raise ValueError(f"noise on {gate} has wrong arity")
            object.__setattr__(self, "noise", noise)

    @property
    def depth(self) -> int:
        return len(self.layers)

    @property
    def is_noisy(self) -> bool:
        return self.noise is not None

    @property
    def is_compiled(self) -> bool:
        return all(g.kind != "RZZ" for layer in self.layers for g in layer)

    def gates(self):
        """Yield ``(layer, position, gate)`` in execution order."""
        for l, layer in enumerate(self.layers):
            for g, gate in enumerate(layer):
                yield l, g, gate

    def compile(self) -> "LayeredCircuit":
        """Rewrite RZZ as CNOT-RZ-CNOT. Attached noise is dropped."""
        layers = [[part for gate in layer for part in gate.decompose()] for layer in self.layers]
        return LayeredCircuit(self.n, layers, self.observable)

    def with_noise(self, noise) -> "LayeredCircuit":
        return replace(self, noise=noise)

    def without_noise(self) -> "LayeredCircuit":
        return replace(self, noise=None)

    def with_observable(self, observable: PauliString | str) -> "LayeredCircuit":
        if isinstance(observable, str):
            observable = PauliString(observable)
        return replace(self, observable=observable)

    def truncate(self, depth: int) -> "LayeredCircuit":
        if not 1 <= depth <= self.depth:
            raise ValueError(f"depth {depth} outside 1..{self.depth}")
        noise = None if self.noise is None else self.noise[:depth]
        return LayeredCircuit(self.n, self.layers[:depth], self.observable, noise)

    def map_gates(self, fn) -> "LayeredCircuit":
        """Replace every gate by ``fn(layer, position, gate)`` (a list of gates). Drops noise."""
        layers = [[] for _ in self.layers]
        for l, g, gate in self.gates():
            layers[l].extend(fn(l, g, gate))
        return LayeredCircuit(self.n, layers, self.observable)

    def layer_effectiveness(self) -> np.ndarray:
        """Per-layer effectiveness factor from the per-gate MND factors."""
        if self.noise is None:
            return np.zeros(self.depth)
        return np.array([effectiveness_of_layer([mnd(gn.channel).p for gn in row]) for row in self.noise])

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "observable": self.observable.letters,
            "layers": [[g.to_json() for g in layer] for layer in self.layers],
        }

    @classmethod
    def from_json(cls, data: dict) -> "LayeredCircuit":
        layers = [[Gate.from_json(g) for g in layer] for layer in data["layers"]]
        return cls(int(data["n"]), layers, PauliString(data["observable"]))


def single_z(n: int, qubit: int) -> PauliString:
    letters = ["I"] * n
    letters[qubit] = "Z"
    return PauliString("".join(letters))


def build_ising_trotter(n: int, J: float, h: float, dt: float, L: int, observable=None) -> LayeredCircuit:
    """First-order Trotter steps of the transverse-field Ising chain.

    Each layer is an RX(2 h dt) column followed by the RZZ(-2 J dt) chain.
    The default observable is Z on the last qubit.
    """
    if n < 2:
        raise ValueError("the Ising chain needs n >= 2")
    if L < 1:
        raise ValueError("need at least one Trotter step")
    layer = [Gate("RX", (q,), 2 * h * dt) for q in range(n)]
    layer += [Gate("RZZ", (q, q + 1), -2 * J * dt) for q in range(n - 1)]
    obs = single_z(n, n - 1) if observable is None else observable
    if isinstance(obs, str):
        obs = PauliString(obs)
    return LayeredCircuit(n, [list(layer) for _ in range(L)], obs)


def build_ghz_metrology(n: int, theta: float) -> LayeredCircuit:
    """GHZ preparation followed by the RZ(theta) phase column, measured in X^n.

    Layer i holds CNOT(i, i+1); H joins the first layer and the RZ column the
    last. For n = 1 the single layer is H then RZ.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    layers: list[list[Gate]] = [[Gate("H", (0,))]] if n == 1 else [
        [Gate("CNOT", (i, i + 1))] for i in range(n - 1)
    ]
    if n > 1:
        layers[0].insert(0, Gate("H", (0,)))
    layers[-1].extend(Gate("RZ", (q,), theta) for q in range(n))
    return LayeredCircuit(n, layers, PauliString("X" * n))


def random_circuit(n: int, L: int, rng: np.random.Generator, gates_per_layer: int = 3) -> LayeredCircuit:
    """Random compiled circuit (rotations, H, CNOT) used by property tests."""
    layers = []
    for _ in range(L):
        layer = []
        for _ in range(gates_per_layer):
            kind = rng.choice(["RX", "RY", "RZ", "H", "CNOT"] if n > 1 else ["RX", "RY", "RZ", "H"])
            if kind == "CNOT":
                a, b = rng.choice(n, size=2, replace=False)
                layer.append(Gate("CNOT", (a, b)))
            else:
                layer.append(Gate(str(kind), (int(rng.integers(n)),), float(rng.uniform(-np.pi, np.pi))))
        layers.append(layer)
    letters = "".join(rng.choice(list("IXYZ"), size=n))
    if set(letters) == {"I"}:
        letters = "Z" + letters[1:]
    return LayeredCircuit(n, layers, PauliString(letters))


def random_noise(circuit: LayeredCircuit, rng: np.random.Generator, max_error: float = 0.02) -> LayeredCircuit:
    """Attach independent random Pauli channels (error rate <= max_error) to every gate."""
    from .noise import GateNoise
    from .pauli import PauliChannel

    noise = []
    for l, layer in enumerate(circuit.layers):
        row = []
        for g, gate in enumerate(layer):
            ch = PauliChannel.random(gate.arity, rng, max_error=max_error)
            row.append(GateNoise((l, g), ch, ch.error_rate))
        noise.append(row)
    return circuit.with_noise(noise)


def gate_counts(circuit: LayeredCircuit) -> dict[str, int]:
    counts: dict[str, int] = {}
    for _, _, gate in circuit.gates():
        counts[gate.kind] = counts.get(gate.kind, 0) + 1
    return counts

