"""Gate noise derived from T1/T2 decoherence, expressed as Pauli channels."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import TYPE_CHECKING

import numpy as np

from .pauli import PauliChannel, pauli_index

if TYPE_CHECKING:
    from .circuits import LayeredCircuit

# Baseline device (µs); scaled noise levels keep T2/T1 fixed.
BASELINE_T1 = 23.2357
BASELINE_T2 = 15.6
T1_GRID = (20.0, BASELINE_T1, 30.0, 40.0)


@dataclass(frozen=True)
class DecoherenceSpec:
    """Decoherence parameters. Times: T1/T2 in µs, gate times in ns."""

    t1: float = BASELINE_T1
    t2: float = BASELINE_T2
    single_gate_time: float = 18.0
    two_gate_time: float = 48.0
    fluctuation: float = 2e-5
    seed: int = 0

    def __post_init__(self):
        if not (self.t1 > 0 and self.t2 > 0):
            raise ValueError("T1 and T2 must be positive")
        if self.t2 > 2 * self.t1 * (1 + 1e-12):
            raise ValueError(f"unphysical T2={self.t2} > 2*T1={2 * self.t1}")
        if not (self.single_gate_time > 0 and self.two_gate_time > 0):
            raise ValueError("gate times must be positive")
        if self.fluctuation < 0:
            raise ValueError("fluctuation must be non-negative")

    @classmethod
    def scaled(cls, t1: float, **kwargs) -> "DecoherenceSpec":
        """Noise level with the baseline T2/T1 ratio."""
        return cls(t1=t1, t2=t1 * BASELINE_T2 / BASELINE_T1, **kwargs)

    @classmethod
    def noiseless(cls, **kwargs) -> "DecoherenceSpec":
        return cls(t1=math.inf, t2=math.inf, fluctuation=0.0, **kwargs)

    def with_seed(self, seed: int) -> "DecoherenceSpec":
        return replace(self, seed=int(seed))

    @property
    def is_noiseless(self) -> bool:
        return math.isinf(self.t1) and math.isinf(self.t2) and self.fluctuation == 0

    def to_json(self) -> dict:
        return {
            "t1_us": _finite_or_none(self.t1),
            "t2_us": _finite_or_none(self.t2),
            "t1q_ns": self.single_gate_time,
            "t2q_ns": self.two_gate_time,
            "fluctuation": self.fluctuation,
            "seed": self.seed,
        }

    @classmethod
    def from_json(cls, data: dict) -> "DecoherenceSpec":
        def _time(key):
            value = data.get(key)
            return math.inf if value is None else float(value)

        return cls(
            t1=_time("t1_us"),
            t2=_time("t2_us"),
            single_gate_time=float(data.get("t1q_ns", 18.0)),
            two_gate_time=float(data.get("t2q_ns", 48.0)),
            fluctuation=float(data.get("fluctuation", 2e-5)),
            seed=int(data.get("seed", 0)),
        )


def _finite_or_none(x: float):
    return None if math.isinf(x) else x


@dataclass(frozen=True)
class GateNoise:
    gate_id: tuple[int, int]
    channel: PauliChannel
    p: float


def single_qubit_rates(spec: DecoherenceSpec, t: float) -> tuple[float, float, float]:
    """Pauli-twirled amplitude/phase damping rates ``(p_X, p_Y, p_Z)`` for gate time ``t`` (ns)."""
    if t <= 0:
        raise ValueError("gate time must be positive")
    t_us = t * 1e-3
    decay1 = -math.expm1(-t_us / spec.t1)
    decay2 = -math.expm1(-t_us / spec.t2)
    p_xy = decay1 / 4
    p_z = decay2 / 2 - decay1 / 4
    if p_z < -1e-15:
        raise ValueError("negative p_Z: T2 exceeds 2*T1")
    return p_xy, p_xy, max(p_z, 0.0)


def total_error(rates) -> float:
    return float(sum(rates))


def single_qubit_channel(spec: DecoherenceSpec, t: float | None = None) -> PauliChannel:
    px, py, pz = single_qubit_rates(spec, spec.single_gate_time if t is None else t)
    return PauliChannel(1, [1 - px - py - pz, px, py, pz])


def two_qubit_channel(spec: DecoherenceSpec, t: float | None = None) -> PauliChannel:
    """Uncorrelated two-qubit Pauli channel at the two-qubit gate time.

    Note the weight-two terms follow the product table exactly, including
    the cross terms ``p_X p_Y`` for XY/YX.
    """
    px, py, pz = single_qubit_rates(spec, spec.two_gate_time if t is None else t)
    keep = 1 - px - py - pz
    terms = {
        "IX": px * keep, "XI": px * keep, "IY": py * keep, "YI": py * keep,
        "XX": px * py, "XY": px * py, "YY": px * py, "YX": px * py,
        "XZ": px * pz, "ZX": px * pz, "YZ": px * pz, "ZY": px * pz,
        "IZ": pz * keep, "ZI": pz * keep,
        "ZZ": pz * pz,
    }
    coeffs = np.zeros(16)
    for label, weight in terms.items():
        coeffs[pauli_index(label)] = weight
    coeffs[0] = 1.0 - coeffs[1:].sum()
    return PauliChannel(2, coeffs)


def table_row(t1: float, t2: float, t: float = 48.0) -> tuple[float, float]:
    """Total single- and two-qubit Pauli error rates reported for a noise level.

    Both are evaluated at the same gate time, as the printed error-rate
    table does: ``sum p`` and ``1 - (1 - sum p)^2``.
    """
    total = total_error(single_qubit_rates(DecoherenceSpec(t1=t1, t2=t2), t))
    return total, 1.0 - (1.0 - total) ** 2


def jitter(channel: PauliChannel, amplitude: float, rng: np.random.Generator) -> PauliChannel:
    """Perturb each non-identity probability by U[-a, a], clamp at 0, renormalize on identity."""
    if amplitude == 0:
        return channel
    coeffs = channel.coeffs.copy()
    coeffs[1:] = np.clip(coeffs[1:] + rng.uniform(-amplitude, amplitude, coeffs.size - 1), 0.0, None)
    coeffs[0] = 1.0 - coeffs[1:].sum()
    return PauliChannel(channel.n, coeffs)


def attach_noise(circuit: "LayeredCircuit", spec: DecoherenceSpec) -> "LayeredCircuit":
    """Compile ``circuit`` and give every gate its own jittered Pauli channel.

    Noise acts right after its gate. Draws are consumed in gate order from a
    generator seeded by ``spec.seed``.
    """
    compiled = circuit.compile()
    rng = np.random.default_rng(spec.seed)
    base = {1: single_qubit_channel(spec), 2: two_qubit_channel(spec)}
    noise = []
    for l, layer in enumerate(compiled.layers):
        row = []
        for g, gate in enumerate(layer):
            channel = jitter(base[len(gate.qubits)], spec.fluctuation, rng)
            row.append(GateNoise((l, g), channel, channel.error_rate))
        noise.append(row)
    return compiled.with_noise(noise)
