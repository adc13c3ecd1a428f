"""Execution-cost proxy: each circuit instance costs 1000 units plus its shots."""

from __future__ import annotations

from dataclasses import dataclass

SHOTS = 8192
COMPILE_COST = 1000


@dataclass(frozen=True)
class OverheadLedger:
    method: str
    circuit_instances: int
    total_shots: int

    def __post_init__(self):
        if self.circuit_instances < 0 or self.total_shots < 0:
            raise ValueError("ledger entries must be non-negative")

    @property
    def shots_per_instance(self) -> float:
        return self.total_shots / self.circuit_instances if self.circuit_instances else 0.0

    @property
    def total(self) -> int:
        return COMPILE_COST * self.circuit_instances + self.total_shots

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "circuit_instances": self.circuit_instances,
            "total_shots": self.total_shots,
            "total": self.total,
        }


def noisy_ledger() -> OverheadLedger:
    return OverheadLedger("noisy", 0, 0)


def ml_ledger(shots: int = SHOTS) -> OverheadLedger:
    """A learned mitigator needs one noisy circuit run per prediction."""
    return OverheadLedger("ml", 1, shots)
