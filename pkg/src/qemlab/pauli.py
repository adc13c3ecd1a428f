"""Pauli-string algebra and channel representations.

Conventions used throughout the package:

* Pauli indices are base-4 little-endian. Digit ``q`` of an index is the
  letter acting on qubit ``q`` with ``I=0, X=1, Y=2, Z=3``; ``I^{⊗n}`` has
  index 0.
* Dense operators use the same ordering, so qubit 0 is the rightmost factor
  of every Kronecker product.
* A PTM is a real ``4^n x 4^n`` ndarray with entry ``(i, j) = Tr[P_i A(P_j)] / 2^n``.
  Composition is right-to-left: ``compose(a, b) = a @ b`` applies ``b`` first.
* Choi matrices are ``C = 4^{-n} sum_ij R_ij P_j^T ⊗ P_i``. With this
  normalization a trace-preserving channel has ``Tr C = 1`` and the identity
  channel maps to the projector onto the maximally entangled state.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np

LETTERS = "IXYZ"

MAX_PAULI_QUBITS = 6
MAX_DENSE_QUBITS = 3

_SINGLE = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)


def pauli_index(letters: str) -> int:
    """Index of a Pauli string; ``letters[q]`` acts on qubit ``q``."""
    index = 0
    for q, letter in enumerate(letters.upper()):
        if letter not in LETTERS:
            raise ValueError(f"invalid Pauli letter {letter!r}")
        index += LETTERS.index(letter) * 4**q
    return index


def pauli_letters(index: int, n: int) -> str:
    if not 0 <= index < 4**n:
        raise ValueError(f"index {index} out of range for {n} qubits")
    return "".join(LETTERS[(index // 4**q) % 4] for q in range(n))


def pauli_digits(index: int, n: int) -> list[int]:
    return [(index // 4**q) % 4 for q in range(n)]


@dataclass(frozen=True)
class PauliString:
    """An n-qubit Pauli operator without phase."""

    letters: str

    def __post_init__(self):
        object.__setattr__(self, "letters", self.letters.upper())
        pauli_index(self.letters)

    @classmethod
    def from_index(cls, index: int, n: int) -> "PauliString":
        return cls(pauli_letters(index, n))

    @property
    def n(self) -> int:
        return len(self.letters)

    @property
    def index(self) -> int:
        return pauli_index(self.letters)

    def matrix(self) -> np.ndarray:
        return pauli_matrix(self.index, self.n)

    def commutes(self, other: "PauliString") -> bool:
        if other.n != self.n:
            raise ValueError("Pauli strings act on different qubit counts")
        return bool(commutation_signs(self.n)[self.index, other.index] > 0)

    def __str__(self) -> str:
        return self.letters


@functools.lru_cache(maxsize=None)
def _xz_bits(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Symplectic (x, z) bit masks for every index on n qubits."""
    idx = np.arange(4**n)
    x = np.zeros(4**n, dtype=np.int64)
    z = np.zeros(4**n, dtype=np.int64)
    for q in range(n):
        digit = (idx >> (2 * q)) & 3
        x |= ((digit == 1) | (digit == 2)).astype(np.int64) << q
        z |= ((digit == 2) | (digit == 3)).astype(np.int64) << q
    x.setflags(write=False)
    z.setflags(write=False)
    return x, z


@functools.lru_cache(maxsize=None)
def _xz_to_index(n: int) -> np.ndarray:
    x, z = _xz_bits(n)
    table = np.empty(4**n, dtype=np.int64)
    table[x | (z << n)] = np.arange(4**n)
    table.setflags(write=False)
    return table


def pauli_product_index(a, b, n: int):
    """Index of ``P_a P_b`` up to phase. Works elementwise on arrays."""
    x, z = _xz_bits(n)
    a = np.asarray(a)
    b = np.asarray(b)
    key = (x[a] ^ x[b]) | ((z[a] ^ z[b]) << n)
    out = _xz_to_index(n)[key]
    return int(out) if out.ndim == 0 else out


def _popcount_parity(v: np.ndarray) -> np.ndarray:
    v = v.copy()
    parity = np.zeros_like(v)
    while np.any(v):
        parity ^= v & 1
        v >>= 1
    return parity


@functools.lru_cache(maxsize=8)
def commutation_signs(n: int) -> np.ndarray:
    """Matrix ``S[a, b] = +1`` if ``P_a`` and ``P_b`` commute, else ``-1``."""
    if n > MAX_PAULI_QUBITS:
        raise ValueError(f"{n} qubits exceeds the Pauli cap of {MAX_PAULI_QUBITS}")
    x, z = _xz_bits(n)
    sym = (x[:, None] & z[None, :]) ^ (z[:, None] & x[None, :])
    signs = (1 - 2 * _popcount_parity(sym)).astype(np.int8)
    signs.setflags(write=False)
    return signs


def pauli_matrix(index: int, n: int) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for digit in reversed(pauli_digits(index, n)):
        out = np.kron(out, _SINGLE[digit])
    return out


@functools.lru_cache(maxsize=8)
def pauli_basis(n: int) -> np.ndarray:
    """Stack of all ``4^n`` Pauli matrices, shape ``(4^n, 2^n, 2^n)``."""
    if n > MAX_DENSE_QUBITS + 1:
        raise ValueError(f"dense Pauli basis for {n} qubits is too large")
    basis = np.ones((1, 1, 1), dtype=complex)
    for _ in range(n):
        # new qubit becomes the most significant digit and the leftmost factor
        basis = np.einsum("aij,bkl->bakilj", basis, _SINGLE).reshape(
            4 * basis.shape[0], 2 * basis.shape[1], 2 * basis.shape[2]
        )
    basis.setflags(write=False)
    return basis


class PauliMap:
    """Diagonal-in-Pauli linear map ``rho -> sum_i c_i P_i rho P_i``.

    Coefficients may be signed, which is what quasi-probability inverses
    need. :class:`PauliChannel` adds the probability constraints.
    """

    def __init__(self, n: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if n < 1:
            raise ValueError("a Pauli map needs at least one qubit")
        if n > MAX_PAULI_QUBITS:
            raise ValueError(f"{n} qubits exceeds the Pauli cap of {MAX_PAULI_QUBITS}")
        if coeffs.shape != (4**n,):
            raise ValueError(f"expected {4**n} coefficients, got shape {coeffs.shape}")
        coeffs = coeffs.copy()
        coeffs.setflags(write=False)
        self.n = n
        self.coeffs = coeffs

    @classmethod
    def from_terms(cls, terms: Mapping[Union[str, int], float], n: int | None = None):
        """Build from ``{"XZ": 0.1, ...}`` or ``{index: weight}``; absent terms are 0."""
        if n is None:
            labels = [t for t in terms if isinstance(t, str)]
            if not labels:
                raise ValueError("qubit count required when terms are given by index")
            n = len(labels[0])
        coeffs = np.zeros(4**n)
        for key, weight in terms.items():
            idx = pauli_index(key) if isinstance(key, str) else int(key)
            coeffs[idx] += weight
        return cls(n, coeffs)

    @classmethod
    def identity(cls, n: int):
        coeffs = np.zeros(4**n)
        coeffs[0] = 1.0
        return cls(n, coeffs)

    def fidelities(self) -> np.ndarray:
        """Diagonal of the PTM: ``f_a = sum_i c_i s(i, a)``."""
        return commutation_signs(self.n).T.astype(float) @ self.coeffs

    @classmethod
    def from_fidelities(cls, fidelities, n: int):
        # the sign matrix is symmetric and squares to 4^n I
        signs = commutation_signs(n).astype(float)
        return cls(n, signs @ np.asarray(fidelities, dtype=float) / 4**n)

    def compose(self, other: "PauliMap") -> "PauliMap":
        """``self ∘ other``. Pauli maps commute, so the order is immaterial."""
        if other.n != self.n:
            raise ValueError("qubit count mismatch")
        return PauliMap(self.n, _from_fids(self.fidelities() * other.fidelities(), self.n))

    def tensor(self, other: "PauliMap") -> "PauliMap":
        """``self ⊗ other`` with ``self`` on the low qubits."""
        coeffs = np.outer(other.coeffs, self.coeffs).ravel()
        return PauliMap(self.n + other.n, coeffs)

    def embed(self, qubits: Sequence[int], n: int) -> "PauliMap":
        """Place this map's qubit ``j`` on register qubit ``qubits[j]``."""
        if len(qubits) != self.n or len(set(qubits)) != self.n:
            raise ValueError("embedding needs one distinct target qubit per map qubit")
        coeffs = np.zeros(4**n)
        for local in np.flatnonzero(self.coeffs):
            target = sum(d * 4**q for d, q in zip(pauli_digits(int(local), self.n), qubits))
            coeffs[target] = self.coeffs[local]
        return PauliMap(n, coeffs)

    def ptm(self) -> np.ndarray:
        return np.diag(self.fidelities())

    def superoperator(self) -> np.ndarray:
        """Row-major vectorized superoperator ``sum_i c_i P_i ⊗ conj(P_i)``."""
        d = 2**self.n
        basis = pauli_basis(self.n)
        out = np.einsum("i,iab,icd->acbd", self.coeffs, basis, basis.conj(), optimize=True)
        return out.reshape(d * d, d * d)

    def __repr__(self) -> str:
        terms = {
            pauli_letters(int(i), self.n): round(float(self.coeffs[i]), 12)
            for i in np.flatnonzero(self.coeffs)
        }
        return f"{type(self).__name__}(n={self.n}, {terms})"


def _from_fids(fids: np.ndarray, n: int) -> np.ndarray:
    return commutation_signs(n).astype(float) @ fids / 4**n


class PauliChannel(PauliMap):
    """Probability-weighted mixture of Pauli conjugations."""

    def __init__(self, n: int, coeffs, atol: float = 1e-12):
        super().__init__(n, coeffs)
        if np.any(self.coeffs < -atol):
            raise ValueError("Pauli channel probabilities must be non-negative")
        if abs(self.coeffs.sum() - 1.0) > atol:
            raise ValueError(f"Pauli channel probabilities sum to {self.coeffs.sum()!r}, not 1")

    @classmethod
    def random(cls, n: int, rng: np.random.Generator, max_error: float = 1.0):
        """Random channel whose total non-identity weight is at most ``max_error``."""
        err = rng.uniform(0, max_error)
        w = rng.exponential(size=4**n - 1)
        coeffs = np.concatenate([[1.0 - err], err * w / w.sum()])
        coeffs[0] = 1.0 - coeffs[1:].sum()
        return cls(n, coeffs)

    @property
    def error_rate(self) -> float:
        return float(1.0 - self.coeffs[0])

    def compose(self, other: PauliMap) -> PauliMap:
        out = super().compose(other)
        if isinstance(other, PauliChannel):
            coeffs = np.clip(out.coeffs, 0.0, None)
            return PauliChannel(self.n, coeffs / coeffs.sum())
        return out

    def tensor(self, other: PauliMap) -> PauliMap:
        out = super().tensor(other)
        return PauliChannel(out.n, out.coeffs) if isinstance(other, PauliChannel) else out

    def embed(self, qubits: Sequence[int], n: int) -> "PauliChannel":
        out = super().embed(qubits, n)
        coeffs = out.coeffs.copy()
        coeffs[0] += 1.0 - coeffs.sum()
        return PauliChannel(n, coeffs)


Channel = Union[PauliMap, Sequence[np.ndarray], np.ndarray]


def _num_qubits(dim: int, base: int) -> int:
    n = int(round(np.log(dim) / np.log(base)))
    if base**n != dim:
        raise ValueError(f"dimension {dim} is not a power of {base}")
    return n


def ptm_from_channel(channel: Channel, max_qubits: int | None = None) -> np.ndarray:
    """Pauli transfer matrix of a Pauli map or a set of Kraus operators.

    A single 2-D array is treated as one Kraus operator (a unitary channel).
    """
    if isinstance(channel, PauliMap):
        cap = MAX_PAULI_QUBITS if max_qubits is None else max_qubits
        if channel.n > cap:
            raise ValueError(f"{channel.n} qubits exceeds the cap of {cap}")
        return channel.ptm()

    kraus = np.asarray(channel, dtype=complex)
    if kraus.ndim == 2:
        kraus = kraus[None]
    if kraus.ndim != 3 or kraus.shape[1] != kraus.shape[2]:
        raise ValueError("Kraus operators must be square matrices of equal size")
    n = _num_qubits(kraus.shape[1], 2)
    cap = MAX_DENSE_QUBITS if max_qubits is None else max_qubits
    if n > cap:
        raise ValueError(f"{n} qubits exceeds the dense cap of {cap}")
    basis = pauli_basis(n)
    # A_j = sum_k K P_j K^dagger, then R_ij = Tr[P_i A_j] / d
    images = np.einsum("kab,jbc,kdc->jad", kraus, basis, kraus.conj(), optimize=True)
    ptm = np.einsum("iab,jba->ij", basis, images, optimize=True) / 2**n
    return ptm.real.copy()


def ptm_from_unitary(unitary: np.ndarray, max_qubits: int | None = None) -> np.ndarray:
    return ptm_from_channel(np.asarray(unitary)[None], max_qubits=max_qubits)


def choi_from_ptm(ptm: np.ndarray) -> np.ndarray:
    ptm = np.asarray(ptm, dtype=float)
    n = _num_qubits(ptm.shape[0], 4)
    if ptm.shape != (4**n, 4**n):
        raise ValueError("PTM must be square with side 4^n")
    basis = pauli_basis(n)
    d = 2**n
    # C[(a,b),(c,e)] = 4^{-n} sum_ij R_ij P_j^T[a,c] P_i[b,e]
    left = np.tensordot(ptm, basis.transpose(0, 2, 1), axes=(1, 0))  # (i, a, c)
    choi = np.einsum("iac,ibe->abce", left, basis, optimize=True).reshape(d * d, d * d)
    return choi / 4**n


def ptm_from_choi(choi: np.ndarray) -> np.ndarray:
    choi = np.asarray(choi)
    n = _num_qubits(choi.shape[0], 4)
    basis = pauli_basis(n)
    d = 2**n
    c = choi.reshape(d, d, d, d)
    # R_ij = Tr[C (P_j^T ⊗ P_i)]
    ptm = np.einsum("abce,jac,ieb->ij", c, basis, basis, optimize=True)
    return ptm.real.copy()


def _min_choi_eig(choi: np.ndarray) -> float:
    herm = 0.5 * (choi + choi.conj().T)
    return float(np.linalg.eigvalsh(herm)[0])


def is_cptp(ptm: np.ndarray, tol: float = 1e-10) -> tuple[bool, dict]:
    """Check complete positivity and trace preservation of a PTM.

    Returns:
        ``(ok, diagnostics)`` where diagnostics holds the Choi minimum
        eigenvalue and the largest deviation of row 0 from ``e_0``.
    """
    ptm = np.asarray(ptm, dtype=float)
    unit = np.zeros(ptm.shape[1])
    unit[0] = 1.0
    tp_dev = float(np.max(np.abs(ptm[0] - unit)))
    min_eig = _min_choi_eig(choi_from_ptm(ptm))
    cp = min_eig >= -tol
    tp = tp_dev <= tol
    return cp and tp, {"cp": cp, "tp": tp, "min_choi_eig": min_eig, "tp_deviation": tp_dev}


@dataclass(frozen=True)
class MNDResult:
    """``E = (1 - p) I + p Λ`` with the smallest admissible ``p``.

    ``coherent`` marks the degenerate case where no identity component can
    be split off (``p = 1``, ``effective`` is the input itself).
    """

    p: float
    effective: Union[PauliChannel, np.ndarray]
    coherent: bool = False

    def reconstruct(self) -> np.ndarray:
        eff = self.effective
        lam = eff.ptm() if isinstance(eff, PauliMap) else np.asarray(eff)
        return (1.0 - self.p) * np.eye(lam.shape[0]) + self.p * lam


def mnd(channel: Union[PauliChannel, np.ndarray], tol: float = 1e-12) -> MNDResult:
    """Maximum noise decomposition.

    Pauli channels take the closed form ``p = 1 - δ_0``. A general PTM is
    decomposed by bisecting on ``p`` for the smallest value that keeps the
    Choi matrix of ``E - (1 - p) I`` positive semidefinite.
    """
    if isinstance(channel, PauliMap):
        if not isinstance(channel, PauliChannel):
            channel = PauliChannel(channel.n, channel.coeffs)
        p = channel.error_rate
        if p <= 0.0:
            return MNDResult(0.0, PauliChannel.identity(channel.n))
        rest = channel.coeffs.copy()
        rest[0] = 0.0
        rest /= rest.sum()
        rest[0] = 1.0 - rest.sum()
        return MNDResult(p, PauliChannel(channel.n, rest), coherent=p >= 1.0)

    ptm = np.asarray(channel, dtype=float)
    ok, diag = is_cptp(ptm, tol=1e-9)
    if not ok:
        raise ValueError(f"MND needs a CPTP channel: {diag}")
    eye = np.eye(ptm.shape[0])
    if np.max(np.abs(ptm - eye)) < 1e-14:
        return MNDResult(0.0, eye)

    choi_e = choi_from_ptm(ptm)
    omega = choi_from_ptm(eye)

    def admissible(p: float) -> bool:
        return _min_choi_eig(choi_e - (1.0 - p) * omega) >= -1e-14

    if admissible(0.0):
        return MNDResult(0.0, eye)
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if admissible(mid):
            hi = mid
        else:
            lo = mid
    if hi >= 1.0 - tol:
        return MNDResult(1.0, ptm, coherent=True)
    effective = (ptm - (1.0 - hi) * eye) / hi
    return MNDResult(hi, effective)


def compose(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """PTM of ``a ∘ b`` (``b`` acts first)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ValueError(f"PTM shape mismatch: {a.shape} vs {b.shape}")
    return a @ b


def conjugate(u: np.ndarray, e: np.ndarray) -> np.ndarray:
    """``u ∘ e ∘ u^{-1}`` for a unitary's PTM ``u``."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(e, dtype=float)
    if u.shape != e.shape:
        raise ValueError(f"PTM shape mismatch: {u.shape} vs {e.shape}")
    if np.allclose(u.T @ u, np.eye(u.shape[0]), atol=1e-10):
        inv = u.T
    else:
        if abs(np.linalg.det(u)) < 1e-12:
            raise ValueError("cannot conjugate by a singular PTM")
        inv = np.linalg.inv(u)
    return u @ e @ inv


def effectiveness_of_layer(factors: Sequence[float]) -> float:
    """Layer effectiveness factor ``1 - prod_d (1 - p_d)`` from per-gate factors."""
    factors = np.asarray(list(factors), dtype=float)
    if np.any((factors < 0) | (factors > 1)):
        raise ValueError("per-gate effectiveness factors must lie in [0, 1]")
    return float(1.0 - np.prod(1.0 - factors))
