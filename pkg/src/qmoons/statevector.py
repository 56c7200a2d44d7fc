"""Dense statevector simulation for RY, RZ and CNOT.

Qubit ``q`` is bit ``q`` of the basis-state index (qubit 0 is the least
significant bit).  Kernels accept amplitude arrays with arbitrary leading
batch axes, shape ``(..., 2**n)``, and update them in place.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Optional

import numpy as np

MAX_QUBITS = 24
ORACLE_MAX_QUBITS = 5

GATE_KINDS = ("RY", "RZ", "CNOT")


@dataclass
class StateVector:
    n_qubits: int
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape[-1] != 1 << self.n_qubits:
            raise ValueError(
                f"expected {1 << self.n_qubits} amplitudes for {self.n_qubits} qubits, "
                f"got {self.amplitudes.shape[-1]}"
            )

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())

    def norm_squared(self) -> float:
        return float(np.sum(np.abs(self.amplitudes) ** 2))

    def dump(self) -> str:
        """Text dump, one ``index_binary re im`` line per amplitude."""
        lines = []
        for k, a in enumerate(self.amplitudes):
            lines.append(f"{k:0{self.n_qubits}b} {float(a.real)!r} {float(a.imag)!r}")
        return "\n".join(lines) + "\n"

    @classmethod
    def parse(cls, text: str) -> "StateVector":
        rows = [line.split() for line in text.splitlines() if line.strip()]
        if not rows:
            raise ValueError("empty state dump")
        n = len(rows[0][0])
        amps = np.zeros(1 << n, dtype=np.complex128)
        for lineno, row in enumerate(rows, start=1):
            if len(row) != 3 or len(row[0]) != n:
                raise ValueError(f"line {lineno}: malformed state dump row")
            amps[int(row[0], 2)] = complex(float(row[1]), float(row[2]))
        return cls(n, amps)


@dataclass(frozen=True)
class GateOp:
    kind: str
    target: int
    control: Optional[int] = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ValueError("CNOT requires a control qubit")
            if self.control == self.target:
                raise ValueError("CNOT control and target must differ")

    def validate(self, n_qubits: int) -> None:
        _check_qubit(self.target, n_qubits)
        if self.control is not None:
            _check_qubit(self.control, n_qubits)

    def __str__(self) -> str:
        if self.kind == "CNOT":
            return f"CNOT {self.control} {self.target}"
        return f"{self.kind} {self.target} {self.angle!r}"


def _check_qubit(q: int, n_qubits: int) -> None:
    if not 0 <= q < n_qubits:
        raise IndexError(f"qubit {q} out of range for {n_qubits} qubits")


def _n_qubits_of(amps: np.ndarray) -> int:
    return int(amps.shape[-1]).bit_length() - 1


def _split(amps: np.ndarray, q: int) -> np.ndarray:
    # (..., high, bit q, low) view of the amplitude axis
    n = _n_qubits_of(amps)
    return amps.reshape(amps.shape[:-1] + (1 << (n - q - 1), 2, 1 << q))


def _angle(theta) -> np.ndarray:
    # per-batch angles broadcast against the (high, low) axes
    theta = np.asarray(theta, dtype=np.float64)
    return theta.reshape(theta.shape + (1, 1))


@lru_cache(maxsize=None)
def _cnot_pairs(n: int, control: int, target: int) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(1 << n)
    sel = idx[((idx >> control) & 1 == 1) & ((idx >> target) & 1 == 0)]
    return sel, sel | (1 << target)


@lru_cache(maxsize=None)
def _z_signs(n: int) -> np.ndarray:
    idx = np.arange(1 << n)
    return 1.0 - 2.0 * ((idx[:, None] >> np.arange(n)) & 1)


def ry_kernel(amps: np.ndarray, q: int, theta) -> np.ndarray:
    """RY on qubit ``q`` in place. ``theta`` is a scalar or has the batch shape."""
    view = _split(amps, q)
    half = _angle(theta) / 2.0
    c, s = np.cos(half), np.sin(half)
    a0 = view[..., 0, :].copy()
    a1 = view[..., 1, :]
    view[..., 0, :] = c * a0 - s * a1
    view[..., 1, :] = s * a0 + c * a1
    return amps


def rz_kernel(amps: np.ndarray, q: int, theta) -> np.ndarray:
    view = _split(amps, q)
    half = _angle(theta) / 2.0
    view[..., 0, :] *= np.exp(-1j * half)
    view[..., 1, :] *= np.exp(1j * half)
    return amps


def cnot_kernel(amps: np.ndarray, control: int, target: int) -> np.ndarray:
    sel, partner = _cnot_pairs(_n_qubits_of(amps), control, target)
    tmp = amps[..., sel].copy()
    amps[..., sel] = amps[..., partner]
    amps[..., partner] = tmp
    return amps


def z_expectations(amps: np.ndarray) -> np.ndarray:
    """All per-qubit <Z> values, shape ``(..., n)``."""
    probs = amps.real**2 + amps.imag**2
    return probs @ _z_signs(_n_qubits_of(amps))


def zero_state(n_qubits: int) -> StateVector:
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ValueError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}")
    amps = np.zeros(1 << n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def apply_ry(state: StateVector, q: int, theta: float) -> StateVector:
    _check_qubit(q, state.n_qubits)
    ry_kernel(state.amplitudes, q, theta)
    return state


def apply_rz(state: StateVector, q: int, theta: float) -> StateVector:
    _check_qubit(q, state.n_qubits)
    rz_kernel(state.amplitudes, q, theta)
    return state


def apply_cnot(state: StateVector, control: int, target: int) -> StateVector:
    if control == target:
        raise ValueError("CNOT control and target must differ")
    _check_qubit(control, state.n_qubits)
    _check_qubit(target, state.n_qubits)
    cnot_kernel(state.amplitudes, control, target)
    return state


def apply_gate(state: StateVector, gate: GateOp) -> StateVector:
    gate.validate(state.n_qubits)
    if gate.kind == "RY":
        return apply_ry(state, gate.target, gate.angle)
    if gate.kind == "RZ":
        return apply_rz(state, gate.target, gate.angle)
    return apply_cnot(state, gate.control, gate.target)


def apply_gates(state: StateVector, gates: Iterable[GateOp]) -> StateVector:
    for gate in gates:
        apply_gate(state, gate)
    return state


def expectation_z(state: StateVector, q: int) -> float:
    _check_qubit(q, state.n_qubits)
    probs = np.abs(state.amplitudes) ** 2
    bit = (np.arange(1 << state.n_qubits) >> q) & 1
    value = float(np.sum(probs[bit == 0]) - np.sum(probs[bit == 1]))
    return min(1.0, max(-1.0, value))


# dense oracle


def _single_qubit_matrix(gate: GateOp) -> np.ndarray:
    half = gate.angle / 2.0
    if gate.kind == "RY":
        c, s = np.cos(half), np.sin(half)
        return np.array([[c, -s], [s, c]], dtype=np.complex128)
    return np.diag([np.exp(-1j * half), np.exp(1j * half)])


def dense_unitary(gate: GateOp, n_qubits: int) -> np.ndarray:
    """Full ``2**n x 2**n`` matrix of ``gate``."""
    if n_qubits > ORACLE_MAX_QUBITS:
        raise ValueError(f"dense oracle supports at most {ORACLE_MAX_QUBITS} qubits")
    gate.validate(n_qubits)
    dim = 1 << n_qubits
    if gate.kind == "CNOT":
        perm = np.zeros((dim, dim), dtype=np.complex128)
        for k in range(dim):
            j = k ^ (1 << gate.target) if (k >> gate.control) & 1 else k
            perm[j, k] = 1.0
        return perm
    # kron order puts the most significant qubit first
    op = np.ones((1, 1), dtype=np.complex128)
    for q in reversed(range(n_qubits)):
        block = _single_qubit_matrix(gate) if q == gate.target else np.eye(2)
        op = np.kron(op, block)
    return op


def oracle_apply(state: StateVector, gate: GateOp) -> StateVector:
    """Apply ``gate`` by explicit dense matrix-vector product (returns a new state)."""
    if state.n_qubits > ORACLE_MAX_QUBITS:
        raise ValueError(f"dense oracle supports at most {ORACLE_MAX_QUBITS} qubits")
    u = dense_unitary(gate, state.n_qubits)
    return StateVector(state.n_qubits, u @ state.amplitudes)
