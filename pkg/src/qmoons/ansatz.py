"""Layered RY/RZ/CNOT ansatz and its Jacobian.

Each sublayer applies RY to every qubit, then RZ to every qubit, then a
linear CNOT chain ``(0,1), (1,2), ..., (n-2,n-1)``.  The flat angle vector
holds, per sublayer, ``n`` RY angles followed by ``n`` RZ angles.

Every evaluation function also accepts a stack of parameter vectors with
shape ``(..., param_count)`` and evaluates them all at once.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .statevector import (
    GateOp,
    StateVector,
    apply_gates,
    cnot_kernel,
    expectation_z,
    ry_kernel,
    rz_kernel,
    z_expectations,
    zero_state,
)

SHIFT = np.pi / 2


@dataclass(frozen=True)
class AnsatzSpec:
    n_qubits: int
    n_sublayers: int

    def __post_init__(self):
        if self.n_qubits < 1 or self.n_sublayers < 1:
            raise ValueError(
                f"n_qubits and n_sublayers must be positive, got {self.n_qubits}, {self.n_sublayers}"
            )

    @property
    def param_count(self) -> int:
        return param_count(self)


def param_count(spec: AnsatzSpec) -> int:
    return 2 * spec.n_qubits * spec.n_sublayers


def _check_params(spec: AnsatzSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim == 0 or params.shape[-1] != param_count(spec):
        raise ValueError(
            f"expected {param_count(spec)} angles for {spec}, got shape {params.shape}"
        )
    return params


def gate_list(spec: AnsatzSpec, params) -> list[GateOp]:
    """The circuit as an explicit gate sequence (single parameter vector only)."""
    params = _check_params(spec, params)
    if params.ndim != 1:
        raise ValueError("gate_list takes a single parameter vector")
    n = spec.n_qubits
    gates = []
    for layer in range(spec.n_sublayers):
        base = 2 * n * layer
        gates += [GateOp("RY", q, angle=float(params[base + q])) for q in range(n)]
        gates += [GateOp("RZ", q, angle=float(params[base + n + q])) for q in range(n)]
        gates += [GateOp("CNOT", q + 1, control=q) for q in range(n - 1)]
    return gates


def circuit_text(spec: AnsatzSpec, params) -> str:
    """One gate per line: ``RY q theta``, ``RZ q theta`` or ``CNOT c t``."""
    return "".join(f"{g}\n" for g in gate_list(spec, params))


def _simulate(spec: AnsatzSpec, params: np.ndarray) -> np.ndarray:
    n = spec.n_qubits
    amps = np.zeros(params.shape[:-1] + (1 << n,), dtype=np.complex128)
    amps[..., 0] = 1.0
    for layer in range(spec.n_sublayers):
        base = 2 * n * layer
        for q in range(n):
            ry_kernel(amps, q, params[..., base + q])
        for q in range(n):
            rz_kernel(amps, q, params[..., base + n + q])
        for q in range(n - 1):
            cnot_kernel(amps, q, q + 1)
    return amps


def run_ansatz(spec: AnsatzSpec, params) -> StateVector:
    params = _check_params(spec, params)
    if params.ndim != 1:
        raise ValueError("run_ansatz takes a single parameter vector; use expectations for batches")
    return StateVector(spec.n_qubits, _simulate(spec, params))


def expectations(spec: AnsatzSpec, params) -> np.ndarray:
    """Per-qubit <Z> of the ansatz state, shape ``(..., n_qubits)``."""
    params = _check_params(spec, params)
    return np.clip(z_expectations(_simulate(spec, params)), -1.0, 1.0)


def _shifted(params: np.ndarray, step: float) -> np.ndarray:
    # (..., 2m, m): rows 0..m-1 shifted by +step, rows m..2m-1 by -step
    m = params.shape[-1]
    eye = np.eye(m) * step
    offsets = np.concatenate([eye, -eye], axis=0)
    return params[..., None, :] + offsets


def jacobian(spec: AnsatzSpec, params) -> np.ndarray:
    """d<Z_i>/d theta_j by the parameter-shift rule, shape ``(..., n_qubits, param_count)``.

    Exact for these gates because each angle enters a single rotation with
    a Pauli generator.
    """
    params = _check_params(spec, params)
    m = params.shape[-1]
    values = z_expectations(_simulate(spec, _shifted(params, SHIFT)))  # (..., 2m, n)
    return np.swapaxes((values[..., :m, :] - values[..., m:, :]) / 2.0, -1, -2)


def _expectations_gatewise(spec: AnsatzSpec, params: np.ndarray) -> np.ndarray:
    state = apply_gates(zero_state(spec.n_qubits), gate_list(spec, params))
    return np.array([expectation_z(state, q) for q in range(spec.n_qubits)])


def jacobian_fd(spec: AnsatzSpec, params, h: float = 1e-5) -> np.ndarray:
    """Central finite-difference Jacobian; test oracle for :func:`jacobian`.

    Runs gate by gate through the scalar state API, one parameter vector at
    a time, so it shares no code with the batched evaluation path.
    """
    if h <= 0:
        raise ValueError(f"step must be positive, got {h}")
    params = _check_params(spec, params)
    if params.ndim > 1:
        return np.stack([jacobian_fd(spec, p, h) for p in params])
    jac = np.empty((spec.n_qubits, params.size))
    for j in range(params.size):
        up, down = params.copy(), params.copy()
        up[j] += h
        down[j] -= h
        jac[:, j] = (_expectations_gatewise(spec, up) - _expectations_gatewise(spec, down)) / (2 * h)
    return jac
