"""Two-qubit statevector simulation of the one-query parity circuit.

Basis ordering is |control, target>: index = 2*control + target.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

BooleanFunction = Callable[[int], int]

_S = 1.0 / np.sqrt(2.0)
H = _S * np.array([[1, 1], [1, -1]], dtype=complex)
G = _S * np.array([[1, 1], [-1, 1]], dtype=complex)
P = _S * np.array([[1, -1], [-1, -1]], dtype=complex)
I2 = np.eye(2, dtype=complex)

UNITARY_TOL = 1e-12
CERTAINTY_TOL = 1e-12

CONTROL, TARGET = 0, 1


class GateError(ValueError):
    pass


class CircuitIntegrityError(RuntimeError):
    """Measurement outcome was not deterministic."""


def basis_state(control: int, target: int) -> np.ndarray:
    psi = np.zeros(4, dtype=complex)
    psi[2 * control + target] = 1.0
    return psi


def is_unitary(gate: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    gate = np.asarray(gate)
    return gate.shape == (2, 2) and np.allclose(gate @ gate.conj().T, I2, atol=tol, rtol=0)


def apply_single(state: np.ndarray, gate: np.ndarray, which: int) -> np.ndarray:
    if not is_unitary(gate):
        raise GateError("gate is not unitary")
    if which == CONTROL:
        op = np.kron(gate, I2)
    elif which == TARGET:
        op = np.kron(I2, gate)
    else:
        raise ValueError(f"qubit index must be 0 or 1, got {which}")
    return op @ state


def oracle_matrix(f: BooleanFunction) -> np.ndarray:
    """Permutation matrix of |x>|y> -> |x>|y XOR f(x)>."""
    U = np.zeros((4, 4), dtype=complex)
    for x in (0, 1):
        fx = int(f(x)) & 1
        for y in (0, 1):
            U[2 * x + (y ^ fx), 2 * x + y] = 1.0
    return U


@dataclass
class Oracle:
    """Membership oracle for ``f`` that counts its own applications."""

    f: BooleanFunction
    applications: int = 0
    _matrix: np.ndarray | None = field(default=None, repr=False)

    def apply(self, state: np.ndarray) -> np.ndarray:
        if self._matrix is None:
            self._matrix = oracle_matrix(self.f)
        self.applications += 1
        return self._matrix @ state


def apply_oracle(state: np.ndarray, f: BooleanFunction | Oracle) -> np.ndarray:
    oracle = f if isinstance(f, Oracle) else Oracle(f)
    return oracle.apply(state)


def control_probabilities(state: np.ndarray) -> np.ndarray:
    p = np.abs(state) ** 2
    return np.array([p[0] + p[1], p[2] + p[3]])


@dataclass(frozen=True)
class ParityRun:
    bit: int
    probability: float
    queries: int
    states: tuple[np.ndarray, ...]  # after preparation, oracle, final layer


def trace_parity_circuit(f: BooleanFunction) -> ParityRun:
    """Run H(control) x G(target) -> U_f -> H(control) x P(target), then read the control."""
    oracle = Oracle(f)
    psi = basis_state(0, 0)
    psi = apply_single(psi, H, CONTROL)
    psi1 = apply_single(psi, G, TARGET)
    psi2 = oracle.apply(psi1)
    psi = apply_single(psi2, H, CONTROL)
    psi3 = apply_single(psi, P, TARGET)

    probs = control_probabilities(psi3)
    bit = int(np.argmax(probs))
    if abs(probs[bit] - 1.0) > CERTAINTY_TOL:
        raise CircuitIntegrityError(f"control outcome probabilities {probs} are not deterministic")
    return ParityRun(bit, float(probs[bit]), oracle.applications, (psi1, psi2, psi3))


def run_parity_circuit(f: BooleanFunction) -> int:
    """f(0) XOR f(1) from a single oracle application."""
    return trace_parity_circuit(f).bit


def truth_table() -> list[tuple[str, int, int, int, float]]:
    """(name, f(0), f(1), measured bit, outcome probability) for the four one-bit functions."""
    funcs = {
        "const0": lambda x: 0,
        "const1": lambda x: 1,
        "identity": lambda x: x,
        "not": lambda x: 1 - x,
    }
    rows = []
    for name, f in funcs.items():
        run = trace_parity_circuit(f)
        rows.append((name, f(0), f(1), run.bit, run.probability))
    return rows
