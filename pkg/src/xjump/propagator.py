"""Exact unitary evolution in the energy eigenbasis.

A state is stored as its amplitudes ``a_m`` over the eigenvectors of a
particular Hamiltonian, so evolving for time ``t`` is a diagonal phase
multiplication ``a_m -> a_m exp(-i E_m t)`` and leaves every ``|a_m|^2``
untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spin_model import HermitianOperator

NORM_ATOL = 1e-10


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenvalues (ascending) and the unitary matrix of eigenvectors."""

    energies: np.ndarray
    basis: np.ndarray

    def __post_init__(self):
        for arr in (self.energies, self.basis):
            arr.flags.writeable = False

    @property
    def dim(self) -> int:
        return self.energies.shape[0]

    def to_eigenbasis(self, vector) -> np.ndarray:
        """Amplitudes of a computational-basis vector over the eigenvectors."""
        return self.basis.conj().T @ np.asarray(vector, dtype=complex)

    def to_computational(self, amplitudes) -> np.ndarray:
        return self.basis @ np.asarray(amplitudes, dtype=complex)

    def operator_in_eigenbasis(self, op: HermitianOperator) -> np.ndarray:
        """Matrix elements ``<m|A|n>``."""
        _check_dim(op.dim, self.dim)
        return self.basis.conj().T @ op.matrix @ self.basis

    def reconstruct(self) -> np.ndarray:
        return (self.basis * self.energies) @ self.basis.conj().T


@dataclass(frozen=True, eq=False)
class StateVector:
    """Amplitudes over the eigenstates of one ``EigenSystem``."""

    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amplitudes, dtype=complex)
        norm = float(np.vdot(amps, amps).real)
        if abs(norm - 1.0) > NORM_ATOL:
            raise ValueError(f"state is not normalized (norm^2 = {norm!r})")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    @classmethod
    def from_vector(cls, vector, eig: EigenSystem) -> StateVector:
        """Express a computational-basis vector in ``eig``'s eigenbasis.

        The vector is normalized first.
        """
        v = np.asarray(vector, dtype=complex)
        _check_dim(v.shape[0], eig.dim)
        v = v / np.linalg.norm(v)
        return cls(eig.to_eigenbasis(v))

    @classmethod
    def eigenstate(cls, m: int, dim: int) -> StateVector:
        amps = np.zeros(dim, dtype=complex)
        amps[m] = 1.0
        return cls(amps)

    @classmethod
    def random(cls, dim: int, rng: np.random.Generator) -> StateVector:
        """Uniformly (Haar) distributed pure state."""
        z = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
        return cls(z / np.linalg.norm(z))

    def to_vector(self, eig: EigenSystem) -> np.ndarray:
        _check_dim(self.dim, eig.dim)
        return eig.to_computational(self.amplitudes)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def to_pairs(self) -> list[tuple[float, float]]:
        """``(re, im)`` pairs for serialization."""
        return [(float(a.real), float(a.imag)) for a in self.amplitudes]

    @classmethod
    def from_pairs(cls, pairs) -> StateVector:
        return cls(np.array([complex(re, im) for re, im in pairs]))


def _check_dim(got: int, expected: int) -> None:
    if got != expected:
        raise ValueError(f"dimension mismatch: {got} vs {expected}")


def eigendecompose(op: HermitianOperator) -> EigenSystem:
    """Diagonalize a Hermitian operator.

    Eigenvector phases and rotations inside degenerate subspaces are
    arbitrary; only phase-invariant quantities are meaningful.
    """
    if not isinstance(op, HermitianOperator):
        op = HermitianOperator(op)
    try:
        energies, basis = np.linalg.eigh(op.matrix)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"eigendecomposition failed: {exc}") from exc
    return EigenSystem(np.ascontiguousarray(energies), np.ascontiguousarray(basis))


def evolve(state: StateVector, eig: EigenSystem, t: float) -> StateVector:
    """Advance ``state`` by time ``t`` under the Hamiltonian behind ``eig``."""
    _check_dim(state.dim, eig.dim)
    if t == 0:
        return state
    return StateVector(state.amplitudes * np.exp(-1j * eig.energies * t))


def occupations(state: StateVector) -> np.ndarray:
    """Populations ``|a_m|^2`` of the energy eigenstates."""
    return np.abs(state.amplitudes) ** 2


def energy_expectation(state: StateVector, eig: EigenSystem) -> float:
    _check_dim(state.dim, eig.dim)
    return float(occupations(state) @ eig.energies)


def observable_expectation(
    state: StateVector, eig: EigenSystem, op: HermitianOperator | np.ndarray
) -> float:
    """``<psi|A|psi>``.

    ``op`` may be a ``HermitianOperator`` in the computational basis, or a
    raw array already transformed with ``eig.operator_in_eigenbasis``
    (the fast path for repeated evaluation along a trajectory).
    """
    if isinstance(op, HermitianOperator):
        _check_dim(op.dim, eig.dim)
        _check_dim(state.dim, eig.dim)
        psi = state.to_vector(eig)
        value = np.vdot(psi, op.matrix @ psi)
    else:
        a = state.amplitudes
        _check_dim(op.shape[0], a.shape[0])
        value = np.vdot(a, op @ a)
    if abs(value.imag) > 1e-10 * max(1.0, abs(value.real)):
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def fidelity(a: StateVector, b: StateVector) -> float:
    """Squared overlap ``|<a|b>|^2`` of two states in the same eigenbasis."""
    _check_dim(a.dim, b.dim)
    return float(abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2)


def change_basis(state: StateVector, source: EigenSystem, target: EigenSystem) -> StateVector:
    """Re-express amplitudes from one eigenbasis in another."""
    _check_dim(state.dim, source.dim)
    _check_dim(source.dim, target.dim)
    amps = target.basis.conj().T @ (source.basis @ state.amplitudes)
    # Renormalize against accumulated rounding in the two basis products.
    return StateVector(amps / np.linalg.norm(amps))
