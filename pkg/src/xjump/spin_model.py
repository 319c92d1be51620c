"""Finite spin-1/2 systems and their energy operators.

Conventions: hbar = 1, so energies and angular frequencies share units.
Basis states are ordered with spin 0 as the most significant tensor factor;
``|0>`` is spin-up (sigma_z = +1).  A Zeeman term ``(w/2) sigma_z`` therefore
puts spin-up at ``+w/2``.

Pair terms use spin operators ``S = sigma / 2``:

- ``ising-zz``:        ``J S^z_i S^z_j``
- ``heisenberg-xxx``:  ``J (S^x_i S^x_j + S^y_i S^y_j + S^z_i S^z_j)``
- ``secular-dipolar``: ``J (2 S^z_i S^z_j - S^x_i S^x_j - S^y_i S^y_j)``
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Mapping

import numpy as np

HERMITIAN_ATOL = 1e-12
DEFAULT_MAX_SPINS = 14

COUPLING_FORMS = ("ising-zz", "heisenberg-xxx", "secular-dipolar")

PAULI = {
    "i": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# (axis, weight) pairs multiplying S^a_i S^a_j
_PAIR_STRUCTURE = {
    "ising-zz": (("z", 1.0),),
    "heisenberg-xxx": (("x", 1.0), ("y", 1.0), ("z", 1.0)),
    "secular-dipolar": (("z", 2.0), ("x", -1.0), ("y", -1.0)),
}


class DimensionError(ValueError):
    """Raised when a system exceeds the configured desk-scale size."""


class HermitianOperator:
    """Dense Hermitian matrix on the ``2**n`` spin state space.

    The wrapped array is copied and made read-only, so instances can be
    shared freely between threads or pickled to worker processes.
    """

    __slots__ = ("_matrix",)

    def __init__(self, matrix, *, atol: float = HERMITIAN_ATOL):
        m = np.array(matrix, dtype=complex, copy=True)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError(f"operator must be a square matrix, got shape {m.shape}")
        dev = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if dev > atol:
            raise ValueError(f"operator is not Hermitian (max deviation {dev:.3e})")
        m.flags.writeable = False
        self._matrix = m

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    @property
    def dim(self) -> int:
        return self._matrix.shape[0]

    @property
    def n_spins(self) -> int:
        return int(round(np.log2(self.dim)))

    def __add__(self, other: HermitianOperator) -> HermitianOperator:
        return HermitianOperator(self._matrix + other._matrix)

    def __sub__(self, other: HermitianOperator) -> HermitianOperator:
        return HermitianOperator(self._matrix - other._matrix)

    def __mul__(self, scalar: float) -> HermitianOperator:
        return HermitianOperator(float(scalar) * self._matrix)

    __rmul__ = __mul__

    def __neg__(self) -> HermitianOperator:
        return negate(self)

    def __eq__(self, other) -> bool:
        if not isinstance(other, HermitianOperator):
            return NotImplemented
        return self._matrix.shape == other._matrix.shape and bool(
            np.array_equal(self._matrix, other._matrix)
        )

    def __hash__(self):
        return hash((self._matrix.shape, self._matrix.tobytes()))

    def __repr__(self) -> str:
        return f"HermitianOperator(dim={self.dim})"

    def __reduce__(self):
        return (HermitianOperator, (np.array(self._matrix),))


@dataclass(frozen=True)
class SpinSystem:
    """A chain-free collection of spin-1/2 particles.

    Args:
        n_spins: number of spins.
        zeeman_frequencies: angular frequency per spin.
        couplings: map ``(i, j) -> J``.  Either orientation may be given;
            entries are stored once with ``i < j``.  If both orientations
            are supplied they must agree.
        coupling_form: one of ``COUPLING_FORMS``.
        max_spins: upper bound on ``n_spins``.
    """

    n_spins: int
    zeeman_frequencies: tuple[float, ...]
    couplings: Mapping[tuple[int, int], float] = field(default_factory=dict)
    coupling_form: str = "secular-dipolar"
    max_spins: int = DEFAULT_MAX_SPINS

    def __post_init__(self):
        n = self.n_spins
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise ValueError(f"n_spins must be a positive integer, got {n!r}")
        if n > self.max_spins:
            raise DimensionError(
                f"n_spins={n} exceeds max_spins={self.max_spins} (dimension {2**n})"
            )
        if self.coupling_form not in COUPLING_FORMS:
            raise ValueError(
                f"unknown coupling_form {self.coupling_form!r}; expected one of {COUPLING_FORMS}"
            )
        freqs = tuple(float(w) for w in np.broadcast_to(self.zeeman_frequencies, (n,)))
        object.__setattr__(self, "zeeman_frequencies", freqs)

        canon: dict[tuple[int, int], float] = {}
        for (i, j), strength in dict(self.couplings).items():
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-coupling ({i}, {j}) is not allowed")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"coupling ({i}, {j}) refers to a spin outside 0..{n - 1}")
            key = (min(i, j), max(i, j))
            strength = float(strength)
            if key in canon and canon[key] != strength:
                raise ValueError(f"asymmetric coupling for pair {key}: {canon[key]} vs {strength}")
            canon[key] = strength
        object.__setattr__(self, "couplings", tuple(sorted(canon.items())))

    @property
    def dim(self) -> int:
        return 2**self.n_spins

    def coupling_map(self) -> dict[tuple[int, int], float]:
        """Symmetric view of the couplings with both ``(i, j)`` and ``(j, i)``."""
        out = {}
        for (i, j), strength in self.couplings:
            out[(i, j)] = strength
            out[(j, i)] = strength
        return out

    def with_couplings_scaled(self, factor: float) -> SpinSystem:
        return SpinSystem(
            self.n_spins,
            self.zeeman_frequencies,
            {k: factor * v for k, v in self.couplings},
            self.coupling_form,
            self.max_spins,
        )


def random_couplings(n_spins: int, scale: float, seed: int) -> dict[tuple[int, int], float]:
    """All-to-all couplings drawn uniformly from ``[-scale, scale]``."""
    rng = np.random.default_rng(seed)
    return {
        (i, j): float(scale * rng.uniform(-1.0, 1.0))
        for i in range(n_spins)
        for j in range(i + 1, n_spins)
    }


def _kron_chain(factors) -> np.ndarray:
    return reduce(np.kron, factors)


def site_operator(n_spins: int, site: int, axis: str) -> HermitianOperator:
    """Pauli matrix ``sigma^axis`` acting on one spin of an ``n_spins`` system."""
    if not 0 <= site < n_spins:
        raise ValueError(f"site {site} outside 0..{n_spins - 1}")
    factors = [PAULI["i"]] * n_spins
    factors[site] = PAULI[axis]
    return HermitianOperator(_kron_chain(factors))


def collective_operator(n_spins: int, axis: str) -> HermitianOperator:
    """Sum of ``sigma^axis`` over all spins."""
    total = np.zeros((2**n_spins, 2**n_spins), dtype=complex)
    for site in range(n_spins):
        total += site_operator(n_spins, site, axis).matrix
    return HermitianOperator(total)


def identity(dim: int) -> HermitianOperator:
    return HermitianOperator(np.eye(dim, dtype=complex))


def _pair_term(n: int, i: int, j: int, form: str) -> np.ndarray:
    term = np.zeros((2**n, 2**n), dtype=complex)
    for axis, weight in _PAIR_STRUCTURE[form]:
        factors = [PAULI["i"]] * n
        factors[i] = PAULI[axis]
        factors[j] = PAULI[axis]
        term += (weight / 4.0) * _kron_chain(factors)
    return term


def build_hamiltonian(
    system: SpinSystem,
) -> tuple[HermitianOperator, HermitianOperator, HermitianOperator]:
    """Return ``(H, H0, Hint)`` with ``H = H0 + Hint``.

    ``H0`` holds the Zeeman terms only; ``Hint`` is the sum of pair terms
    in the system's coupling form.
    """
    n = system.n_spins
    if n > system.max_spins:
        raise DimensionError(f"n_spins={n} exceeds max_spins={system.max_spins}")
    if system.coupling_form not in COUPLING_FORMS:
        raise ValueError(f"unknown coupling_form {system.coupling_form!r}")

    # Zeeman part is diagonal: bit b of the basis index is 0 for spin-up.
    index = np.arange(2**n)
    diag = np.zeros(2**n)
    for site, w in enumerate(system.zeeman_frequencies):
        bit = (index >> (n - 1 - site)) & 1
        diag += 0.5 * w * (1 - 2 * bit)
    h0 = np.diag(diag).astype(complex)

    hint = np.zeros_like(h0)
    for (i, j), strength in system.couplings:
        if strength != 0.0:
            hint += strength * _pair_term(n, i, j, system.coupling_form)

    return HermitianOperator(h0 + hint), HermitianOperator(h0), HermitianOperator(hint)


def negate(op: HermitianOperator) -> HermitianOperator:
    """Flip the sign of every entry; equivalent to running time backwards."""
    return HermitianOperator(-op.matrix)


def random_hermitian(dim: int, rng: np.random.Generator) -> np.ndarray:
    """GUE-distributed Hermitian matrix."""
    a = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (a + a.conj().T)


def spectral_radius(op: HermitianOperator) -> float:
    """Largest eigenvalue magnitude."""
    if op.dim == 0:
        return 0.0
    return float(np.max(np.abs(np.linalg.eigvalsh(op.matrix))))


def perturb_reversal(op: HermitianOperator, epsilon: float, seed: int) -> HermitianOperator:
    """Imperfect sign flip ``-H + epsilon * V``.

    ``V`` is a seeded GUE matrix rescaled so its spectral radius equals that
    of ``H``.  ``epsilon == 0`` returns ``negate(H)`` exactly.
    """
    if epsilon < 0:
        raise ValueError(f"epsilon must be non-negative, got {epsilon}")
    if epsilon == 0:
        return negate(op)
    rng = np.random.default_rng([int(seed), 0x5EED])
    v = random_hermitian(op.dim, rng)
    radius_v = float(np.max(np.abs(np.linalg.eigvalsh(v))))
    scale = spectral_radius(op) / radius_v if radius_v > 0 else 0.0
    return HermitianOperator(-op.matrix + epsilon * scale * v)


def basis_index(bits: str) -> int:
    """Index of a product basis state written as a string of spins.

    Accepts ``u``/``d`` (up/down) or ``0``/``1`` (``0`` = up).
    """
    table = {"u": "0", "d": "1", "0": "0", "1": "1"}
    try:
        return int("".join(table[c] for c in bits.lower()), 2)
    except KeyError as exc:
        raise ValueError(f"invalid spin string {bits!r}; use u/d or 0/1") from exc
