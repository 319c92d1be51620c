"""Canonical distribution from constrained multiplicity maximization.

N identical, non-interacting particles occupy levels ``eps_i``.  An
occupancy profile ``n_i`` with fixed particle number and total energy is
realized in ``P = N! / prod(n_i!)`` ways; the Lagrange maximum of ``P`` is
``n_i = N g_i exp(-beta eps_i) / Z1``.  The brute-force enumerators here are
independent oracles for that continuous solution and for the partition
function identities.  Units: ``k_B = 1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .propagator import EigenSystem

EXACT_FACTORIAL_LIMIT = 20


@dataclass(frozen=True)
class LevelSpec:
    """Single-particle levels, strictly ascending, with degeneracies."""

    energies: tuple[float, ...]
    degeneracies: tuple[int, ...] | None = None

    def __post_init__(self):
        energies = tuple(float(e) for e in self.energies)
        if len(energies) < 2:
            raise ValueError("at least two levels are required")
        if any(b <= a for a, b in zip(energies, energies[1:])):
            raise ValueError("level energies must be strictly ascending")
        degs = self.degeneracies
        degs = (1,) * len(energies) if degs is None else tuple(int(g) for g in degs)
        if len(degs) != len(energies) or any(g < 1 for g in degs):
            raise ValueError("degeneracies must be positive integers, one per level")
        object.__setattr__(self, "energies", energies)
        object.__setattr__(self, "degeneracies", degs)

    @property
    def n_levels(self) -> int:
        return len(self.energies)

    @classmethod
    def from_eigensystem(cls, eig: EigenSystem, tol: float = 1e-9) -> LevelSpec:
        """Group (numerically) equal eigenvalues into degenerate levels."""
        return cls.from_energies(eig.energies, tol)

    @classmethod
    def from_energies(cls, energies: Sequence[float], tol: float = 1e-9) -> LevelSpec:
        levels: list[float] = []
        degs: list[int] = []
        for e in sorted(float(x) for x in energies):
            if levels and e - levels[-1] <= tol:
                degs[-1] += 1
            else:
                levels.append(e)
                degs.append(1)
        return cls(tuple(levels), tuple(degs))


@dataclass(frozen=True)
class OccupancyProfile:
    occupations: tuple[float, ...]

    def __post_init__(self):
        occ = tuple(float(n) for n in self.occupations)
        if any(n < 0 for n in occ):
            raise ValueError("occupations must be non-negative")
        object.__setattr__(self, "occupations", occ)

    @property
    def total(self) -> float:
        return math.fsum(self.occupations)

    def energy(self, levels: LevelSpec) -> float:
        return math.fsum(n * e for n, e in zip(self.occupations, levels.energies))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.occupations)


@dataclass(frozen=True)
class ThermoState:
    """Partition-function summary at one inverse temperature.

    ``log_z`` is the Boltzmann-approximation value ``N ln Z1 - ln N!``;
    ``log_z_labeled`` is ``N ln Z1``, the normalizer for enumerations over
    labeled particle assignments.  ``free_energy`` is ``None`` at
    ``beta == 0`` where ``-ln Z / beta`` is undefined.
    """

    beta: float
    z1: float
    log_z: float
    log_z_labeled: float
    free_energy: float | None
    internal_energy: float


@dataclass(frozen=True)
class MultiplicityMaximum:
    """Result of the exhaustive search; ``ties`` lists equally good profiles."""

    profile: OccupancyProfile
    log_multiplicity: float
    ties: tuple[tuple[int, ...], ...] = ()


def _log_factorial(n: int) -> float:
    if n <= EXACT_FACTORIAL_LIMIT:
        return math.log(math.factorial(n))
    return math.lgamma(n + 1)


def log_multiplicity(profile: OccupancyProfile, n_particles: int) -> float:
    """``ln(N! / prod n_i!)`` for an integer profile."""
    counts = []
    for n in profile.occupations:
        if n != int(n):
            raise ValueError(f"occupation {n} is not an integer")
        counts.append(int(n))
    if sum(counts) != n_particles:
        raise ValueError(f"occupations sum to {sum(counts)}, expected N={n_particles}")
    return _log_factorial(n_particles) - math.fsum(_log_factorial(n) for n in counts)


def _log_weights(levels: LevelSpec, beta: float) -> np.ndarray:
    eps = np.asarray(levels.energies)
    return np.log(np.asarray(levels.degeneracies, dtype=float)) - beta * eps


def _log_z1(levels: LevelSpec, beta: float) -> float:
    lw = _log_weights(levels, beta)
    shift = lw.max()
    return float(shift + np.log(np.exp(lw - shift).sum()))


def particle_level_probability(levels: LevelSpec, beta: float) -> np.ndarray:
    """Probability ``W_i = g_i exp(-beta eps_i) / Z1`` of each level."""
    if not np.isfinite(beta):
        raise ValueError("beta must be finite")
    lw = _log_weights(levels, beta)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def boltzmann_profile(levels: LevelSpec, n_particles: float, beta: float) -> OccupancyProfile:
    """Lagrange-optimal (real-valued) occupations at inverse temperature ``beta``."""
    if n_particles < 1:
        raise ValueError("need at least one particle")
    return OccupancyProfile(tuple(n_particles * particle_level_probability(levels, beta)))


def internal_energy(levels: LevelSpec, n_particles: float, beta: float) -> float:
    """``N * sum_i eps_i W_i``."""
    return float(n_particles * (particle_level_probability(levels, beta) @ np.asarray(levels.energies)))


def solve_beta(
    levels: LevelSpec, n_particles: float, e_target: float, *, rtol: float = 1e-12
) -> float:
    """Inverse temperature at which the mean total energy equals ``e_target``.

    Bisection on the strictly decreasing ``E(beta)``.  Targets above the
    midpoint give negative ``beta`` (population inversion).
    """
    e_min = n_particles * levels.energies[0]
    e_max = n_particles * levels.energies[-1]
    if not e_min < e_target < e_max:
        raise ValueError(f"E_target={e_target} outside the open interval ({e_min}, {e_max})")

    def excess(beta: float) -> float:
        return internal_energy(levels, n_particles, beta) - e_target

    spacing = min(b - a for a, b in zip(levels.energies, levels.energies[1:]))
    lo, hi = -1.0 / spacing, 1.0 / spacing
    while excess(lo) < 0:
        lo *= 2.0
    while excess(hi) > 0:
        hi *= 2.0

    for _ in range(400):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if excess(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def system_state_probability(energy: float, beta: float, log_z: float) -> float:
    """``exp(-beta E - ln Z)``; ``log_z`` must match the state enumeration used."""
    return math.exp(-beta * energy - log_z)


def partition_values(levels: LevelSpec, n_particles: int, beta: float) -> ThermoState:
    log_z1 = _log_z1(levels, beta)
    log_z_labeled = n_particles * log_z1
    log_z = log_z_labeled - _log_factorial(int(n_particles))
    free_energy = None if beta == 0 else -log_z / beta
    return ThermoState(
        beta=float(beta),
        z1=math.exp(log_z1),
        log_z=log_z,
        log_z_labeled=log_z_labeled,
        free_energy=free_energy,
        internal_energy=internal_energy(levels, n_particles, beta),
    )


def enumerate_state_sum(levels: LevelSpec, n_particles: int, beta: float) -> float:
    """Brute-force sum of ``exp(-beta E)`` over all labeled assignments.

    Each particle independently picks one of the ``sum g_i`` single-particle
    states, so the sum runs over ``(sum g_i) ** N`` terms.
    """
    states = [e for e, g in zip(levels.energies, levels.degeneracies) for _ in range(g)]
    return math.fsum(
        math.exp(-beta * math.fsum(assignment))
        for assignment in itertools.product(states, repeat=n_particles)
    )


def _compositions(total: int, parts: int):
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def _rational(x: float) -> Fraction:
    return Fraction(x).limit_denominator(10**9)


def brute_force_max_multiplicity(
    levels: LevelSpec, n_particles: int, e_target: float
) -> MultiplicityMaximum:
    """Exhaustively maximize ``P`` over integer profiles with the given N and E.

    Energies are compared on a rational grid so sums such as ``0.1 + 0.2``
    match exactly.  Degeneracies are ignored: this is the plain count of
    particle permutations.  Ties go to the lexicographically smallest
    profile; the others are reported in ``ties``.
    """
    if n_particles > 12 or levels.n_levels > 5:
        raise ValueError("enumeration limited to N <= 12 and at most 5 levels")
    eps = [_rational(e) for e in levels.energies]
    target = _rational(e_target)
    best: list[tuple[int, ...]] = []
    best_log_p = -math.inf
    for prof in _compositions(n_particles, levels.n_levels):
        if sum(n * e for n, e in zip(prof, eps)) != target:
            continue
        log_p = log_multiplicity(OccupancyProfile(prof), n_particles)
        if log_p > best_log_p + 1e-12:
            best, best_log_p = [prof], log_p
        elif abs(log_p - best_log_p) <= 1e-12:
            best.append(prof)
    if not best:
        raise ValueError(f"no integer profile of N={n_particles} reaches E={e_target}")
    best.sort()
    return MultiplicityMaximum(OccupancyProfile(best[0]), best_log_p, tuple(best[1:]))


def round_profile(profile: OccupancyProfile, n_particles: int) -> OccupancyProfile:
    """Largest-remainder rounding that preserves the particle count."""
    occ = profile.as_array()
    floors = np.floor(occ).astype(int)
    deficit = n_particles - int(floors.sum())
    order = np.argsort(-(occ - floors), kind="stable")
    floors[order[:deficit]] += 1
    return OccupancyProfile(tuple(int(n) for n in floors))


def pseudo_particle_distribution(interaction_energies: Sequence[float], beta: float) -> np.ndarray:
    """Canonical weights of independent interaction pseudo-particle states."""
    e = np.asarray(interaction_energies, dtype=float)
    if e.size == 0:
        raise ValueError("need at least one interaction energy")
    lw = -beta * e
    w = np.exp(lw - lw.max())
    return w / w.sum()


def joint_distribution(
    free_energies: Sequence[float], interaction_energies: Sequence[float], beta: float
) -> np.ndarray:
    """``W[i, k]`` for free-particle state ``i`` and interaction state ``k``.

    Evaluated directly from ``exp(-beta (E0_i + Eint_k))``; it factorizes
    into the product of the two marginals.
    """
    e0 = np.asarray(free_energies, dtype=float)
    eint = np.asarray(interaction_energies, dtype=float)
    if e0.size == 0 or eint.size == 0:
        raise ValueError("both energy lists must be non-empty")
    lw = -beta * (e0[:, None] + eint[None, :])
    w = np.exp(lw - lw.max())
    return w / w.sum()
