"""Stochastic energy-conserving jumps superimposed on unitary evolution.

Jumps arrive as a homogeneous Poisson process with aggregate rate
``n_particles * per_particle_rate``.  Each jump acts on the energy shell
around the state's current mean energy, ``S = {m : |E_m - <E>| <= w}``,
and redistributes the amplitudes inside ``S`` at random while keeping the
shell's total probability fixed.  Amplitudes outside ``S`` are untouched.

Randomness is counter-based: the schedule and every individual jump draw
from generators keyed by ``(seed, stream, event index)``, so a trajectory
is reproducible no matter how trajectories are distributed over workers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence, Union

import numpy as np

from .propagator import EigenSystem, StateVector, energy_expectation, evolve
from .spin_model import HermitianOperator, spectral_radius

log = logging.getLogger(__name__)

MECHANISMS = ("shell-haar", "shell-phase-scramble")

SeedLike = Union[int, Sequence[int]]

_SCHEDULE_STREAM = 0x5C4ED
_JUMP_STREAM = 0x1A3B


def stream(seed: SeedLike, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    base = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return np.random.default_rng(base + [int(k) for k in key])


@dataclass(frozen=True)
class XJumpConfig:
    """Jump channel parameters.

    The shell half-width is either an absolute energy (``shell_half_width``)
    or a fraction of the Hamiltonian's spectral range
    (``spectral_fraction``); the absolute value wins when both are set.
    """

    per_particle_rate: float = 0.0
    shell_half_width: float | None = None
    spectral_fraction: float | None = 0.05
    mechanism: str = "shell-haar"
    rate_coupling: float | None = None

    def __post_init__(self):
        if not self.per_particle_rate >= 0:
            raise ValueError(f"per_particle_rate must be >= 0, got {self.per_particle_rate}")
        if self.shell_half_width is None and self.spectral_fraction is None:
            raise ValueError("one of shell_half_width or spectral_fraction is required")
        if self.shell_half_width is not None and not self.shell_half_width > 0:
            raise ValueError(f"shell_half_width must be > 0, got {self.shell_half_width}")
        if self.spectral_fraction is not None and not self.spectral_fraction > 0:
            raise ValueError(f"spectral_fraction must be > 0, got {self.spectral_fraction}")
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}; expected one of {MECHANISMS}")

    def half_width(self, eig: EigenSystem) -> float:
        if self.shell_half_width is not None:
            return float(self.shell_half_width)
        spread = float(eig.energies[-1] - eig.energies[0])
        w = self.spectral_fraction * spread
        # A fully degenerate spectrum has zero range; any positive width works.
        return w if w > 0 else float(self.spectral_fraction)

    def with_rate(self, per_particle_rate: float) -> XJumpConfig:
        return XJumpConfig(
            per_particle_rate,
            self.shell_half_width,
            self.spectral_fraction,
            self.mechanism,
            self.rate_coupling,
        )


@dataclass(frozen=True)
class JumpSchedule:
    """Event times of one Poisson realization on ``[0, duration]``."""

    times: tuple[float, ...]
    duration: float
    seed: SeedLike

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        if t.size and (t[0] < 0 or t[-1] > self.duration or np.any(np.diff(t) <= 0)):
            raise ValueError("jump times must be strictly ascending within [0, duration]")

    def __len__(self) -> int:
        return len(self.times)


def aggregate_rate(n_particles: float, per_particle_rate: float) -> float:
    """System-wide jump rate; independent per-particle events superpose."""
    if n_particles < 0 or per_particle_rate < 0:
        raise ValueError("particle count and rate must be non-negative")
    return n_particles * per_particle_rate


def expected_states_visited(rate: float, duration: float) -> float:
    """Mean number of jumps (distinct visited states) in ``duration``."""
    if rate < 0 or duration < 0:
        raise ValueError("rate and duration must be non-negative")
    return rate * duration


def sample_schedule(rate: float, duration: float, seed: SeedLike) -> JumpSchedule:
    if rate < 0:
        raise ValueError(f"rate must be non-negative, got {rate}")
    if rate == 0 or duration <= 0:
        return JumpSchedule((), float(duration), seed)
    rng = stream(seed, _SCHEDULE_STREAM)
    mean_gap = 1.0 / rate
    times: list[float] = []
    t = 0.0
    chunk = max(16, int(rate * duration * 1.2) + 16)
    while True:
        gaps = rng.exponential(mean_gap, size=chunk)
        for g in gaps:
            t += g
            if t > duration:
                return JumpSchedule(tuple(times), float(duration), seed)
            # Exponential draws of exactly zero would break strict ordering.
            if times and t <= times[-1]:
                continue
            times.append(t)


def jump_shell(state: StateVector, eig: EigenSystem, half_width: float) -> np.ndarray:
    """Indices of eigenstates within ``half_width`` of the mean energy."""
    center = energy_expectation(state, eig)
    return np.flatnonzero(np.abs(eig.energies - center) <= half_width)


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diagonal(r)
    return q * (d / np.abs(d))


def _redistribute(sub: np.ndarray, mechanism: str, rng: np.random.Generator) -> np.ndarray:
    k = sub.shape[0]
    if mechanism == "shell-haar":
        return haar_unitary(k, rng) @ sub
    weight = float(np.vdot(sub, sub).real)
    moduli = np.sqrt(weight * rng.dirichlet(np.ones(k)))
    phases = np.exp(2j * np.pi * rng.random(k))
    return moduli * phases


def apply_jump(
    state: StateVector, eig: EigenSystem, config: XJumpConfig, seed: SeedLike
) -> StateVector:
    """One jump: randomize amplitudes inside the current energy shell.

    A single-level shell only acquires a phase; an empty shell (mean energy
    sitting in a spectral gap wider than the shell) leaves the state as is.
    Both cases are logged at debug level; ``jump_shell`` lets callers detect
    them up front.
    """
    shell = jump_shell(state, eig, config.half_width(eig))
    if shell.size == 0:
        log.debug("empty jump shell; state unchanged")
        return state
    if shell.size == 1:
        log.debug("single-level jump shell; phase change only")
    rng = stream(seed, _JUMP_STREAM)
    amps = np.array(state.amplitudes)
    sub = amps[shell]
    new = _redistribute(sub, config.mechanism, rng)
    # Remove rounding drift so the shell weight is conserved to machine precision.
    old_w = np.linalg.norm(sub)
    new_w = np.linalg.norm(new)
    if new_w > 0:
        new *= old_w / new_w
    amps[shell] = new
    return StateVector(amps)


@dataclass
class TrajectoryStats:
    """Bookkeeping filled in while a trajectory runs."""

    n_jumps: int = 0
    trivial_jumps: int = 0


def iterate_trajectory(
    state: StateVector,
    eig: EigenSystem,
    config: XJumpConfig,
    schedule: JumpSchedule,
    sample_times: Sequence[float],
    seed: SeedLike,
    stats: TrajectoryStats | None = None,
) -> Iterator[tuple[float, StateVector]]:
    """Yield ``(t, state)`` at each sample time, jumping at scheduled events.

    Jump ``k`` draws from ``stream(seed, k)``.  Sample times must be
    ascending and inside ``[0, schedule.duration]``.
    """
    samples = np.asarray(sample_times, dtype=float)
    if samples.size and (np.any(np.diff(samples) < 0) or samples[0] < 0):
        raise ValueError("sample times must be ascending and non-negative")
    half_width = config.half_width(eig)
    jumps = schedule.times
    t = 0.0
    k = 0
    for ts in samples:
        while k < len(jumps) and jumps[k] <= ts:
            state = evolve(state, eig, jumps[k] - t)
            t = jumps[k]
            if stats is not None:
                stats.n_jumps += 1
                if jump_shell(state, eig, half_width).size <= 1:
                    stats.trivial_jumps += 1
            state = apply_jump(state, eig, config, _event_key(seed, k))
            k += 1
        state = evolve(state, eig, ts - t)
        t = ts
        yield t, state


def _event_key(seed: SeedLike, k: int) -> list[int]:
    base = [int(seed)] if np.isscalar(seed) else [int(s) for s in seed]
    return base + [k]


def evolve_with_jumps(
    state: StateVector,
    eig: EigenSystem,
    t: float,
    config: XJumpConfig,
    n_particles: int,
    seed: SeedLike,
) -> tuple[StateVector, JumpSchedule]:
    """Unitary evolution for time ``t`` interrupted by Poisson-timed jumps.

    Reduces exactly to ``evolve`` when the rate is zero.
    """
    rate = aggregate_rate(n_particles, config.per_particle_rate)
    schedule = sample_schedule(rate, t, seed)
    final = state
    for _, final in iterate_trajectory(state, eig, config, schedule, [t], seed):
        pass
    return final, schedule


def rate_from_interaction(hint: HermitianOperator, config: XJumpConfig) -> float:
    """Per-particle rate ``g * ||Hint||`` (spectral norm).

    A linear law is a modelling choice: the rate only has to grow with the
    interaction energy.
    """
    if config.rate_coupling is None:
        raise ValueError("rate_coupling is not set in the jump configuration")
    return config.rate_coupling * spectral_radius(hint)


def effective_rate(config: XJumpConfig, hint: HermitianOperator | None = None) -> float:
    """Per-particle rate, derived from ``Hint`` when ``rate_coupling`` is set."""
    if config.rate_coupling is not None and hint is not None:
        return rate_from_interaction(hint, config)
    return config.per_particle_rate
