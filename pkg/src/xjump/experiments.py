"""Reproducible experiment protocols built on the jump channel.

Every protocol is a pure function of its inputs and a seed:

- ``echo_experiment``: forward evolution, sign-flipped (optionally
  perturbed) evolution, and the squared overlap with the start.
- ``equilibration_experiment``: time-averaged eigenstate populations
  against the uniform distribution on the initial energy shell.
- ``boltzmann_check``: per-spin level populations of a non-interacting
  system against the single-particle canonical law.
- ``correlation_experiment``: lagged covariance of two observables along
  one long trajectory.
- ``ergodicity_check``: time average of an observable against its
  shell-uniform ensemble average.

Mean inter-jump interval below means ``1 / (n_spins * per_particle_rate)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from . import ensembles
from .propagator import (
    EigenSystem,
    StateVector,
    change_basis,
    eigendecompose,
    fidelity,
    observable_expectation,
    occupations,
)
from .spin_model import (
    HermitianOperator,
    SpinSystem,
    basis_index,
    build_hamiltonian,
    perturb_reversal,
    site_operator,
    spectral_radius,
)
from .xjump import (
    JumpSchedule,
    TrajectoryStats,
    XJumpConfig,
    aggregate_rate,
    effective_rate,
    iterate_trajectory,
    jump_shell,
    sample_schedule,
)

BURN_IN_INTERVALS = 10.0
MIN_LAG_PAIRS = 30

_FORWARD, _BACKWARD = 0, 1


@dataclass(frozen=True, eq=False)
class Prepared:
    """A system with its Hamiltonian pieces and eigendecomposition."""

    system: SpinSystem
    hamiltonian: HermitianOperator
    zeeman: HermitianOperator
    interaction: HermitianOperator
    eig: EigenSystem


@lru_cache(maxsize=8)
def prepare(system: SpinSystem) -> Prepared:
    h, h0, hint = build_hamiltonian(system)
    return Prepared(system, h, h0, hint, eigendecompose(h))


def system_rate(prep: Prepared, jumps: XJumpConfig) -> float:
    """Aggregate jump rate for the whole system."""
    return aggregate_rate(prep.system.n_spins, effective_rate(jumps, prep.interaction))


def default_burn_in(rate: float) -> float:
    return BURN_IN_INTERVALS / rate if rate > 0 else 0.0


def _averaging_grid(rate: float, total_time: float, n_samples: int, burn_in: float | None) -> np.ndarray:
    burn_in = default_burn_in(rate) if burn_in is None else burn_in
    if not total_time > burn_in:
        raise ValueError(f"total time {total_time} does not exceed the burn-in {burn_in}")
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    return np.linspace(burn_in, total_time, n_samples)


def product_state(system: SpinSystem, spins: str) -> StateVector:
    """Product basis state such as ``"uudd"`` in the system's eigenbasis."""
    return superposition(system, [(spins, 1.0)])


def superposition(system: SpinSystem, terms: Sequence[tuple[str, float]]) -> StateVector:
    """Real superposition ``sum sqrt(w) |spins>`` of product states.

    Weights are probabilities and get normalized.
    """
    vec = np.zeros(system.dim, dtype=complex)
    for spins, weight in terms:
        if len(spins) != system.n_spins:
            raise ValueError(f"spin string {spins!r} does not have {system.n_spins} entries")
        if weight < 0:
            raise ValueError("superposition weights must be non-negative")
        vec[basis_index(spins)] += math.sqrt(weight)
    if not np.any(vec):
        raise ValueError("superposition has zero norm")
    return StateVector.from_vector(vec, prepare(system).eig)


def neel_string(n_spins: int) -> str:
    return "ud" * (n_spins // 2) + "u" * (n_spins % 2)


@dataclass(frozen=True)
class TimeSeries:
    times: np.ndarray
    values: np.ndarray
    label: str = ""

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape:
            raise ValueError("times and values must have equal length")
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be ascending")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.times)


# --------------------------------------------------------------------------- echo


@dataclass(frozen=True)
class EchoResult:
    forward_time: float
    fidelity: float
    observable_recovery: float | None
    n_jumps: int
    seed: int


def _reversed_eig(prep: Prepared, epsilon: float, seed: int) -> EigenSystem:
    if epsilon == 0:
        # Eigenvectors of -H are those of H with the order flipped.
        e = prep.eig
        return EigenSystem(-e.energies[::-1].copy(), e.basis[:, ::-1].copy())
    return eigendecompose(perturb_reversal(prep.hamiltonian, epsilon, seed))


def _run_leg(state, eig, jumps, rate, duration, key, stats) -> StateVector:
    schedule = sample_schedule(rate, duration, key)
    final = state
    for _, final in iterate_trajectory(state, eig, jumps, schedule, [duration], key, stats):
        pass
    return final


def echo_experiment(
    system: SpinSystem,
    initial: StateVector,
    forward_time: float,
    reversal_epsilon: float,
    jumps: XJumpConfig,
    seed: int,
    observable: HermitianOperator | None = None,
) -> EchoResult:
    """Evolve for ``T`` under ``H``, then ``T`` under the reversed operator.

    Jumps stay on during both legs and draw from independent streams.
    ``observable`` (default: sigma_z of spin 0) gives the recovery ratio
    ``<A>(2T) / <A>(0)``, reported as ``None`` when ``<A>(0)`` vanishes.
    """
    if not forward_time > 0:
        raise ValueError("forward_time must be positive")
    prep = prepare(system)
    eig = prep.eig
    rate = system_rate(prep, jumps)
    observable = observable or site_operator(system.n_spins, 0, "z")
    stats = TrajectoryStats()

    mid = _run_leg(initial, eig, jumps, rate, forward_time, (seed, _FORWARD), stats)
    rev_eig = _reversed_eig(prep, reversal_epsilon, seed)
    back = _run_leg(
        change_basis(mid, eig, rev_eig), rev_eig, jumps, rate, forward_time, (seed, _BACKWARD), stats
    )
    final = change_basis(back, rev_eig, eig)

    a0 = observable_expectation(initial, eig, observable)
    a1 = observable_expectation(final, eig, observable)
    recovery = a1 / a0 if abs(a0) > 1e-12 else None
    return EchoResult(float(forward_time), fidelity(initial, final), recovery, stats.n_jumps, seed)


# -------------------------------------------------------------------- equilibration


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass(frozen=True)
class EquilibrationResult:
    divergence: TimeSeries
    shell_weight: TimeSeries
    histogram: np.ndarray
    shell: np.ndarray
    n_jumps: int

    @property
    def final_divergence(self) -> float:
        return float(self.divergence.values[-1])

    @property
    def shell_weight_drift(self) -> float:
        w = self.shell_weight.values
        return float(np.max(np.abs(w - w[0])))


def equilibration_experiment(
    system: SpinSystem,
    initial: StateVector,
    total_time: float,
    n_samples: int,
    jumps: XJumpConfig,
    seed: int,
) -> EquilibrationResult:
    """Running time average of eigenstate populations versus uniform-on-shell.

    The shell is fixed by the initial state's mean energy.  The divergence
    at sample ``k`` is the total-variation distance between the populations
    averaged over samples ``0..k`` (restricted to the shell, renormalized)
    and the uniform distribution on the shell.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    prep = prepare(system)
    eig = prep.eig
    shell = jump_shell(initial, eig, jumps.half_width(eig))
    if shell.size == 0:
        raise ValueError("initial state has an empty energy shell")
    uniform = np.full(shell.size, 1.0 / shell.size)

    rate = system_rate(prep, jumps)
    times = np.linspace(0.0, total_time, n_samples)
    schedule = sample_schedule(rate, total_time, seed)
    stats = TrajectoryStats()

    running = np.zeros(eig.dim)
    divergence = np.empty(n_samples)
    weights = np.empty(n_samples)
    for k, (_, state) in enumerate(iterate_trajectory(initial, eig, jumps, schedule, times, seed, stats)):
        occ = occupations(state)
        running += occ
        weights[k] = occ[shell].sum()
        restricted = running[shell]
        divergence[k] = total_variation(restricted / restricted.sum(), uniform)

    return EquilibrationResult(
        TimeSeries(times, divergence, "tv_to_uniform_shell"),
        TimeSeries(times, weights, "shell_weight"),
        running / n_samples,
        shell,
        stats.n_jumps,
    )


# ---------------------------------------------------------------- boltzmann check


def spin_levels(system: SpinSystem) -> ensembles.LevelSpec:
    """Single-spin Zeeman levels; all spins must share one splitting."""
    magnitudes = {abs(w) for w in system.zeeman_frequencies}
    if len(magnitudes) != 1 or 0.0 in magnitudes:
        raise ValueError("boltzmann_check needs identical, non-zero Zeeman splittings")
    w = magnitudes.pop()
    return ensembles.LevelSpec((-w / 2, w / 2))


def ground_energy(system: SpinSystem) -> float:
    return -0.5 * sum(abs(w) for w in system.zeeman_frequencies)


def state_for_energy(system: SpinSystem, e_target: float) -> StateVector:
    """Superposition of two product states whose Zeeman energy is ``e_target``.

    The excited spins are packed at the front, so the per-spin populations
    start as far from uniform as the energy allows.
    """
    splitting = spin_levels(system).energies[1] * 2
    x = (e_target - ground_energy(system)) / splitting
    n = system.n_spins
    if not 0 <= x <= n:
        raise ValueError(f"E_target={e_target} outside the Zeeman spectrum")
    k = min(int(math.floor(x)), n - 1)
    frac = x - k

    def spins(excited: int) -> str:
        return "".join(
            ("u" if w > 0 else "d") if site < excited else ("d" if w > 0 else "u")
            for site, w in enumerate(system.zeeman_frequencies)
        )

    return superposition(system, [(spins(k), 1.0 - frac), (spins(k + 1), frac)])


@dataclass(frozen=True)
class BoltzmannResult:
    distance: float
    initial_distance: float
    populations: np.ndarray
    target: np.ndarray
    beta: float
    n_jumps: int


def boltzmann_trajectory(
    system: SpinSystem,
    jumps: XJumpConfig,
    e_target: float,
    total_time: float,
    seed: int,
    initial: StateVector | None = None,
    n_samples: int = 2000,
    burn_in: float | None = None,
) -> BoltzmannResult:
    """One seed of ``boltzmann_check`` with the full per-spin detail."""
    prep = prepare(system)
    levels = spin_levels(system)
    if spectral_radius(prep.interaction) > 1e-3 * (levels.energies[1] - levels.energies[0]):
        warnings.warn("interaction energy is not negligible against the Zeeman splitting", stacklevel=2)
    beta = ensembles.solve_beta(levels, system.n_spins, e_target)
    target = ensembles.particle_level_probability(levels, beta)

    eig = prep.eig
    initial = initial if initial is not None else state_for_energy(system, e_target)
    # Probability of the upper Zeeman level for each spin, in the eigenbasis.
    uppers = []
    for site, w in enumerate(system.zeeman_frequencies):
        sz = eig.operator_in_eigenbasis(site_operator(system.n_spins, site, "z"))
        uppers.append(0.5 * (np.eye(eig.dim) + np.sign(w) * sz))

    def upper_populations(state: StateVector) -> np.ndarray:
        return np.array([observable_expectation(state, eig, op) for op in uppers])

    def distance(pops: np.ndarray) -> float:
        # Two-level marginals: TV equals |p_upper - W_upper|; averaged over spins.
        return float(np.mean(np.abs(pops - target[1])))

    rate = system_rate(prep, jumps)
    times = _averaging_grid(rate, total_time, n_samples, burn_in)
    schedule = sample_schedule(rate, total_time, seed)
    stats = TrajectoryStats()
    acc = np.zeros(system.n_spins)
    for _, state in iterate_trajectory(initial, eig, jumps, schedule, times, seed, stats):
        acc += upper_populations(state)
    pops = acc / n_samples
    return BoltzmannResult(
        distance(pops), distance(upper_populations(initial)), pops, target, beta, stats.n_jumps
    )


def boltzmann_check(
    system: SpinSystem,
    jumps: XJumpConfig,
    e_target: float,
    total_time: float,
    seeds: Sequence[int],
    initial: StateVector | None = None,
    n_samples: int = 2000,
) -> float:
    """Seed-averaged TV distance of per-spin populations from the canonical law.

    ``e_target`` is the absolute mean energy; the canonical reference uses
    the inverse temperature that reproduces it for ``n_spins`` independent
    two-level particles.
    """
    results = [
        boltzmann_trajectory(system, jumps, e_target, total_time, s, initial, n_samples)
        for s in seeds
    ]
    return float(np.mean([r.distance for r in results]))


# -------------------------------------------------------------------- correlations


def _observable_samples(
    prep: Prepared,
    ops: Sequence[np.ndarray],
    initial: StateVector,
    jumps: XJumpConfig,
    times: np.ndarray,
    seed: int,
    stats: TrajectoryStats | None = None,
) -> np.ndarray:
    rate = system_rate(prep, jumps)
    schedule = sample_schedule(rate, float(times[-1]), seed)
    out = np.empty((len(ops), times.size))
    for k, (_, state) in enumerate(
        iterate_trajectory(initial, prep.eig, jumps, schedule, times, seed, stats)
    ):
        for i, op in enumerate(ops):
            out[i, k] = observable_expectation(state, prep.eig, op)
    return out


def lagged_covariance(f: np.ndarray, g: np.ndarray, lag: int) -> float:
    """``mean(f[t+L] g[t]) - mean(f[t+L]) mean(g[t])`` over all usable ``t``."""
    n = f.size - lag
    fl, g0 = f[lag:], g[:n]
    return float(np.mean(fl * g0) - np.mean(fl) * np.mean(g0))


def correlation_experiment(
    system: SpinSystem,
    f: HermitianOperator,
    g: HermitianOperator,
    lags: Sequence[float],
    jumps: XJumpConfig,
    trajectory_time: float,
    seed: int,
    initial: StateVector | None = None,
    dt: float | None = None,
    burn_in: float | None = None,
) -> TimeSeries:
    """Estimate ``R(T) = <f(t+T) g(t)> - <f><g>`` by time averaging.

    Samples are taken every ``dt`` after the burn-in; every lag must be a
    multiple of ``dt`` (default: the smallest positive gap in ``lags``).
    """
    lags = np.asarray(lags, dtype=float)
    if lags.size == 0 or np.any(np.diff(lags) <= 0) or lags[0] < 0:
        raise ValueError("lags must be non-negative and strictly ascending")
    if dt is None:
        steps = np.diff(np.concatenate(([0.0], lags)))
        steps = steps[steps > 0]
        dt = float(steps.min()) if steps.size else 1.0
    lag_idx = np.rint(lags / dt).astype(int)
    if np.any(np.abs(lag_idx * dt - lags) > 1e-9 * np.maximum(1.0, lags)):
        raise ValueError("every lag must be an integer multiple of dt")

    prep = prepare(system)
    rate = system_rate(prep, jumps)
    burn_in = default_burn_in(rate) if burn_in is None else burn_in
    n = int(math.floor((trajectory_time - burn_in) / dt + 1e-9)) + 1
    if n - lag_idx[-1] < MIN_LAG_PAIRS:
        raise ValueError(
            f"trajectory too short: {max(n - lag_idx[-1], 0)} pairs at the largest lag, "
            f"need {MIN_LAG_PAIRS}"
        )
    initial = initial if initial is not None else product_state(system, neel_string(system.n_spins))
    times = burn_in + dt * np.arange(n)
    ops = [prep.eig.operator_in_eigenbasis(f), prep.eig.operator_in_eigenbasis(g)]
    fs, gs = _observable_samples(prep, ops, initial, jumps, times, seed)
    values = [lagged_covariance(fs, gs, int(L)) for L in lag_idx]
    return TimeSeries(lags, np.array(values), "R(f,g|T)")


# ---------------------------------------------------------------------- ergodicity


@dataclass(frozen=True)
class ErgodicityResult:
    time_average: float
    ensemble_average: float
    gap: float


def ergodicity_check(
    system: SpinSystem,
    observable: HermitianOperator,
    jumps: XJumpConfig,
    trajectory_time: float,
    seed: int,
    initial: StateVector | None = None,
    n_samples: int = 2000,
    burn_in: float | None = None,
) -> ErgodicityResult:
    """Compare the trajectory average of ``<A>`` with its shell average.

    The ensemble average is the mean of ``<m|A|m>`` over the eigenstates
    in the initial energy shell (equal a priori weights).
    """
    prep = prepare(system)
    eig = prep.eig
    initial = initial if initial is not None else product_state(system, neel_string(system.n_spins))
    a_eig = eig.operator_in_eigenbasis(observable)
    shell = jump_shell(initial, eig, jumps.half_width(eig))
    if shell.size == 0:
        raise ValueError("initial state has an empty energy shell")
    ensemble = float(np.mean(np.diagonal(a_eig).real[shell]))

    rate = system_rate(prep, jumps)
    times = _averaging_grid(rate, trajectory_time, n_samples, burn_in)
    samples = _observable_samples(prep, [a_eig], initial, jumps, times, seed)[0]
    time_avg = float(samples.mean())
    return ErgodicityResult(time_avg, ensemble, abs(time_avg - ensemble))


__all__ = [
    "BoltzmannResult",
    "EchoResult",
    "EquilibrationResult",
    "ErgodicityResult",
    "JumpSchedule",
    "Prepared",
    "TimeSeries",
    "boltzmann_check",
    "boltzmann_trajectory",
    "correlation_experiment",
    "echo_experiment",
    "equilibration_experiment",
    "ergodicity_check",
    "lagged_covariance",
    "neel_string",
    "prepare",
    "product_state",
    "state_for_energy",
    "superposition",
    "total_variation",
]
