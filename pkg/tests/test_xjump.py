import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xjump.propagator import (
    StateVector,
    eigendecompose,
    energy_expectation,
    evolve,
    occupations,
)
from xjump.spin_model import HermitianOperator, SpinSystem, build_hamiltonian
from xjump.xjump import (
    JumpSchedule,
    TrajectoryStats,
    XJumpConfig,
    aggregate_rate,
    apply_jump,
    effective_rate,
    evolve_with_jumps,
    expected_states_visited,
    haar_unitary,
    iterate_trajectory,
    jump_shell,
    rate_from_interaction,
    sample_schedule,
)

from .conftest import BAND_HALF_WIDTH, dipolar_system, random_system

SECONDS_PER_YEAR = 365.25 * 24 * 3600


@pytest.fixture(scope="module")
def eig8():
    h, _, _ = build_hamiltonian(random_system(8, seed=2))
    return eigendecompose(h)


def test_rate_arithmetic():
    assert aggregate_rate(1e23, 1e-10) == 1e13
    assert expected_states_visited(1e13, 1e-3) == 1e10
    assert aggregate_rate(17, 0.0) == 0.0
    assert expected_states_visited(5.0, 0.0) == 0.0
    assert expected_states_visited(0.0, 9.0) == 0.0


def test_single_particle_waiting_time_is_centuries():
    years = 1.0 / aggregate_rate(1, 1e-10) / SECONDS_PER_YEAR
    assert 300 < years < 320


@pytest.mark.parametrize("args", [(-1, 1.0), (1, -1.0)])
def test_negative_rate_inputs(args):
    with pytest.raises(ValueError):
        aggregate_rate(*args)
    with pytest.raises(ValueError):
        expected_states_visited(*args)


def test_schedule_basics():
    assert len(sample_schedule(0.0, 10.0, 1)) == 0
    a = sample_schedule(3.0, 10.0, 42)
    assert a == sample_schedule(3.0, 10.0, 42)
    assert a.times != sample_schedule(3.0, 10.0, 43).times
    t = np.asarray(a.times)
    assert np.all(np.diff(t) > 0) and t[0] >= 0 and t[-1] <= 10.0


def test_schedule_count_follows_poisson():
    counts = [len(sample_schedule(100.0, 10.0, s)) for s in range(1000)]
    assert 950 <= np.mean(counts) <= 1050
    # Poisson: variance equals the mean.
    assert np.var(counts, ddof=1) == pytest.approx(1000, rel=0.15)


def test_schedule_gaps_are_exponential():
    sched = sample_schedule(4.0, 5000.0, 3)
    gaps = np.diff((0.0,) + sched.times)
    # Mean 1/4 with ~20000 samples: 5 sigma is 0.25 * 5 / sqrt(20000).
    assert abs(gaps.mean() - 0.25) < 0.25 * 5 / np.sqrt(gaps.size)
    assert abs(np.mean(gaps > 0.25) - np.exp(-1)) < 0.02


def test_schedule_validation():
    with pytest.raises(ValueError):
        JumpSchedule((0.5, 0.2), 1.0, 0)
    with pytest.raises(ValueError):
        JumpSchedule((0.5, 2.0), 1.0, 0)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(per_particle_rate=-1.0),
        dict(shell_half_width=0.0),
        dict(shell_half_width=None, spectral_fraction=None),
        dict(mechanism="teleport"),
    ],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        XJumpConfig(**kwargs)


def test_half_width_resolution(eig8):
    spread = eig8.energies[-1] - eig8.energies[0]
    assert XJumpConfig().half_width(eig8) == pytest.approx(0.05 * spread)
    assert XJumpConfig(shell_half_width=0.3).half_width(eig8) == 0.3


def test_haar_unitary_is_unitary():
    u = haar_unitary(7, np.random.default_rng(0))
    assert np.max(np.abs(u.conj().T @ u - np.eye(7))) < 1e-12


@pytest.mark.parametrize("mechanism", ["shell-haar", "shell-phase-scramble"])
@pytest.mark.parametrize("seed", range(10))
def test_jump_conserves_shell_weight(eig8, mechanism, seed):
    cfg = XJumpConfig(mechanism=mechanism, spectral_fraction=0.1)
    s = StateVector.random(eig8.dim, np.random.default_rng(seed))
    shell = jump_shell(s, eig8, cfg.half_width(eig8))
    out = apply_jump(s, eig8, cfg, seed)
    outside = np.setdiff1d(np.arange(eig8.dim), shell)
    assert abs(out.norm() - 1) < 1e-10
    assert abs(occupations(out)[shell].sum() - occupations(s)[shell].sum()) < 1e-10
    np.testing.assert_array_equal(out.amplitudes[outside], s.amplitudes[outside])
    drift = abs(energy_expectation(out, eig8) - energy_expectation(s, eig8))
    assert drift <= 2 * cfg.half_width(eig8)
    assert not np.allclose(occupations(out)[shell], occupations(s)[shell])


def test_jump_is_deterministic(eig8):
    cfg = XJumpConfig()
    s = StateVector.random(eig8.dim, np.random.default_rng(1))
    np.testing.assert_array_equal(apply_jump(s, eig8, cfg, 5).amplitudes, apply_jump(s, eig8, cfg, 5).amplitudes)


def test_single_level_shell_changes_phase_only(caplog):
    eig = eigendecompose(HermitianOperator(np.diag([0.0, 1.0, 2.0])))
    s = StateVector.eigenstate(1, 3)
    with caplog.at_level(logging.DEBUG, logger="xjump.xjump"):
        out = apply_jump(s, eig, XJumpConfig(shell_half_width=0.1), 0)
    np.testing.assert_allclose(occupations(out), occupations(s), atol=1e-15)
    assert "single-level" in caplog.text


def test_empty_shell_is_noop():
    eig = eigendecompose(HermitianOperator(np.diag([-1.0, 1.0])))
    s = StateVector(np.array([1.0, 1.0]) / np.sqrt(2))
    assert apply_jump(s, eig, XJumpConfig(shell_half_width=0.5), 0) is s


def test_two_level_haar_statistics():
    # |a_1|^2 after a Haar rotation of a qubit is uniform on [0, 1].
    eig = eigendecompose(HermitianOperator(np.diag([0.0, 0.1])))
    cfg = XJumpConfig(shell_half_width=1.0)
    s = StateVector.eigenstate(0, 2)
    n = 100_000
    p = np.array([occupations(apply_jump(s, eig, cfg, [k]))[1] for k in range(n)])
    sigma_mean = np.sqrt(1 / 12 / n)
    sigma_var = np.sqrt(1 / 180 / n)  # variance of (U - 1/2)^2 is 1/80 - 1/144
    assert abs(p.mean() - 0.5) < 3 * sigma_mean
    assert abs(p.var() - 1 / 12) < 3 * sigma_var


def test_rate_zero_reduces_to_evolve(eig8):
    s = StateVector.random(eig8.dim, np.random.default_rng(3))
    out, sched = evolve_with_jumps(s, eig8, 4.2, XJumpConfig(), 8, 11)
    assert len(sched) == 0
    np.testing.assert_array_equal(out.amplitudes, evolve(s, eig8, 4.2).amplitudes)


def test_evolve_with_jumps_deterministic(eig8):
    s = StateVector.random(eig8.dim, np.random.default_rng(3))
    cfg = XJumpConfig(per_particle_rate=0.5)
    a, sa = evolve_with_jumps(s, eig8, 3.0, cfg, 8, 21)
    b, sb = evolve_with_jumps(s, eig8, 3.0, cfg, 8, 21)
    assert sa == sb and len(sa) > 0
    np.testing.assert_array_equal(a.amplitudes, b.amplitudes)


@pytest.mark.parametrize("seed", range(5))
def test_energy_drift_bounded(seed):
    eig = eigendecompose(build_hamiltonian(random_system(8, seed))[0])
    cfg = XJumpConfig(per_particle_rate=1.0)
    s = StateVector.random(eig.dim, np.random.default_rng(seed))
    out, sched = evolve_with_jumps(s, eig, 5.0, cfg, 8, seed)
    assert len(sched) > 10
    drift = abs(energy_expectation(out, eig) - energy_expectation(s, eig))
    assert drift <= 2 * cfg.half_width(eig)


def test_occupations_unfreeze():
    eig = eigendecompose(build_hamiltonian(dipolar_system(4))[0])
    s = StateVector.random(eig.dim, np.random.default_rng(0))
    cfg = XJumpConfig(per_particle_rate=1.0, shell_half_width=BAND_HALF_WIDTH)
    changed = [
        not np.allclose(occupations(evolve_with_jumps(s, eig, 1.0, cfg, 4, seed)[0]), occupations(s), atol=1e-9)
        for seed in range(100)
    ]
    assert any(changed)


def test_band_shell_is_exactly_conserved():
    eig = eigendecompose(build_hamiltonian(dipolar_system(6))[0])
    # All weight in the single-flip band, which is isolated by more than the shell width.
    band = np.flatnonzero(np.abs(eig.energies - 2 * 20.0) < 5)
    amps = np.zeros(eig.dim, complex)
    amps[band] = 1 / np.sqrt(band.size)
    s = StateVector(amps)
    cfg = XJumpConfig(per_particle_rate=2.0, shell_half_width=BAND_HALF_WIDTH)
    stats = TrajectoryStats()
    sched = sample_schedule(12.0, 10.0, 4)
    for _, state in iterate_trajectory(s, eig, cfg, sched, np.linspace(0, 10, 21), 4, stats):
        assert abs(occupations(state)[band].sum() - 1) < 1e-12
    assert stats.n_jumps == len(sched) and stats.trivial_jumps == 0


def test_trajectory_rejects_unsorted_samples(eig8):
    s = StateVector.eigenstate(0, eig8.dim)
    with pytest.raises(ValueError):
        list(iterate_trajectory(s, eig8, XJumpConfig(), JumpSchedule((), 1.0, 0), [0.5, 0.1], 0))


def test_rate_from_interaction():
    cfg = XJumpConfig(rate_coupling=0.3)
    zero = HermitianOperator(np.zeros((4, 4)))
    assert rate_from_interaction(zero, cfg) == 0.0
    ring = {(i, (i + 1) % 4): 1.0 for i in range(4)}
    _, _, hint = build_hamiltonian(SpinSystem(4, 1.0, ring, "ising-zz"))
    # Ising ring of 4 with J = 1 and S = sigma/2: extreme energies are +-1 (all aligned / Neel).
    assert rate_from_interaction(hint, cfg) == pytest.approx(0.3 * 1.0, abs=1e-12)
    assert rate_from_interaction(hint * 2.0, cfg) == pytest.approx(2 * rate_from_interaction(hint, cfg), rel=1e-10)
    with pytest.raises(ValueError, match="rate_coupling"):
        rate_from_interaction(hint, XJumpConfig())
    assert effective_rate(cfg, hint) == pytest.approx(0.3)
    assert effective_rate(XJumpConfig(per_particle_rate=0.7), hint) == 0.7


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31),
    width=st.floats(0.05, 3.0),
    mechanism=st.sampled_from(["shell-haar", "shell-phase-scramble"]),
)
def test_jump_invariants_property(seed, width, mechanism):
    eig = _PROP_EIG
    cfg = XJumpConfig(shell_half_width=width, mechanism=mechanism)
    s = StateVector.random(eig.dim, np.random.default_rng(seed))
    shell = jump_shell(s, eig, width)
    out = apply_jump(s, eig, cfg, seed)
    assert abs(out.norm() - 1) < 1e-10
    assert abs(occupations(out)[shell].sum() - occupations(s)[shell].sum()) < 1e-10
    assert abs(energy_expectation(out, eig) - energy_expectation(s, eig)) <= 2 * width + 1e-12


_PROP_EIG = eigendecompose(build_hamiltonian(random_system(5, seed=13))[0])
