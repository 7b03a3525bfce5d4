import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from giantqed.evolve import WrapWarning, evolve_to, init_state
from giantqed.geometry import dga_pair, sga_pair
from giantqed.nonmarkov import (CANONICAL_PAIRS, AtomicDensity, BudgetWarning, basis_trajectories,
                                blp_integral, blp_measure, reduced_density, trace_distance)
from giantqed.nonmarkov import sample_pairs


def _random_density(rng):
    c = rng.normal(size=3) + 1j * rng.normal(size=3)
    c /= np.linalg.norm(c)
    c1, c2 = c[1], c[2]
    return AtomicDensity.from_amplitudes(c1, c2)


def test_initial_and_decayed_densities():
    s = init_state(sga_pair(1, 0.2), 32, "eg")
    assert np.allclose(reduced_density(s).matrix, np.diag([0, 1, 0]))
    assert np.allclose(AtomicDensity.from_amplitudes(0, 0).matrix, np.diag([1, 0, 0]))
    with pytest.raises(ValueError):
        AtomicDensity(np.eye(2))


def test_trace_mid_run():
    s = init_state(sga_pair(1, 0.25), 300, "custom", theta=0.3, phi=1.0)
    evolve_to(s, 50.0, 0.05)
    rho = reduced_density(s)
    assert abs(rho.trace - 1) < 1e-12
    assert rho.eigenvalues().min() > -1e-10


def test_trace_distance_trivial_values():
    a = AtomicDensity(np.diag([0, 1, 0]))
    b = AtomicDensity(np.diag([0, 0, 1]))
    assert trace_distance(a, a) == 0
    assert trace_distance(a, b) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1))
def test_trace_distance_matches_singular_values(seed):
    rng = np.random.default_rng(seed)
    a, b = _random_density(rng), _random_density(rng)
    ref = 0.5 * np.linalg.svd(a.matrix - b.matrix, compute_uv=False).sum()
    assert abs(trace_distance(a, b) - ref) < 1e-12
    assert 0 <= trace_distance(a, b) <= 1 + 1e-12


@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1))
def test_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    a, b, c = (_random_density(rng) for _ in range(3))
    assert abs(trace_distance(a, b) - trace_distance(b, a)) < 1e-12
    assert trace_distance(a, a) < 1e-12
    assert trace_distance(a, c) <= trace_distance(a, b) + trace_distance(b, c) + 1e-10


def test_blp_integral_basics():
    assert blp_integral(np.linspace(1, 0, 50)) == 0
    t = np.linspace(0, 2 * np.pi, 20001)
    assert abs(blp_integral(np.abs(np.sin(t))) - 2) < t[1]


@settings(max_examples=60)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=40))
def test_blp_integral_bounds(series):
    rises = sum(1 for a, b in zip(series, series[1:]) if b > a)
    val = blp_integral(series)
    assert 0 <= val <= rises + 1e-12


def test_sampling_measure_and_canonical_pairs():
    p = sample_pairs(20000, 4)
    assert np.allclose(p[:4], [(*a, *b) for a, b in CANONICAL_PAIRS])
    u = np.cos(2 * p[4:, 0])
    assert abs(u.mean()) < 0.02 and abs(np.mean(u ** 2) - 1 / 3) < 0.01
    assert np.array_equal(sample_pairs(50, 9), sample_pairs(50, 9))


def test_linearity_of_basis_runs():
    cfg = sga_pair(1, 0.25)
    times, a, b = basis_trajectories(cfg, 5.0, 0.05, n=64)
    th, ph = 0.7, 2.1
    s = init_state(cfg, 64, "custom", theta=th, phi=ph)
    evolve_to(s, 5.0, 0.05)
    combo = math.cos(th) * a[-1] + math.sin(th) * np.exp(1j * ph) * b[-1]
    assert np.abs(combo - s.c_atoms).max() < 1e-12


def test_series_matches_direct_densities():
    cfg = dga_pair(1, 0.25)
    basis = basis_trajectories(cfg, 4.0, 0.05, every=10, n=64)
    rec = blp_measure(cfg, 3, 4.0, seed=2, basis=basis)
    th1, ph1, th2, ph2 = rec.pair
    runs = []
    for th, ph in ((th1, ph1), (th2, ph2)):
        s = init_state(cfg, 64, "custom", theta=th, phi=ph)
        evolve_to(s, 4.0, 0.05)
        runs.append(reduced_density(s))
    assert abs(trace_distance(*runs) - rec.distance[-1]) < 1e-10


def test_determinism_and_budget_warning():
    cfg = sga_pair(1, 0.25)
    basis = basis_trajectories(cfg, 5.0, 0.05, n=64)
    a = blp_measure(cfg, 40, 5.0, seed=3, basis=basis)
    b = blp_measure(cfg, 40, 5.0, seed=3, basis=basis)
    assert a.pair == b.pair and a.value == b.value
    with pytest.warns(BudgetWarning):
        blp_measure(cfg, 40, 5.0, seed=3, basis=basis, cost_cap=10)
    with pytest.raises(ValueError):
        blp_measure(cfg, 0, 5.0, basis=basis)
    assert "N(Lambda)" in a.table().splitlines()[-1]


def test_markov_control_is_contractive():
    cfg = sga_pair(1, 0.05, detuning=-2.0)
    rec = blp_measure(cfg, 200, 60.0, seed=0, every=4)
    assert rec.value < 0.02
    assert np.all(np.diff(rec.distance) < 1e-3)


def test_grid_halving_changes_integral_little():
    cfg = sga_pair(1, 0.25)
    times, a, b = basis_trajectories(cfg, 30.0, 0.0125, n=200)
    fine = blp_measure(cfg, 100, 30.0, seed=5, basis=(times, a, b))
    coarse = blp_measure(cfg, 100, 30.0, seed=5, basis=(times[::2], a[::2], b[::2]))
    assert abs(fine.value - coarse.value) < 1e-3


def test_dga_growth_and_caveat():
    cfg = dga_pair(1, 0.25)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WrapWarning)
        rec = blp_measure(cfg, 20, 60.0, seed=1, every=10, n=200)
    assert rec.caveat
    run = rec.running
    third = len(run) // 3
    assert run[-1] > run[2 * third] > run[third] > 0
    assert not blp_measure(sga_pair(1, 0.25), 2, 1.0, n=32).caveat
