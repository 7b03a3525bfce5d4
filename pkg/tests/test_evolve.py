import io
import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from giantqed.evolve import (WrapWarning, dump_snapshot, evolve_to, init_state, load_snapshot,
                             min_lattice_size, momentum_snapshot, step)
from giantqed.geometry import PairConfig, dga_pair, octahedron_pair, sga_pair


def test_initial_kinds():
    cfg = sga_pair(1, 0.2)
    s = 1 / math.sqrt(2)
    assert np.allclose(init_state(cfg, 32, "plus").c_atoms, [s, s])
    assert np.allclose(init_state(cfg, 32, "minus").c_atoms, [s, -s])
    assert np.allclose(init_state(cfg, 32, "custom", theta=0.0, phi=1.3).c_atoms, [1, 0])
    assert not init_state(cfg, 32).c_field.any()


def test_unknown_kind_and_tiny_lattice():
    with pytest.raises(ValueError):
        init_state(sga_pair(1, 0.2), 32, "sideways")
    with pytest.raises(ValueError):
        init_state(dga_pair(3, 0.2), 8)


def test_wrap_warning():
    with pytest.warns(WrapWarning):
        init_state(sga_pair(1, 0.2), 32, horizon=50.0)
    st_ = init_state(sga_pair(1, 0.2), 32)
    with pytest.warns(WrapWarning):
        evolve_to(st_, 20.0, 0.05)
    assert min_lattice_size(sga_pair(1, 0.2), 100.0) % 2 == 0


def test_decoupled_emitters():
    # the geometry rejects exactly zero couplings; 1e-200 is zero at double precision
    cfg = dga_pair(1, 1e-200, detuning=0.7)
    st_ = init_state(cfg, 32, "eg")
    evolve_to(st_, 3.0, 0.05)
    assert np.allclose(st_.c_atoms, [np.exp(-0.7j * 3.0), 0], atol=1e-13)
    assert np.abs(st_.c_field).max() < 1e-15


@pytest.mark.parametrize("cfg,n", [(sga_pair(1, 0.25), 48), (octahedron_pair(1, 0.3), 12)])
def test_norm_over_many_steps(cfg, n):
    st_ = init_state(cfg, n, "plus")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WrapWarning)
        evolve_to(st_, 10000 * 0.05, 0.05)
    assert abs(st_.norm() - 1) < 1e-10


def test_time_reversal():
    cfg = dga_pair(1, 0.3, detuning=0.4, phases=(0.3, 1.1, -0.7))
    st_ = init_state(cfg, 64, "custom", theta=0.4, phi=0.9)
    start = st_.copy()
    evolve_to(st_, 8.0, 0.05)
    evolve_to(st_, 0.0, 0.05)
    assert np.abs(st_.c_atoms - start.c_atoms).max() < 1e-8
    assert np.abs(st_.c_field).max() < 1e-8


def test_single_step_matches_evolve():
    cfg = sga_pair(1, 0.25)
    a = init_state(cfg, 32, "plus")
    b = init_state(cfg, 32, "plus")
    for _ in range(4):
        step(a, 0.05)
    evolve_to(b, 0.2, 0.05)
    assert np.allclose(a.c_field, b.c_field, atol=1e-14)
    assert np.allclose(a.c_atoms, b.c_atoms, atol=1e-14)


def test_translation_covariance():
    base = sga_pair(1, 0.25, phases=(0.2, 1.0, 2.0))
    moved = PairConfig(*(em.shifted((5, 3)) for em in base.emitters), base.detuning)
    n = 64
    a = init_state(base, n, "plus")
    b = init_state(moved, n, "plus")
    evolve_to(a, 6.0, 0.05)
    evolve_to(b, 6.0, 0.05)
    assert np.allclose(a.c_atoms, b.c_atoms, atol=1e-13)
    # compare both fields site by site in lattice coordinates
    for site in [(0, 0), (3, -2), (7, 4), (-5, 1)]:
        shifted = tuple(s + d for s, d in zip(site, (5, 3)))
        assert abs(a.c_field[a.site_index(site)] - b.c_field[b.site_index(shifted)]) < 1e-13


def test_step_refinement_is_second_order():
    cfg = octahedron_pair(1, 0.1)
    out = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WrapWarning)
        for dt in (0.05, 0.025, 0.0125):
            st_ = init_state(cfg, 32, "eg")
            evolve_to(st_, 20.0, dt)
            out.append(abs(st_.c_atoms[0]) ** 2)
    d1, d2 = out[0] - out[1], out[1] - out[2]
    assert abs(d1 / d2 - 4) < 0.2
    assert abs(d1) < 2e-4


def test_bic_plateau_small_run():
    # |C_-|^2 approaches [1/(1+g^2)]^2 for the n=1 diamond at band center
    g = 0.1
    st_ = init_state(dga_pair(1, g), 256, "minus")
    tr = evolve_to(st_, 80.0, 0.05, every=100)
    c = (tr.atoms[:, 0] - tr.atoms[:, 1]) / math.sqrt(2)
    assert abs(abs(c[-1]) ** 2 - (1 / (1 + g * g)) ** 2) < 2e-3


def test_observers_get_readonly_copies():
    st_ = init_state(sga_pair(1, 0.2), 32)
    seen = []

    def obs(s):
        assert not s.c_field.flags.writeable
        seen.append(s.time)
        return s.norm()

    tr = evolve_to(st_, 1.0, 0.05, observers={"norm": obs}, every=5)
    assert len(seen) == 5 and tr.times[0] == 0.0 and tr.times[-1] == pytest.approx(1.0)
    assert np.allclose(tr.records["norm"], 1, atol=1e-12)


def test_momentum_parseval_and_zero():
    st_ = init_state(sga_pair(1, 0.25), 64, "plus")
    assert not momentum_snapshot(st_).any()
    evolve_to(st_, 5.0, 0.05)
    grid = momentum_snapshot(st_)
    assert abs(np.sum(grid ** 2) - np.sum(np.abs(st_.c_field) ** 2)) < 1e-12


@pytest.mark.parametrize("binary", [False, True])
def test_dump_roundtrip(binary):
    rng = np.random.default_rng(0)
    grid = rng.random((6, 6))
    fh = io.BytesIO() if binary else io.StringIO()
    dump_snapshot(grid, 12.5, "abc123", fh, binary=binary)
    fh.seek(0)
    back, t, h = load_snapshot(fh, binary=binary)
    assert np.array_equal(back, grid) and t == 12.5 and h == "abc123"


@settings(max_examples=15)
@given(theta=st.floats(0, math.pi), phi=st.floats(0, 2 * math.pi),
       p=st.tuples(*[st.floats(0, 2 * math.pi)] * 3), delta=st.floats(-3, 3))
def test_norm_property(theta, phi, p, delta):
    cfg = dga_pair(1, 0.3, detuning=delta, phases=p)
    st_ = init_state(cfg, 24, "custom", theta=theta, phi=phi)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", WrapWarning)
        evolve_to(st_, 5.0, 0.05)
    assert abs(st_.norm() - 1) < 1e-12
