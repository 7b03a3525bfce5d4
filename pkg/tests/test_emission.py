import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from giantqed.emission import (KernelEngine, ZeroFieldError, _initial_atoms, axis_band_fraction,
                               diagonal_band_fraction, emission_snapshot, octant_fractions,
                               optimize_chiral_phases, quadrant_fractions, sector_fraction)
from giantqed.evolve import evolve_to, init_state
from giantqed.geometry import CouplingPoint, EmitterGeometry, PairConfig, dga_pair, octahedron_pair, sga_pair


def _mirror_x(cfg):
    def flip(em):
        return EmitterGeometry(tuple(CouplingPoint((-p.site[0], p.site[1]), p.amplitude) for p in em.points))
    return PairConfig(flip(cfg.emitter_a), flip(cfg.emitter_b), cfg.detuning)


def _evolved(cfg, kind="plus", n=64, t=10.0):
    s = init_state(cfg, n, kind)
    evolve_to(s, t, 0.05)
    return s


def test_fourfold_symmetric_diamond_is_isotropic():
    # both emitters on the same diamond: the coupled system is fourfold symmetric about its center
    a = dga_pair(1, 0.3).emitter_a
    q = quadrant_fractions(_evolved(PairConfig(a, a, 0.0)))
    assert np.allclose(list(q.as_dict().values()), 0.25, atol=1e-3)
    eng = KernelEngine(PairConfig(a, a, 0.0), n=64, t_star=10.0)
    assert eng.fractions((0.0, 0.0, 0.0), _initial_atoms("plus")).max == pytest.approx(0.25, abs=1e-3)


def test_zero_phase_sga_pair_is_balanced_between_opposite_quadrants():
    q = quadrant_fractions(_evolved(sga_pair(1, 0.25)))
    assert abs(q.pp - q.mm) < 1e-10 and abs(q.pm - q.mp) < 1e-10


def test_mirror_swaps_left_and_right():
    cfg = dga_pair(1, 0.3, detuning=-1.0, phases=(0.4, 1.7, 2.9))
    a = quadrant_fractions(_evolved(cfg))
    b = quadrant_fractions(_evolved(_mirror_x(cfg)))
    assert abs(a.pp - b.mp) < 1e-10 and abs(a.pm - b.mm) < 1e-10
    assert abs(a.mp - b.pp) < 1e-10 and abs(a.mm - b.pm) < 1e-10


def test_global_phase_invariance():
    eng = KernelEngine(sga_pair(1, 0.2, detuning=-1.0), n=128, t_star=20.0)
    # a common phase on all four points (the first one included) leaves every coupling product unchanged
    base = sga_pair(1, 0.2, detuning=-1.0, phases=(0.3, 1.1, 2.0))
    shifted = PairConfig(*(EmitterGeometry(tuple(CouplingPoint(p.site, p.amplitude * np.exp(0.77j))
                                                 for p in em.points)) for em in base.emitters), base.detuning)
    a = eng.fractions(base, _initial_atoms("plus"))
    b = eng.fractions(shifted, _initial_atoms("plus"))
    assert max(abs(x - y) for x, y in zip(a.as_dict().values(), b.as_dict().values())) < 1e-10


def test_kernel_engine_matches_split_operator():
    cfg = dga_pair(1, 0.25, detuning=-1.0, phases=(0.5, 2.0, 4.0))
    eng = KernelEngine(cfg, n=128, t_star=20.0)
    fld, c = eng.field(cfg, _initial_atoms("plus"))
    s = init_state(cfg, 128, "plus")
    evolve_to(s, 20.0, 0.05)
    assert np.abs(fld - s.c_field).max() < 5e-3 * np.abs(s.c_field).max()
    assert np.abs(c[-1] - s.c_atoms).max() < 5e-3


@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1))
def test_fractions_sum_to_one(seed):
    rng = np.random.default_rng(seed)
    fld = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
    q = quadrant_fractions(fld, center=(0.5 * rng.integers(-6, 6), 0.5 * rng.integers(-6, 6)), origin=(8, 8))
    vals = list(q.as_dict().values())
    assert abs(sum(vals) - 1) < 1e-12
    assert all(0 <= v <= 1 for v in vals)


def test_dividing_lines_are_excluded():
    fld = np.zeros((8, 8), dtype=complex)
    fld[4, :] = 1.0          # the whole line x = 0
    fld[6, 6] = 1.0          # one site in (+, +)
    q = quadrant_fractions(fld, center=(0.0, 0.0), origin=(4, 4))
    assert q.pp == 1.0


def test_zero_field_error_and_empty_snapshot():
    snap = emission_snapshot(sga_pair(1, 0.2), "plus", t=0.0, n=32)
    assert not snap.real_space.any() and not snap.momentum.any()
    with pytest.raises(ZeroFieldError):
        quadrant_fractions(snap.state)
    with pytest.raises(ValueError):
        quadrant_fractions(init_state(octahedron_pair(1, 0.1), 12))


def test_octant_fractions_sum():
    s = init_state(octahedron_pair(1, 0.3), 24, "plus")
    evolve_to(s, 2.5, 0.05)
    octs = octant_fractions(s)
    assert len(octs) == 8 and abs(sum(octs.values()) - 1) < 1e-12


def test_band_fractions_on_synthetic_fields():
    s = init_state(sga_pair(1, 0.2), 64)
    coords = s.coordinates()
    x, y = np.meshgrid(coords[0], coords[1], indexing="ij")
    cx, cy = s.config.center
    s.c_field[...] = np.exp(-((x - cx) + (y - cy)) ** 2)
    frac, which = diagonal_band_fraction(s)
    assert which == "anti" and frac > 0.99
    s.c_field[...] = np.where(np.abs(y - cy) < 1, 1.0, 0.0)
    assert axis_band_fraction(s) == pytest.approx(1.0)


def test_sector_fractions_partition_and_select():
    rng = np.random.default_rng(1)
    s = init_state(sga_pair(1, 0.2), 64)
    s.c_field[...] = rng.normal(size=(64, 64))
    axis, diag = sector_fraction(s, "axis"), sector_fraction(s, "diagonal")
    main, anti = sector_fraction(s, "main"), sector_fraction(s, "anti")
    # sector edges at odd multiples of 22.5 degrees never pass through lattice sites here
    assert axis + diag == pytest.approx(1.0, abs=1e-12)
    assert main + anti == pytest.approx(diag, abs=1e-12)
    s.c_field[...] = 0
    s.c_field[s.site_index((-20, 21))] = 1.0   # bearing 135 degrees from the center (0.5, 0.5)
    assert sector_fraction(s, "anti") == 1.0 and sector_fraction(s, "main") == 0.0


def test_optimizer_determinism_and_zero_phase_start():
    tmpl = dga_pair(1, 0.25, detuning=-1.0)
    eng = KernelEngine(tmpl, n=96, t_star=15.0)
    a = optimize_chiral_phases(tmpl, 15.0, "plus", n=96, grid=3, verify=False, engine=eng)
    b = optimize_chiral_phases(tmpl, 15.0, "plus", n=96, grid=3, verify=False, engine=eng)
    assert a.phases == b.phases and a.fraction_engine == b.fraction_engine
    assert a.log[0][1:4] == (0.0, 0.0, 0.0)
    assert a.fraction_engine >= max(row[4] for row in a.log[:27])
    assert a.log_table().splitlines()[0] == "iteration,phi1,phi2,phi3,objective"
