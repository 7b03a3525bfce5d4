import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from giantqed.elliptic import (DomainError, Sheet, branch_sign, continue_e, continue_k, ellip_e,
                               ellip_k, verify_continuity)
from giantqed.elliptic import _local_green


def quad_k(m):
    f = lambda th: 1 / np.sqrt(1 - m * np.sin(th) ** 2)
    re = integrate.quad(lambda x: f(x).real, 0, np.pi / 2, epsabs=1e-14, epsrel=1e-13)[0]
    im = integrate.quad(lambda x: f(x).imag, 0, np.pi / 2, epsabs=1e-14, epsrel=1e-13)[0]
    return re + 1j * im


def quad_e(m):
    f = lambda th: np.sqrt(1 - m * np.sin(th) ** 2)
    re = integrate.quad(lambda x: f(x).real, 0, np.pi / 2, epsabs=1e-14, epsrel=1e-13)[0]
    im = integrate.quad(lambda x: f(x).imag, 0, np.pi / 2, epsabs=1e-14, epsrel=1e-13)[0]
    return re + 1j * im


def agm_k(m):
    a, b = 1.0, math.sqrt(1 - m)
    for _ in range(40):
        a, b = (a + b) / 2, math.sqrt(a * b)
    return math.pi / (2 * a)


def test_trivial_values():
    assert ellip_k(0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert ellip_e(0) == pytest.approx(math.pi / 2, abs=1e-15)
    assert ellip_e(1) == 1
    assert np.isinf(abs(ellip_k(1)))


def test_k_against_agm_and_quadrature():
    assert abs(ellip_k(0.5) - agm_k(0.5)) < 1e-12
    m = 0.3 + 0.4j
    assert abs(ellip_k(m) - quad_k(m)) < 1e-10
    assert abs(ellip_e(0.5) - quad_e(0.5)) < 1e-12


def test_cut_requires_side():
    with pytest.raises(DomainError):
        ellip_k(2.0)
    above = ellip_k(2.0, side=+1)
    below = ellip_k(2.0, side=-1)
    assert above == pytest.approx(np.conj(below), abs=1e-14)
    assert above == pytest.approx(ellip_k(2.0 + 1e-13j), abs=1e-6)


def test_first_sheet_dispatch_is_identity():
    assert continue_k(0.5, Sheet.FIRST) == ellip_k(0.5)
    assert continue_e(0.5, Sheet.FIRST) == ellip_e(0.5)


def test_continued_value_finite_and_sign_consistent():
    m = 2 + 0.01j
    val = continue_k(m, Sheet.SECOND)
    assert np.isfinite(val)
    s = branch_sign(Sheet.SECOND)
    assert val == pytest.approx(ellip_k(m) + 2j * s * ellip_k(1 - m), abs=1e-14)


def test_branch_signs_resolved():
    assert branch_sign(Sheet.FIRST) == 0
    assert {branch_sign(Sheet.SECOND), branch_sign(Sheet.THIRD)} <= {1, -1}


def _edge_path(sign):
    def f(z):
        if z.imag >= 0:
            return _local_green(z, Sheet.FIRST, None)
        return _local_green(z, Sheet.SECOND, sign)
    theta = np.linspace(np.pi, -np.pi / 2, 400)
    return f, -4 + 0.5 * np.exp(1j * theta)


def test_verify_continuity_selects_sign():
    assert verify_continuity(lambda z: 3.0, [0.1j, 1 + 1j, 2]) == 0.0
    s = branch_sign(Sheet.SECOND)
    f, path = _edge_path(s)
    good = verify_continuity(f, path)
    f_bad, _ = _edge_path(-s)
    bad = verify_continuity(f_bad, path)
    assert good < 1e-6
    assert bad > 10 * max(good, 1e-7)


def test_continuation_vanishes_far_from_cut():
    # the continuation term of the local Green function falls off like log|z| / |z|
    s = branch_sign(Sheet.SECOND)
    diffs = [abs(_local_green(z, Sheet.SECOND, s) - _local_green(z, Sheet.FIRST, None))
             for z in (-10 - 1j, -100 - 1j, -1000 - 1j, -1e4 - 1j)]
    assert diffs[0] > diffs[1] > diffs[2] > diffs[3]
    assert diffs[3] < 1e-2


unit_disk = st.builds(lambda r, a: r * np.exp(1j * a), st.floats(0.01, 0.95), st.floats(0, 2 * np.pi))


@given(unit_disk)
def test_legendre_relation(m):
    k, e = ellip_k(m), ellip_e(m)
    k1, e1 = ellip_k(1 - m), ellip_e(1 - m)
    assert abs(e * k1 + e1 * k - k * k1 - math.pi / 2) < 1e-10


@given(st.complex_numbers(max_magnitude=3, allow_nan=False, allow_infinity=False)
       .filter(lambda m: abs(m.imag) > 0.05 or m.real < 0.9))
def test_against_quadrature(m):
    assert abs(ellip_k(m) - quad_k(m)) < 1e-10 * max(1, abs(quad_k(m)))
    assert abs(ellip_e(m) - quad_e(m)) < 1e-10 * max(1, abs(quad_e(m)))
