r"""Square-lattice Green's function components on every Riemann sheet.

The elementary components (energies in units of ``J``, ``g`` factored out)

.. math:: G(z; [m, n]) = \frac{1}{(2\pi)^2}\iint d^2k
          \frac{\cos(k_x m + k_y n)}{z + 2\cos k_x + 2\cos k_y}

are built from three closed-form anchors ``[0,0]``, ``[1,0]``, ``[1,1]`` in
terms of ``K`` and ``E`` of ``m(z) = (4/z)^2``. The diagonal uses the
three-term recursion in ``n``; every other entry follows from the lattice
difference equation

.. math:: z G[m,n] + G[m+1,n] + G[m-1,n] + G[m,n+1] + G[m,n-1] = \delta_{m0}\delta_{n0}

swept outward row by row. Upward recursion amplifies rounding for energies
away from the band; a cheap perturbation estimate of the forward error
decides whether the table is recomputed in extended precision (mpmath).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import mpmath
import numpy as np
from scipy import integrate

from .elliptic import Sheet, branch_sign, continue_e, continue_k

__all__ = [
    "GreenTable",
    "SingularityError",
    "StabilityError",
    "anchors",
    "fill_table",
    "lattice_green",
    "oracle",
    "limit_on_axis",
    "dump_table",
    "m_side",
]

STABILITY_BOUND = 32
# Retry in extended precision when the estimated relative forward error exceeds this.
RETRY_THRESHOLD = 1e-9


class SingularityError(ZeroDivisionError):
    """Energy at the band center (``z = 0``), where the anchors are singular."""


class StabilityError(ArithmeticError):
    """Recursion error could not be brought under control."""


def m_side(z, sheet):
    """Sign of the infinitesimal imaginary part of ``m = 16/z^2`` (array aware).

    Real energies on the first sheet are read as ``z + i0`` (retarded);
    on the continued sheets, which live below the axis, as ``z - i0``. On the
    imaginary axis the third sheet takes ``Re z -> 0+`` and the second sheet
    ``Re z -> 0-``.
    """
    sheet = Sheet.parse(sheet)
    z = np.asarray(z, dtype=complex)
    re_default = -1.0 if sheet is Sheet.SECOND else 1.0
    im_default = 1.0 if sheet is Sheet.FIRST else -1.0
    re = np.where(z.real != 0, np.sign(z.real), re_default)
    im = np.where(z.imag != 0, np.sign(z.imag), im_default)
    return -re * im


def _check_sheet_domain(z, sheet):
    if sheet is Sheet.SECOND and np.any(z.real > 0):
        raise ValueError("second sheet is defined for Re z <= 0")
    if sheet is Sheet.THIRD and np.any(z.real < 0):
        raise ValueError("third sheet is defined for Re z >= 0")


def anchors(z, sheet=Sheet.FIRST):
    """Closed-form ``(G[0,0], G[1,1], G[1,0])`` at ``z`` on ``sheet``.

    Vectorized over ``z``. Raises :class:`SingularityError` at ``z = 0``.
    """
    sheet = Sheet.parse(sheet)
    z = np.asarray(z, dtype=complex)
    if np.any(z == 0):
        raise SingularityError("anchors are singular at z = 0; use limit_on_axis")
    _check_sheet_domain(z, sheet)
    m = 16.0 / z**2
    side = m_side(z, sheet)
    k = continue_k(m, sheet, side=side)
    e = continue_e(m, sheet, side=side)
    inv_m2 = z**2 / 8.0  # 2/m
    g00 = 2.0 / (np.pi * z) * k
    g11 = 2.0 / (np.pi * z) * ((inv_m2 - 1.0) * k - inv_m2 * e)
    g10 = 0.25 - k / (2.0 * np.pi)
    if g00.ndim == 0:
        return complex(g00), complex(g11), complex(g10)
    return g00, g11, g10


def _recurse(z, g00, g11, g10, max_index, one=1.0):
    """Fill the canonical table ``{(m, n): value}`` for ``m >= n >= 0``.

    Works for numpy arrays and for mpmath scalars alike (``one`` supplies the
    multiplicative unit of the arithmetic in use).
    """
    t = {(0, 0): g00}
    if max_index == 0:
        return t
    t[(1, 0)] = g10
    t[(1, 1)] = g11
    two_over_m = z * z / 8
    for row in range(1, max_index):
        get = lambda a, b: t[(max(abs(a), abs(b)), min(abs(a), abs(b)))]
        for n in range(row):
            src = one if (row == 0 and n == 0) else 0
            t[(row + 1, n)] = src - z * t[(row, n)] - get(row - 1, n) - get(row, n + 1) - get(row, n - 1)
        t[(row + 1, row)] = -(z * t[(row, row)] + 2 * t[(row, row - 1)]) / 2
        k = row
        t[(k + 1, k + 1)] = (4 * k * one / (2 * k + 1)) * (two_over_m - 1) * t[(k, k)] \
            - ((2 * k - 1) * one / (2 * k + 1)) * t[(k - 1, k - 1)]
    return t


def _mp_anchors(z, sheet):
    """Anchors in mpmath arithmetic at the current working precision."""
    z = mpmath.mpc(z)
    m = 16 / z**2
    side = float(m_side(complex(z), sheet))
    tiny = mpmath.mpf(10) ** (-(mpmath.mp.dps + 20))
    if m.imag == 0 and m.real > 1:
        m = mpmath.mpc(m.real, side * tiny)
    elif m.imag == 0 and m.real < 0:
        m = mpmath.mpc(m.real, side * tiny)
    k = mpmath.ellipk(m)
    e = mpmath.ellipe(m)
    s = 0 if sheet is Sheet.FIRST else branch_sign(sheet)
    if s:
        w = 1 - m
        k2, e2 = mpmath.ellipk(w), mpmath.ellipe(w)
        k = k + 2j * s * k2
        e = e + 2j * s * (k2 - e2)
    two_over_m = z**2 / 8
    g00 = 2 / (mpmath.pi * z) * k
    g11 = 2 / (mpmath.pi * z) * ((two_over_m - 1) * k - two_over_m * e)
    g10 = mpmath.mpf(1) / 4 - k / (2 * mpmath.pi)
    return z, g00, g11, g10


def _mp_table(z, sheet, max_index, dps):
    with mpmath.workdps(dps):
        zz, g00, g11, g10 = _mp_anchors(z, sheet)
        t = _recurse(zz, g00, g11, g10, max_index, one=mpmath.mpf(1))
        return {key: complex(val) for key, val in t.items()}


def _forward_error(z, a, max_index, base):
    """Relative forward-error estimate from perturbing the anchors."""
    delta = 1e-8
    worst = np.zeros(np.shape(z))
    for signs in ((1, -1, 1), (-1, 1, 1), (1, 1, -1)):
        pert = [x * (1 + s * delta) for x, s in zip(a, signs)]
        alt = _recurse(z, *pert, max_index)
        for key, val in base.items():
            scale = np.maximum(np.abs(val), 1e-300)
            worst = np.maximum(worst, np.abs(alt[key] - val) / scale)
    return worst * (np.finfo(float).eps / delta) * 10


def lattice_green(z, max_index, sheet=Sheet.FIRST, max_error=RETRY_THRESHOLD):
    """All canonical components ``G[m, n]``, ``max_index >= m >= n >= 0``.

    Returns a dict mapping ``(m, n)`` to values shaped like ``z``. Entries
    whose estimated error exceeds ``max_error`` are recomputed in extended
    precision, point by point.
    """
    sheet = Sheet.parse(sheet)
    if max_index > STABILITY_BOUND:
        raise StabilityError(f"max_index {max_index} exceeds stability bound {STABILITY_BOUND}")
    z_arr = np.asarray(z, dtype=complex)
    g00, g11, g10 = (np.asarray(x) for x in anchors(z_arr, sheet))
    table = _recurse(z_arr, g00, g11, g10, max_index)
    if max_index >= 2:
        err = _forward_error(z_arr, (g00, g11, g10), max_index, table)
        bad = np.argwhere(np.atleast_1d(err > max_error))
        if bad.size:
            flat = {key: np.array(val, dtype=complex, copy=True).reshape(-1) for key, val in table.items()}
            zf = z_arr.reshape(-1)
            for (i,) in bad:
                precise = _precise_point(complex(zf[i]), sheet, max_index, float(np.ravel(err)[i]))
                for key in flat:
                    flat[key][i] = precise[key]
            table = {key: val.reshape(z_arr.shape) for key, val in flat.items()}
    if z_arr.ndim == 0:
        return {key: complex(val) for key, val in table.items()}
    return table


def _precise_point(z, sheet, max_index, estimate):
    digits = int(np.ceil(-np.log10(max(estimate, 1e-300)))) if estimate > 0 else 0
    dps = 30 + max(0, 16 - digits) + 2 * max_index
    for _ in range(4):
        a = _mp_table(z, sheet, max_index, dps)
        b = _mp_table(z, sheet, max_index, 2 * dps)
        diff = max(abs(a[k] - b[k]) / max(abs(b[k]), 1e-300) for k in b)
        if diff < 1e-13:
            return b
        dps *= 2
    raise StabilityError(f"extended-precision recursion did not converge at z={z}")


@dataclass(frozen=True)
class GreenTable:
    """Immutable table of ``G[m, n]`` at one energy and sheet (``g`` factored out)."""

    z: complex
    sheet: Sheet
    values: dict = field(repr=False)

    @property
    def max_index(self) -> int:
        return max(m for m, _ in self.values)

    def __getitem__(self, key) -> complex:
        m, n = abs(int(key[0])), abs(int(key[1]))
        return self.values[(max(m, n), min(m, n))]

    def residual(self, m, n) -> complex:
        """Residual of the lattice difference equation at ``[m, n]``."""
        src = 1.0 if (m, n) == (0, 0) else 0.0
        return (self.z * self[m, n] + self[m + 1, n] + self[m - 1, n]
                + self[m, n + 1] + self[m, n - 1] - src)


def fill_table(z, sheet=Sheet.FIRST, max_index=8):
    """Build a :class:`GreenTable` at a single energy ``z``.

    Examples
    --------
    >>> t = fill_table(5.0, max_index=4)
    >>> abs(t[2, 1] - t[1, 2]) == 0
    True
    """
    if max_index > STABILITY_BOUND:
        raise StabilityError(f"max_index {max_index} exceeds stability bound {STABILITY_BOUND}")
    sheet = Sheet.parse(sheet)
    values = lattice_green(complex(z), max_index, sheet)
    return GreenTable(complex(z), sheet, values)


def dump_table(table: GreenTable, fh) -> None:
    """Write ``m n Re Im`` lines with a ``#`` header carrying ``z`` and sheet."""
    fh.write(f"# z = {table.z.real!r} {table.z.imag!r}\n")
    fh.write(f"# sheet = {table.sheet.label}\n")
    fh.write("# m n re im\n")
    for (m, n), val in sorted(table.values.items()):
        fh.write(f"{m} {n} {val.real:.17g} {val.imag:.17g}\n")


def _inner(a, n):
    """``(1/pi) * int_0^pi cos(n k) / (a + 2 cos k) dk`` in closed form."""
    # a + 2 cos k = -(1 - 2 r cos k + r^2)/r with r + 1/r = -a, |r| < 1
    disc = np.sqrt(a * a - 4.0 + 0j)
    r1 = (-a + disc) / 2.0
    r2 = (-a - disc) / 2.0
    r = np.where(np.abs(r1) < np.abs(r2), r1, r2)
    return -r ** (n + 1) / (1.0 - r * r)


def oracle(z, m, n, epsabs=1e-11):
    """First-sheet ``G(z; [m, n])`` by direct integration over the Brillouin zone.

    The ``k_y`` integral is done exactly by residues; the remaining ``k_x``
    integral is adaptive Gauss-Kronrod. Independent of the elliptic anchors
    and of the recursion.
    """
    z = complex(z)
    if z.imag == 0 and abs(z.real) <= 4.0:
        raise ValueError("oracle is defined off the band cut only")
    m, n = abs(int(m)), abs(int(n))

    def integrand(kx):
        return np.cos(m * kx) * _inner(z + 2.0 * np.cos(kx), n)

    # the integrand varies fastest where a = z + 2 cos kx comes closest to [-2, 2]
    pts = [kx for kx in np.linspace(0, np.pi, 9)[1:-1]]
    val, _ = integrate.quad(integrand, 0.0, np.pi, complex_func=True, epsabs=epsabs,
                            epsrel=1e-12, limit=2000, points=pts)
    return complex(val) / np.pi


def limit_on_axis(func, x=0.0, eps=(1e-3, 5e-4, 2.5e-4)):
    """Boundary value ``lim func(x + i eps)`` for ``eps -> 0+``.

    Three-node Richardson elimination assuming
    ``f(eps) = f0 + a eps log(eps) + b eps + O(eps^2 log eps)``, the form
    taken near the logarithmic Van Hove point of the square lattice.
    """
    eps = np.asarray(eps, dtype=float)
    vals = np.array([complex(func(x + 1j * e)) for e in eps])
    mat = np.column_stack([np.ones_like(eps), eps * np.log(eps), eps])
    coef = np.linalg.solve(mat.astype(complex), vals)
    return complex(coef[0])
