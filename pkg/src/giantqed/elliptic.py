r"""Complete elliptic integrals for complex parameter and their sheet continuations.

Convention: the *parameter* ``m`` (not the modulus ``k = sqrt(m)``),

.. math:: K(m) = \int_0^{\pi/2} \frac{d\theta}{\sqrt{1 - m \sin^2\theta}}, \qquad
          E(m) = \int_0^{\pi/2} \sqrt{1 - m \sin^2\theta}\, d\theta .

Both are evaluated through Carlson's symmetric forms,
``K(m) = R_F(0, 1-m, 1)`` and ``E(m) = R_F(0, 1-m, 1) - m R_D(0, 1-m, 1) / 3``.
The branch cut is ``m`` real in ``[1, inf)``. A value exactly on the cut needs
an explicit ``side`` (``+1`` for ``m + i0``, ``-1`` for ``m - i0``).

Below the band cuts the square-lattice self-energies live on the second and
third Riemann sheets, reached through

.. math:: K(m) \to K(m) + 2 i s K(1-m), \qquad
          E(m) \to E(m) + 2 i s [K(1-m) - E(1-m)]

where the sign ``s`` is not fixed by hand. :func:`branch_sign` picks it by
requiring continuity of the local lattice Green's function when the real
axis is crossed from above, and caches the result.
"""
from __future__ import annotations

import enum
import functools

import numpy as np
from scipy.special import elliprd, elliprf

__all__ = [
    "Sheet",
    "DomainError",
    "ellip_k",
    "ellip_e",
    "continue_k",
    "continue_e",
    "branch_sign",
    "verify_continuity",
]

# Imaginary offset that selects a side of the cut inside scipy's Carlson routines.
_TINY = 1e-300


class Sheet(enum.Enum):
    """Riemann sheet of the band-continued self-energy."""

    FIRST = 1
    SECOND = 2
    THIRD = 3

    @property
    def label(self) -> str:
        return {1: "I", 2: "II", 3: "III"}[self.value]

    @classmethod
    def parse(cls, value) -> "Sheet":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper()
        table = {"1": cls.FIRST, "I": cls.FIRST, "FIRST": cls.FIRST,
                 "2": cls.SECOND, "II": cls.SECOND, "SECOND": cls.SECOND,
                 "3": cls.THIRD, "III": cls.THIRD, "THIRD": cls.THIRD}
        try:
            return table[key]
        except KeyError:
            raise ValueError(f"unknown sheet {value!r}") from None


class DomainError(ValueError):
    """Raised when an elliptic parameter sits on the branch cut without a side."""


def _prepare(m, side):
    """Return ``1 - m`` as a complex array with the cut side encoded."""
    m = np.asarray(m, dtype=complex)
    y = 1.0 - m
    on_cut = (m.imag == 0.0) & (m.real > 1.0)
    if np.any(on_cut):
        if side is None:
            raise DomainError("parameter on the branch cut [1, inf) needs side=+1 or -1")
        side = np.broadcast_to(np.asarray(side, dtype=float), m.shape)
        # m + i0 (side=+1) means 1 - m - i0
        y = np.where(on_cut, y.real - 1j * _TINY * np.sign(side), y)
    return m, y


def _scalar(out, like):
    return complex(out) if np.ndim(like) == 0 else out


def ellip_k(m, side=None):
    """Complete elliptic integral of the first kind ``K(m)``.

    Parameters
    ----------
    m : complex or array_like
        Parameter. ``m == 1`` returns ``inf`` (logarithmic singularity).
    side : {+1, -1}, optional
        Required when ``m`` is real and larger than one; selects ``m +/- i0``.
        May be an array broadcastable against ``m``.
    """
    m_arr, y = _prepare(m, side)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = elliprf(0.0, y, 1.0)
    out = np.where(m_arr == 1.0, np.inf + 0j, out)
    return _scalar(out, m)


def ellip_e(m, side=None):
    """Complete elliptic integral of the second kind ``E(m)``; ``E(1) = 1``."""
    m_arr, y = _prepare(m, side)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = elliprf(0.0, y, 1.0) - m_arr * elliprd(0.0, y, 1.0) / 3.0
    out = np.where(m_arr == 1.0, 1.0 + 0j, out)
    return _scalar(out, m)


def _sheet_sign(sheet, sign):
    sheet = Sheet.parse(sheet)
    if sheet is Sheet.FIRST:
        return 0
    return branch_sign(sheet) if sign is None else int(sign)


def continue_k(m, sheet, side=None, sign=None):
    """``K`` continued onto ``sheet``: ``K(m) + 2 i s K(1 - m)``.

    ``side`` is the infinitesimal side of ``m`` (the side of ``1 - m`` is the
    opposite one). ``sign`` overrides the cached continuity-selected ``s``.
    On the first sheet this is plain :func:`ellip_k`.
    """
    s = _sheet_sign(sheet, sign)
    k = ellip_k(m, side)
    if s == 0:
        return k
    other_side = None if side is None else -np.asarray(side)
    return k + 2j * s * ellip_k(1.0 - np.asarray(m, dtype=complex), other_side)


def continue_e(m, sheet, side=None, sign=None):
    """``E`` continued onto ``sheet``: ``E(m) + 2 i s [K(1-m) - E(1-m)]``."""
    s = _sheet_sign(sheet, sign)
    e = ellip_e(m, side)
    if s == 0:
        return e
    other_side = None if side is None else -np.asarray(side)
    w = 1.0 - np.asarray(m, dtype=complex)
    return e + 2j * s * (ellip_k(w, other_side) - ellip_e(w, other_side))


def verify_continuity(model, path, tol=1e-7, max_depth=40):
    """Largest jump of ``model`` along ``path`` after adaptive refinement.

    Every segment between consecutive path points whose jump exceeds ``tol``
    is bisected, following the half with the larger jump, until the jump
    drops below ``tol`` or ``max_depth`` levels are used. A continuous
    function ends below ``tol``; a genuine discontinuity keeps a finite jump
    however fine the subdivision.

    Parameters
    ----------
    model : callable
        Maps a complex ``z`` to a complex value (e.g. a self-energy that
        picks the Riemann sheet from the half-plane of ``z``).
    path : sequence of complex
        Points visited in order.
    """
    path = [complex(z) for z in path]
    if len(path) < 2:
        return 0.0
    values = [complex(model(z)) for z in path]
    worst = 0.0
    for za, zb, va, vb in zip(path[:-1], path[1:], values[:-1], values[1:]):
        jump = abs(vb - va)
        depth = 0
        while jump > tol and depth < max_depth:
            zm = 0.5 * (za + zb)
            vm = complex(model(zm))
            if abs(vm - va) >= abs(vb - vm):
                zb, vb = zm, vm
            else:
                za, va = zm, vm
            jump = abs(vb - va)
            depth += 1
        worst = max(worst, jump)
    return worst


# --- branch-sign resolution ------------------------------------------------

def _local_green(z, sheet, sign):
    """Local square-lattice Green's function ``2 K(16/z^2) / (pi z)`` (J = 1)."""
    z = complex(z)
    m = 16.0 / z**2
    side = _m_side(z, sheet)
    return 2.0 / (np.pi * z) * continue_k(m, sheet, side=side, sign=sign)


def _m_side(z, sheet):
    """Sign of the infinitesimal imaginary part of ``m = 16/z^2``."""
    sheet = Sheet.parse(sheet)
    re = np.sign(z.real) if z.real != 0 else (-1.0 if sheet is Sheet.SECOND else 1.0)
    im = np.sign(z.imag) if z.imag != 0 else (1.0 if sheet is Sheet.FIRST else -1.0)
    return -re * im


def _crossing_path(edge, radius, n=64):
    """Arc over a band edge from outside the band onto the cut, then down below it."""
    if edge < 0:
        theta = np.linspace(np.pi, -np.pi / 2, n)
    else:
        theta = np.linspace(0.0, 1.5 * np.pi, n)
    return edge + radius * np.exp(1j * theta)


@functools.lru_cache(maxsize=None)
def branch_sign(sheet) -> int:
    """Continuation sign ``s`` for ``sheet``, chosen by a continuity test.

    The path loops over the band edge (``-4J`` for the second sheet, ``+4J``
    for the third), lands on the cut inside the band and continues into the
    lower half-plane. Along it the function is evaluated on the first sheet
    while ``Im z >= 0`` and on ``sheet`` below. Both signs are tried; the one
    with the smaller jump wins and must be continuous (jump below ``1e-6``).
    A second crossing in the middle of the half-band (``-/+ 2J``) has to
    agree with the choice.
    """
    sheet = Sheet.parse(sheet)
    if sheet is Sheet.FIRST:
        return 0
    edge = -4.0 if sheet is Sheet.SECOND else 4.0
    mid = edge / 2.0

    def jumps(s):
        def f(z):
            if z.imag >= 0:
                return _local_green(z, Sheet.FIRST, None)
            return _local_green(z, sheet, s)

        path_edge = list(_crossing_path(edge, 0.5))
        path_mid = [mid + 0.3j * (1 - 2 * t) for t in np.linspace(0, 1, 41)]
        return (verify_continuity(f, path_edge), verify_continuity(f, path_mid))

    results = {s: jumps(s) for s in (+1, -1)}
    best = min(results, key=lambda s: max(results[s]))
    if max(results[best]) > 1e-6:
        raise RuntimeError(f"no continuous branch sign for sheet {sheet.label}: {results}")
    return best
