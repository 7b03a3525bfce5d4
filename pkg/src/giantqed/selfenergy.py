r"""Collective self-energies of an emitter pair.

For a pair in the collective states ``|+>`` and ``|->``

.. math:: \Sigma_\pm(z) = \Sigma_e(z) \pm \Sigma_{12}(z),

where each piece is a weighted sum of lattice Green's function components
over the relative offsets between coupling points. In 2D the components come
from :mod:`giantqed.green2d` on any Riemann sheet; in 3D they are computed
numerically, either on a Brillouin-zone grid with a broadening that is
extrapolated away or by integrating the exact 2D components over ``k_z``.
"""
from __future__ import annotations

import functools
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from .elliptic import Sheet, continue_k, continue_e
from .geometry import PairConfig, offset_weights
from .green2d import SingularityError, lattice_green, limit_on_axis, m_side

__all__ = [
    "SelfEnergyModel",
    "MarkovData",
    "ConvergenceError",
    "sigma",
    "sigma_dga1_closed",
    "sigma_sga1_closed",
    "sigma3d",
    "markov",
    "band_edge",
]


class ConvergenceError(RuntimeError):
    """Numerical limit or root search failed its accuracy check."""


def band_edge(dimension: int) -> float:
    """Half bandwidth of the nearest-neighbour lattice (``2 d J``)."""
    return 2.0 * dimension


def _combine(config: PairConfig, parity: int) -> dict:
    """Coefficients ``c[offset]`` with ``Sigma_parity = sum c * G(offset)``.

    Offsets are folded to canonical form (sorted absolute components).
    """
    a, b = config.emitters
    terms = {}

    def add(weights, factor):
        for off, w in weights.items():
            key = tuple(sorted((abs(x) for x in off), reverse=True))
            terms[key] = terms.get(key, 0j) + factor * np.conj(w)

    add(offset_weights(a, a), 0.5)
    add(offset_weights(b, b), 0.5)
    add(offset_weights(a, b), 0.5 * parity)
    add(offset_weights(b, a), 0.5 * parity)
    return {k: v for k, v in terms.items() if abs(v) > 1e-15}


@dataclass(frozen=True)
class SelfEnergyModel:
    """``Sigma_parity(z)`` for ``config`` evaluated on ``sheet``.

    Calling the model evaluates the self-energy (2D only; 3D pairs go
    through :func:`sigma3d`).
    """

    config: PairConfig
    parity: int = +1
    sheet: Sheet = Sheet.FIRST

    def __post_init__(self):
        if self.parity not in (1, -1):
            raise ValueError("parity must be +1 or -1")
        object.__setattr__(self, "sheet", Sheet.parse(self.sheet))

    @functools.cached_property
    def coefficients(self) -> dict:
        return _combine(self.config, self.parity)

    @functools.cached_property
    def max_index(self) -> int:
        return max(max(k) for k in self.coefficients)

    def on_sheet(self, sheet) -> "SelfEnergyModel":
        return SelfEnergyModel(self.config, self.parity, Sheet.parse(sheet))

    def __call__(self, z):
        return sigma(self, z)

    def derivative(self, z, h=1e-6):
        """``d Sigma / dz`` by a fourth-order central difference along the real direction."""
        z = complex(z)
        f = lambda w: complex(sigma(self, w))
        return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)


def _sigma_2d(model: SelfEnergyModel, z):
    table = lattice_green(z, model.max_index, model.sheet)
    out = 0
    for (m, n), c in model.coefficients.items():
        out = out + c * table[(m, n)]
    return out


def sigma(model: SelfEnergyModel, z):
    """Self-energy of ``model`` at ``z`` (scalar or array), 2D lattices.

    At the band center the value is the boundary limit from above (first
    sheet) or from below (continued sheets).
    """
    if model.config.dimension != 2:
        raise ValueError("use sigma3d for 3D configurations")
    z_arr = np.asarray(z, dtype=complex)
    center = z_arr == 0
    if not np.any(center):
        out = _sigma_2d(model, z_arr)
        return complex(out) if z_arr.ndim == 0 else out
    if z_arr.ndim == 0:
        return _band_center(model)
    out = np.empty(z_arr.shape, dtype=complex)
    out[~center] = _sigma_2d(model, z_arr[~center])
    out[center] = _band_center(model)
    return out


def _band_center(model):
    if model.sheet is Sheet.FIRST:
        return limit_on_axis(lambda w: _sigma_2d(model, w), 0.0)
    # continued sheets: approach along the imaginary axis from below, staying
    # on the side that belongs to the sheet
    sgn = 1.0 if model.sheet is Sheet.THIRD else -1.0
    return limit_on_axis(lambda w: _sigma_2d(model, sgn * 1e-300 + np.conj(w)), 0.0)


def _closed_args(z, sheet):
    sheet = Sheet.parse(sheet)
    z = complex(z)
    if sheet is Sheet.FIRST and z.imag == 0 and abs(z.real) == 4.0:
        raise SingularityError("band edge: K(1) diverges on the first sheet")
    m = 16.0 / z**2
    side = float(m_side(z, sheet))
    return sheet, z, m, side


def sigma_dga1_closed(z, parity, sheet=Sheet.FIRST, g=1.0):
    """Closed-form ``Sigma_+-`` for a DGA pair with ``n = 1``.

    ``(g^2/4)(4z - p z^2)((2/pi) K[(4/z)^2] - 1) + p g^2`` for parity ``p``;
    the band-center value is the limit ``p g^2``.
    """
    if complex(z) == 0:
        return complex(parity * g * g)
    sheet, z, m, side = _closed_args(z, sheet)
    k = continue_k(m, sheet, side=side)
    return g * g / 4 * (4 * z - parity * z * z) * (2 / np.pi * k - 1) + parity * g * g


def sigma_sga1_closed(z, parity, sheet=Sheet.FIRST, g=1.0):
    """Closed-form ``Sigma_+-`` for an SGA pair with ``n = 1``, from the anchors.

    Obtained by reducing ``4G[0,0] + 8G[2,0] + 4G[2,2] +- (9G[1,1] + 6G[3,1] + G[3,3])``
    to ``G[0,0], G[1,0], G[1,1]`` with the lattice difference equation and the
    diagonal recursion.
    """
    sheet, z, m, side = _closed_args(z, sheet)
    k = continue_k(m, sheet, side=side)
    e = continue_e(m, sheet, side=side)
    inv = 1.0 / m
    g00 = 2 / (np.pi * z) * k
    g11 = 2 / (np.pi * z) * ((2 * inv - 1) * k - 2 * inv * e)
    g10 = 0.25 - k / (2 * np.pi)
    even = -16 / 3 * g00 - 8 * z * g10 + (32 / 3 * inv - 64 / 3) * g11
    odd = ((128 / 15 - 16 / 15 * inv) * g00 + 12 * z * g10
           + (3 * z * z + 72 / 5 + 8 / 15 * (2 * inv - 1) * (8 * inv - 19)) * g11)
    return g * g * (even + parity * odd)


# --- 3D -----------------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _octant_grid(n_grid):
    """Octant wavevector samples of an ``n_grid^3`` periodic grid with multiplicities."""
    if n_grid % 2:
        raise ValueError("3D grid size must be even")
    k = 2 * np.pi * np.arange(n_grid // 2 + 1) / n_grid
    mult = np.full(k.size, 2.0)
    mult[0] = mult[-1] = 1.0
    return k, mult


@functools.lru_cache(maxsize=16)
def _grid_weights(coeff_items, n_grid):
    k, mult = _octant_grid(n_grid)
    c = np.cos(k)
    omega = -2 * (c[:, None, None] + c[None, :, None] + c[None, None, :])
    weight = np.zeros_like(omega)
    for (dx, dy, dz), coef in coeff_items:
        weight = weight + coef.real * (np.cos(k * dx)[:, None, None] * np.cos(k * dy)[None, :, None]
                                       * np.cos(k * dz)[None, None, :])
    w3 = mult[:, None, None] * mult[None, :, None] * mult[None, None, :]
    return omega.ravel(), (weight * w3).ravel() / n_grid**3


def _coeff_items(model):
    items = tuple(sorted(model.coefficients.items()))
    if any(abs(c.imag) > 1e-12 for _, c in items):
        raise NotImplementedError("3D self-energies support real coupling amplitudes only")
    return items


def _grid_sum(model, z, eps, n_grid):
    omega, weight = _grid_weights(_coeff_items(model), n_grid)
    return complex(np.sum(weight / (z + 1j * eps - omega)))


def _nested(model, z):
    """3D components as ``k_z`` integrals of exact first-sheet 2D components."""
    items = _coeff_items(model)
    max_xy = max(max(k[0], k[1]) for k, _ in items)
    z = complex(z)

    def integrand(kz):
        w = z + 2 * np.cos(kz)
        if w == 0:
            w = 1e-14j
        table = lattice_green(w, max_xy, Sheet.FIRST)
        total = 0j
        for (a, b, c), coef in items:
            # the canonical 3D offset is sorted; any two components can play x, y
            total += coef.real * np.cos(c * kz) * table[(max(a, b), min(a, b))]
        return total

    pts = []
    for target in (-4.0, 0.0, 4.0):
        arg = (target - z.real) / 2
        if -1 < arg < 1:
            pts.append(float(np.arccos(arg)))
    val, err = integrate.quad(integrand, 0.0, np.pi, complex_func=True, points=sorted(pts) or None,
                              limit=400, epsabs=1e-11, epsrel=1e-10)
    return complex(val) / np.pi


def _distance_to_band(z, dimension):
    edge = band_edge(dimension)
    dx = max(abs(z.real) - edge, 0.0)
    return float(np.hypot(dx, z.imag))


def sigma3d(model: SelfEnergyModel, z, epsilon=1e-3, n_grid=128, method="auto"):
    r"""Self-energy of a 3D cubic-lattice pair at ``z`` (first sheet).

    ``method="grid"`` sums ``weight(k) / (z + i eps - omega(k))`` over an
    ``n_grid^3`` Brillouin-zone grid (reduced to one octant by the cosine
    symmetry) at broadenings ``4 eps, 2 eps, eps`` and Richardson-extrapolates
    to ``eps -> 0``; it raises :class:`ConvergenceError` when the
    extrapolation residual exceeds ``1e-4 |value|``. Inside the band a finite
    grid rarely meets that bound.

    ``method="nested"`` integrates exact 2D components over ``k_z``
    adaptively and needs no broadening; real ``z`` is read as ``z + i0``.

    ``method="auto"`` (default) uses the plain grid sum (no broadening) when
    ``z`` is at least one unit from the band, where it converges
    exponentially in ``n_grid``, and the nested route otherwise.
    """
    if model.config.dimension != 3:
        raise ValueError("sigma3d needs a 3D configuration")
    z = complex(z)
    if method == "auto":
        if _distance_to_band(z, 3) >= 1.0:
            return _grid_sum(model, z, 0.0, n_grid)
        method = "nested"
    if method == "nested":
        return _nested(model, z)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    f1, f2, f4 = (_grid_sum(model, z, s * epsilon, n_grid) for s in (1, 2, 4))
    # f(eps) = f0 + a eps + b eps^2
    r1 = 2 * f1 - f2
    r2 = 2 * f2 - f4
    value = (4 * r1 - r2) / 3
    if abs(value - r1) > 1e-4 * max(abs(value), 1e-300):
        raise ConvergenceError(f"broadening extrapolation did not settle at z={z}: "
                               f"residual {abs(value - r1):.2e}")
    return value


# --- Markov data ---------------------------------------------------------------

@dataclass(frozen=True)
class MarkovData:
    shift: float
    rate: float


def markov(model: SelfEnergyModel, detuning, **kw) -> MarkovData:
    """Markovian shift ``Re Sigma(Delta + i0)`` and rate ``-2 Im Sigma(Delta + i0)``.

    2D pairs are evaluated directly on the upper lip of the cut (band center
    through the boundary limit); 3D pairs through :func:`sigma3d`.
    """
    detuning = float(detuning)
    first = model.on_sheet(Sheet.FIRST)
    if model.config.dimension == 2:
        value = complex(sigma(first, complex(detuning)))
    else:
        value = sigma3d(first, detuning, **kw)
    edge = band_edge(model.config.dimension)
    rate = 0.0 if abs(detuning) > edge else max(-2.0 * value.imag, 0.0)
    return MarkovData(shift=value.real, rate=rate)
