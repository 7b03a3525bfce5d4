r"""Emitter and photon amplitudes from the resolvent.

The collective amplitude of ``|+>`` or ``|->`` is

.. math:: C(t) = -\frac{1}{2\pi i}\int dE\, G_e(E + i0)\, e^{-iEt},
          \qquad G_e(z) = \frac{1}{z - \Delta - \Sigma(z)} .

Closing the contour in the lower half-plane splits it into pole terms
``R e^{-izt}`` (bound states on the first sheet, unstable poles on the
continued sheets) and three detour integrals hanging down from the branch
points ``4, 0, -4``:

.. math:: C_{\rm BCD}(t) = \frac{1}{2\pi}\sum_j \int_{-\infty}^0 dy\,
          \big[G^{R_j} - G^{L_j}\big](x_j + iy)\, e^{-i(x_j + iy)t}

with sheets ``(R, L) = (I, III), (III, II), (II, I)`` for
``x = 4, 0, -4``. The substitution ``y = -s/t`` turns each detour into an
integral over ``s in [0, 40]`` against ``e^{-s}``, evaluated here on a graded
Gauss-Legendre mesh that resolves the logarithmic behavior at ``s = 0``.

:func:`amplitude_fourier` integrates along ``Im z = eta`` instead and serves
as an independent oracle.
"""
from __future__ import annotations

import functools
import warnings
from dataclasses import dataclass

import numpy as np

from .elliptic import Sheet
from .geometry import PairConfig, structure_factor
from .selfenergy import SelfEnergyModel, sigma
from .spectral import find_all_poles

__all__ = [
    "Decomposition",
    "decompose",
    "amplitude",
    "bcd",
    "amplitude_fourier",
    "photon_amplitude_k",
    "mode_coupling",
    "DETOURS",
    "StepResolutionWarning",
    "NearDegeneracyWarning",
]

DETOURS = ((4.0, Sheet.FIRST, Sheet.THIRD),
           (0.0, Sheet.THIRD, Sheet.SECOND),
           (-4.0, Sheet.SECOND, Sheet.FIRST))
S_MAX = 40.0
# Below this time the detour substitution is ill-conditioned; use the Fourier route.
T_SWITCH = 1.0


class StepResolutionWarning(RuntimeWarning):
    pass


class NearDegeneracyWarning(RuntimeWarning):
    pass


@functools.lru_cache(maxsize=1)
def _graded_rule(order=16):
    """Nodes and weights on ``[0, S_MAX]`` graded geometrically toward ``s = 0``."""
    edges = np.concatenate([[0.0], np.geomspace(1e-12, 0.5, 24), [1, 2, 4, 6, 9, 13, 18, 24, 31, S_MAX]])
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (b + a)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return nodes, weights


def _green(model, delta, z, sheet):
    m = model.on_sheet(sheet)
    return 1.0 / (z - delta - np.asarray(sigma(m, z)))


def _detour_sum(model, delta, t, extra=None):
    """Sum of the three detour integrals at a single ``t > 0``.

    ``extra(z)`` multiplies the integrand (used for the photon propagator).
    """
    s, w = _graded_rule()
    y = -s / t
    total = 0j
    for x, right, left in DETOURS:
        z = x + 1j * y
        diff = _green(model, delta, z, right) - _green(model, delta, z, left)
        if extra is not None:
            diff = diff * extra(z)
        # dy = ds / t and e^{-i(x+iy)t} = e^{-ixt} e^{-s}
        total += np.exp(-1j * x * t) * np.sum(w * diff * np.exp(-s)) / t
    return total / (2 * np.pi)


def bcd(model: SelfEnergyModel, detuning, t) -> complex:
    """Branch-cut detour contribution to ``C(t)`` (``t > 0``; arrays allowed)."""
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr <= 0):
        raise ValueError("detour integrals need t > 0")
    out = np.array([_detour_sum(model, float(detuning), tt) for tt in t_arr.ravel()]).reshape(t_arr.shape)
    return complex(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class Decomposition:
    """Pole set plus detour evaluator for one model and detuning."""

    model: SelfEnergyModel
    detuning: float
    poles: tuple

    def pole_part(self, t):
        t = np.asarray(t, dtype=float)
        out = np.zeros(t.shape, dtype=complex)
        for p in self.poles:
            out = out + p.term(t)
        return out

    def bcd(self, t):
        return bcd(self.model, self.detuning, t)

    def __call__(self, t):
        return amplitude(self.model, self.detuning, t, decomposition=self)


@functools.lru_cache(maxsize=64)
def decompose(model: SelfEnergyModel, detuning) -> Decomposition:
    """Locate all poles that enter ``C(t)`` (cached per model and detuning)."""
    model = model.on_sheet(Sheet.FIRST)
    poles = tuple(find_all_poles(model, float(detuning)))
    return Decomposition(model, float(detuning), poles)


def amplitude(model: SelfEnergyModel, detuning, t, decomposition=None):
    """Collective amplitude ``C(t)`` from poles and detours.

    Times below ``1`` switch to :func:`amplitude_fourier`, where the
    detour substitution is ill-conditioned.
    """
    if model.config.dimension != 2:
        raise NotImplementedError("resolvent dynamics is implemented for 2D lattices")
    dec = decomposition or decompose(model, float(detuning))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty(t_arr.shape, dtype=complex)
    early = t_arr < T_SWITCH
    if np.any(early):
        out[early] = amplitude_fourier(dec.model, dec.detuning, t_arr[early])
    late = ~early
    if np.any(late):
        out[late] = dec.pole_part(t_arr[late]) + bcd(dec.model, dec.detuning, t_arr[late])
    return complex(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))


@functools.lru_cache(maxsize=16)
def _fourier_grid(model, delta, eta, width, step):
    n = int(np.ceil(2 * width / step))
    energies = np.linspace(-width, width, n + 1)
    w = energies + 1j * eta
    sig = np.asarray(sigma(model.on_sheet(Sheet.FIRST), w))
    # G - G0 with G0 = 1/(w - delta), whose transform is known exactly
    rem = sig / ((w - delta) * (w - delta - sig))
    return energies, rem, energies[1] - energies[0]


def amplitude_fourier(model: SelfEnergyModel, detuning, t, eta=1e-3, step=None, width=None,
                      t_max=200.0):
    r"""``C(t)`` by direct integration along ``E + i eta``.

    The free part ``1/(z - Delta)`` is subtracted and restored exactly; the
    remainder is integrated with the trapezoid rule on ``[-W, W]``,
    ``W = 8 + 10 g^2``, and multiplied by ``e^{eta t}`` (an exact contour
    shift). The default step ``eta/4`` keeps the aliasing error near
    ``exp(-8 pi)``; it must not exceed ``min(pi/(4t), 1e-2)``.
    """
    delta = float(detuning)
    g2 = model.config.coupling_scale ** 2
    width = 8.0 + 10.0 * g2 if width is None else float(width)
    step = eta / 4 if step is None else float(step)
    t_arr = np.asarray(t, dtype=float)
    t_hi = float(np.max(t_arr)) if t_arr.size else 0.0
    if t_hi > t_max or step > min(np.pi / (4 * max(t_hi, 1e-12)), 1e-2):
        warnings.warn("trapezoid step too coarse for the requested times", StepResolutionWarning, stacklevel=2)
    energies, rem, h = _fourier_grid(model, delta, float(eta), width, step)
    weights = np.full(energies.size, h)
    weights[0] = weights[-1] = h / 2
    flat = t_arr.ravel()
    out = np.empty(flat.shape, dtype=complex)
    for i, tt in enumerate(flat):
        integral = np.sum(weights * rem * np.exp(-1j * energies * tt))
        out[i] = np.exp(-1j * delta * tt) + 1j / (2 * np.pi) * np.exp(eta * tt) * integral
    return complex(out[0]) if t_arr.ndim == 0 else out.reshape(t_arr.shape)


# --- photons --------------------------------------------------------------------

def mode_coupling(config: PairConfig, parity, k):
    r"""Coupling of mode ``k`` to the collective state: ``(conj g_a(k) + p conj g_b(k)) / sqrt 2``.

    ``g_j(k) = sum_p g_jp e^{i k . n_jp}``. The per-site amplitude of a
    periodic lattice with ``N^d`` sites is this continuum amplitude divided
    by ``sqrt(N^d)``.
    """
    ga = structure_factor(config.emitter_a, k)
    gb = structure_factor(config.emitter_b, k)
    return (np.conj(ga) + parity * np.conj(gb)) / np.sqrt(2.0)


def _dispersion(k):
    k = np.asarray(k, dtype=float)
    return -2.0 * np.sum(np.cos(k), axis=-1)


def photon_amplitude_k(config: PairConfig, parity, k, t, decomposition=None):
    r"""Continuum-normalized photon amplitude ``C_k(t)`` for an initial ``|+>`` / ``|->``.

    ``G_k(z) = A(k) G_e(z) / (z - omega_k)`` with ``A`` from
    :func:`mode_coupling`. The time transform collects the mode pole at
    ``omega_k + i0``, the emitter poles ``R A e^{-izt}/(z - omega_k)`` and
    the detour integrals of the same product. ``k`` is a single wavevector.
    """
    if config.dimension != 2:
        raise NotImplementedError("resolvent photon amplitudes are implemented for 2D lattices")
    model = SelfEnergyModel(config, parity)
    dec = decomposition or decompose(model, config.detuning)
    k = np.asarray(k, dtype=float)
    amp = complex(mode_coupling(config, parity, k))
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if amp == 0:
        out = np.zeros(t_arr.shape, dtype=complex)
        return complex(out[0]) if np.ndim(t) == 0 else out
    omega = float(_dispersion(k))
    for p in dec.poles:
        if abs(p.z - omega) < 1e-6:
            warnings.warn(f"mode energy {omega} within 1e-6 of pole {p.z}", NearDegeneracyWarning, stacklevel=2)
    if min(abs(omega - x) for x, _, _ in DETOURS) < 1e-9:
        warnings.warn("mode energy on a detour line", NearDegeneracyWarning, stacklevel=2)
    g_mode = complex(_green(dec.model, dec.detuning, complex(omega), Sheet.FIRST))
    out = np.empty(t_arr.shape, dtype=complex)
    for i, tt in enumerate(t_arr):
        if tt <= 0:
            out[i] = 0.0
            continue
        value = g_mode * np.exp(-1j * omega * tt)
        for p in dec.poles:
            value += p.residue * np.exp(-1j * p.z * tt) / (p.z - omega)
        value += _detour_sum(dec.model, dec.detuning, tt, extra=lambda z: 1.0 / (z - omega))
        out[i] = amp * value
    return complex(out[0]) if np.ndim(t) == 0 else out.reshape(np.shape(t))
