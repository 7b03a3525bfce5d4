"""Poles of the collective emitter propagator on all Riemann sheets.

The propagator ``1 / (z - Delta - Sigma(z))`` has real poles outside the band
on the first sheet (bound states) and complex poles below the band on the
continued sheets (unstable poles). Residues ``1 / (1 - Sigma'(z))`` weigh each
pole in the time evolution.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from .elliptic import Sheet
from .geometry import CouplingPoint, EmitterGeometry, PairConfig
from .selfenergy import (ConvergenceError, SelfEnergyModel, band_edge, sigma, sigma3d)

__all__ = [
    "Pole",
    "DFIResult",
    "find_bound_states",
    "find_unstable_poles",
    "find_all_poles",
    "residue_at",
    "detect_bic",
    "dfi_coupling_3d",
    "DerivativeWarning",
]

KINDS = ("LBS", "UBS", "UPII", "UPIII", "BIC")
MERGE_TOL = 1e-8
# An in-band pole counts as bound when its width is this small relative to its energy.
BIC_Q_TOL = 1e-2


class DerivativeWarning(RuntimeWarning):
    """Two finite-difference step sizes disagree on ``Sigma'``."""


@dataclass(frozen=True)
class Pole:
    sheet: Sheet
    z: complex
    residue: complex
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown pole kind {self.kind!r}")

    def term(self, t):
        """Contribution ``R exp(-i z t)`` to the emitter amplitude."""
        return self.residue * np.exp(-1j * self.z * np.asarray(t, dtype=float))


def _sigma_value(model, z):
    if model.config.dimension == 2:
        return complex(sigma(model, z))
    return sigma3d(model, z)


def _step_size(model, z, h):
    """Finite-difference step that stays clear of the branch points."""
    z = complex(z)
    edge = band_edge(model.config.dimension)
    dist = min(abs(z - edge), abs(z + edge))
    if model.config.dimension == 2 and model.sheet is not Sheet.FIRST:
        dist = min(dist, abs(z.real))
    elif model.config.dimension == 2:
        dist = min(dist, abs(z))
    return min(h, dist / 4)


def _derivative(model, z, h):
    f = lambda w: _sigma_value(model, w)
    return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)


def residue_at(model: SelfEnergyModel, pole, h=1e-6) -> complex:
    """``1 / (1 - Sigma'(z))`` on the pole's sheet.

    ``Sigma'`` comes from fourth-order central differences along the real
    direction at steps ``h`` and ``h/2``; a :class:`DerivativeWarning` is
    issued when they disagree by more than ``1e-6``.
    """
    z = complex(pole.z if isinstance(pole, Pole) else pole)
    if isinstance(pole, Pole):
        model = model.on_sheet(pole.sheet)
    h = _step_size(model, z, h)
    d1 = _derivative(model, z, h)
    d2 = _derivative(model, z, h / 2)
    if abs(d1 - d2) > 1e-6 * max(1.0, abs(d2)):
        warnings.warn(f"unstable derivative at z={z}: {d1} vs {d2}", DerivativeWarning, stacklevel=2)
    return 1.0 / (1.0 - d2)


# --- bound states --------------------------------------------------------------

def _outer_bound(F, edge, g2, sign):
    b = edge + 10 * g2
    while b < 1e4:
        value = F(sign * b)
        if sign * value > 0 and abs(value) > 0.5 * (b - edge):
            return b
        b *= 2
    return 1e4


def find_bound_states(model: SelfEnergyModel, detuning) -> list:
    """Real first-sheet poles outside the band, sorted by energy.

    ``F(E) = E - Delta - Sigma(E)`` is sampled on geometric ladders that
    approach each band edge down to a few ulps and extend to an adaptive outer
    bound; every sign change is refined with Brent's method and kept when
    ``|F| < 1e-12`` or, for roots so close to an edge that ``F`` is steeper
    than ``1e-12`` per ulp, when ``F`` changes sign within four ulps.
    """
    first = model.on_sheet(Sheet.FIRST)
    delta = float(detuning)
    edge = band_edge(model.config.dimension)
    g2 = model.config.coupling_scale ** 2
    F = lambda e: e - delta - _sigma_value(first, e).real
    n_samples = 160 if model.config.dimension == 2 else 48
    poles = []
    for sign in (-1, 1):
        outer = _outer_bound(F, edge, g2, sign)
        dist = np.geomspace(8 * np.spacing(edge), outer - edge, n_samples)
        energies = sign * (edge + dist)
        values = np.array([F(e) for e in energies])
        for i in range(len(energies) - 1):
            a, b = energies[i], energies[i + 1]
            fa, fb = values[i], values[i + 1]
            if fa == 0:
                root = a
            elif fa * fb < 0:
                root = optimize.brentq(F, min(a, b), max(a, b), xtol=1e-300, rtol=4 * np.finfo(float).eps,
                                       maxiter=500)
            else:
                continue
            if abs(F(root)) > 1e-12 and not _float_bracket(F, root):
                continue
            kind = "UBS" if sign > 0 else "LBS"
            res = residue_at(first, root)
            poles.append(Pole(Sheet.FIRST, complex(root), res, kind))
    return _merge(sorted(poles, key=lambda p: p.z.real))


def _float_bracket(F, root, ulps=4):
    """True when ``F`` changes sign within a few ulps of ``root`` (steep roots near an edge)."""
    lo, hi = root, root
    for _ in range(ulps):
        lo, hi = np.nextafter(lo, -np.inf), np.nextafter(hi, np.inf)
    return F(lo) * F(hi) <= 0


def _merge(poles):
    out = []
    for p in poles:
        if all(abs(p.z - q.z) > MERGE_TOL or p.sheet is not q.sheet for q in out):
            out.append(p)
    return out


# --- unstable poles -------------------------------------------------------------

def _half_band(sheet, edge):
    return (-edge, 0.0) if sheet is Sheet.SECOND else (0.0, edge)


def _in_domain(z, sheet):
    return z.real < 0 if sheet is Sheet.SECOND else z.real > 0


def _newton(model, delta, z0, tol=1e-10, max_iter=60):
    """Damped Newton on ``z - Delta - Sigma(z)``; returns the root or None."""
    sheet = model.sheet
    F = lambda w: w - delta - _sigma_value(model, w)
    z = complex(z0)
    if not _in_domain(z, sheet):
        return None
    fz = F(z)
    for _ in range(max_iter):
        if abs(fz) < tol:
            return z
        h = _step_size(model, z, 1e-6)
        if h < 1e-13:
            return None
        dF = 1.0 - _derivative(model, z, h)
        if dF == 0:
            return None
        step = -fz / dF
        for _ in range(30):
            trial = z + step
            if _in_domain(trial, sheet):
                ft = F(trial)
                if np.isfinite(ft) and abs(ft) < abs(fz):
                    break
            step /= 2
        else:
            return None
        z, fz = trial, ft
    return z if abs(fz) < tol else None


def _grid_seeds(model, delta, edge, n_re=40, n_im=20, keep=12):
    lo, hi = _half_band(model.sheet, edge)
    re = np.linspace(lo, hi, n_re + 2)[1:-1]
    im = -np.linspace(0, 2.0, n_im + 1)[1:]
    Z = re[None, :] + 1j * im[:, None]
    vals = np.abs(Z - delta - np.asarray(sigma(model, Z)))
    seeds = []
    for i in range(n_im):
        for j in range(n_re):
            window = vals[max(i - 1, 0):i + 2, max(j - 1, 0):j + 2]
            if vals[i, j] <= window.min():
                seeds.append((vals[i, j], Z[i, j]))
    seeds.sort(key=lambda s: s[0])
    return [z for _, z in seeds[:keep]]


def find_unstable_poles(model: SelfEnergyModel, detuning, sheet) -> list:
    """Complex poles on ``sheet`` (second or third) in its half-band below the axis.

    Newton is seeded at the Markov estimate ``Delta + Sigma(Delta + i0)`` and
    at the local minima of ``|F|`` on a 40 x 20 grid over the half-band times
    ``[-2, 0)``. Failing seeds are dropped silently; roots are kept when the
    residual is below ``1e-10``, ``Im z < 0`` and the real part lies in the
    half-band.
    """
    sheet = Sheet.parse(sheet)
    if sheet is Sheet.FIRST:
        raise ValueError("unstable poles live on the second or third sheet")
    if model.config.dimension != 2:
        raise NotImplementedError("continued sheets are available for 2D lattices only")
    delta = float(detuning)
    edge = band_edge(2)
    m = model.on_sheet(sheet)
    seeds = []
    try:
        first = model.on_sheet(Sheet.FIRST)
        est = delta + complex(sigma(first, complex(delta)))
        if np.isfinite(est):
            seeds.append(complex(est.real, min(est.imag, -1e-12)))
    except (ArithmeticError, ValueError):
        pass
    seeds.extend(_grid_seeds(m, delta, edge))
    kind = "UPII" if sheet is Sheet.SECOND else "UPIII"
    lo, hi = _half_band(sheet, edge)
    found = []
    for s in seeds:
        try:
            root = _newton(m, delta, s)
        except (ArithmeticError, ValueError):
            root = None
        if root is None or not (root.imag < 0 and lo <= root.real <= hi):
            continue
        found.append(Pole(sheet, root, residue_at(m, root), kind))
    return _merge(sorted(found, key=lambda p: (p.z.real, p.z.imag)))


def find_all_poles(model: SelfEnergyModel, detuning) -> list:
    """Bound states plus unstable poles on both continued sheets (2D)."""
    poles = find_bound_states(model, detuning)
    if model.config.dimension == 2:
        for sheet in (Sheet.SECOND, Sheet.THIRD):
            poles.extend(find_unstable_poles(model, detuning, sheet))
    return poles


# --- bound states in the continuum ----------------------------------------------

def _dga_size(config):
    """Arm length ``n`` if emitter A is a DGA cross centered anywhere, else None."""
    sites = config.emitter_a.sites
    if config.dimension != 2 or len(sites) != 4:
        return None
    c = sites.mean(axis=0)
    rel = sites - c
    if not np.allclose(rel, np.round(rel)):
        return None
    rel = {tuple(int(v) for v in r) for r in np.round(rel)}
    n = max(abs(v) for r in rel for v in r)
    if rel != {(n, 0), (-n, 0), (0, n), (0, -n)}:
        return None
    return n


def detect_bic(config: PairConfig, parity) -> Optional[Pole]:
    """Non-decaying in-band pole of a DGA pair at zero detuning, if any.

    For odd arm length the resonant band-center modes decouple and the pole
    near ``Sigma(0)`` is searched on the continued sheet matching its side
    of the band center. The exact pole sits at ``z ~ Sigma(0)`` with a small
    residual width (it scales like ``g^6`` for ``n = 1``); it is returned as
    kind ``BIC`` when ``|Im z| <= 1e-2 |Re z|``. Even arm lengths return
    ``None``.
    """
    n = _dga_size(config)
    if n is None:
        raise ValueError("detect_bic expects a DGA-type 2D configuration")
    if n % 2 == 0:
        return None
    model = SelfEnergyModel(config.with_detuning(0.0), parity)
    s0 = complex(sigma(model, 0.0))
    seed_re = s0.real
    if seed_re == 0:
        return None
    sheet = Sheet.SECOND if seed_re < 0 else Sheet.THIRD
    m = model.on_sheet(sheet)
    root = _newton(m, 0.0, complex(seed_re, -1e-14))
    if root is None or abs(root.imag) > BIC_Q_TOL * abs(root.real) or abs(root.real) >= band_edge(2):
        return None
    return Pole(sheet, root, residue_at(m, root), "BIC")


# --- 3D decoherence-free interaction ------------------------------------------

@dataclass(frozen=True)
class DFIResult:
    j_ab: float
    z_plus: complex
    z_minus: complex
    poles: tuple


def _scaled(config, g):
    def scale(e):
        return EmitterGeometry(tuple(CouplingPoint(p.site, g * p.amplitude / abs(p.amplitude))
                                     for p in e.points))
    return PairConfig(scale(config.emitter_a), scale(config.emitter_b), config.detuning, config.dimension)


def _real_axis_pole(model, delta):
    """Pole near the real axis from ``E = Delta + Re Sigma(E + i0)``.

    The imaginary part follows to first order as
    ``Im Sigma(E) / (1 - Re Sigma'(E))``.
    """
    f = lambda e: e - delta - sigma3d(model, e).real
    s0 = sigma3d(model, delta).real
    width = max(4 * abs(s0), 1e-6)
    a, b = delta + s0 - width, delta + s0 + width
    fa, fb = f(a), f(b)
    if fa * fb > 0:
        raise ConvergenceError("no sign change bracketing the in-band pole")
    e = optimize.brentq(f, a, b, xtol=1e-15, rtol=1e-14)
    h = 1e-5
    d = (sigma3d(model, e + h) - sigma3d(model, e - h)) / (2 * h)
    im = sigma3d(model, e).imag / (1 - d.real)
    z = complex(e, im)
    return z, 1.0 / (1.0 - d)


def dfi_coupling_3d(config: PairConfig, g=None, im_tol=1e-4) -> DFIResult:
    """Exchange coupling ``J_AB = (z_+ - z_-)/2`` of a 3D pair at zero detuning.

    ``g`` (optional) rescales all couplings to magnitude ``g``. Both
    collective poles are located on the real axis through the exact
    ``k_z``-integrated self-energy; :class:`ConvergenceError` is raised when
    either pole has ``|Im z| >= im_tol``.
    """
    if config.dimension != 3:
        raise ValueError("dfi_coupling_3d expects a 3D configuration")
    if g is not None:
        config = _scaled(config, g)
    config = config.with_detuning(0.0)
    poles = []
    zs = {}
    for parity in (1, -1):
        model = SelfEnergyModel(config, parity)
        z, res = _real_axis_pole(model, 0.0)
        if abs(z.imag) >= im_tol:
            raise ConvergenceError(f"collective pole {z} is not decoherence free")
        zs[parity] = z
        poles.append(Pole(Sheet.FIRST, z, res, "BIC"))
    return DFIResult(j_ab=(zs[1].real - zs[-1].real) / 2, z_plus=zs[1], z_minus=zs[-1], poles=tuple(poles))
