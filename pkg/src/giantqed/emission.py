"""Emission patterns: quadrant power fractions, band diagnostics, chiral phase search.

Two engines produce the radiated field at a time ``t*``:

* the split-operator engine of :mod:`giantqed.evolve` (reference), and
* :class:`KernelEngine`, which integrates the emitters' memory equation

  ``dc_j/dt = -i Delta c_j - sum_j' int_0^t K_jj'(t - s) c_j'(s) ds``

  with free-lattice kernels ``K_jj'(tau) = sum g_jp conj(g_j'p') U0(n_jp - n_j'p', tau)``,
  ``U0(m, tau) = prod_axis i^|m_a| J_|m_a|(2 tau)``, and builds the field in
  momentum space from the emitters' history. It is exact up to time
  discretization and costs a fraction of a second per phase vector, which
  makes a dense scan of coupling phases affordable.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.fft as sfft
from scipy import optimize, special

from .evolve import WaveState, evolve_to, init_state, momentum_snapshot
from .geometry import PairConfig

__all__ = [
    "QuadrantFractions",
    "ZeroFieldError",
    "centered_coordinates",
    "quadrant_fractions",
    "octant_fractions",
    "diagonal_band_fraction",
    "axis_band_fraction",
    "sector_fraction",
    "KernelEngine",
    "ChiralResult",
    "optimize_chiral_phases",
    "EmissionSnapshot",
    "emission_snapshot",
]

ZERO_FIELD = 1e-14


class ZeroFieldError(ValueError):
    """The radiated field carries (numerically) no norm."""


# --- spatial bookkeeping -------------------------------------------------------------

def centered_coordinates(n, origin, center):
    """Per-axis lattice coordinates of array indices, unwrapped around ``center``.

    Index ``i`` holds coordinate ``i - origin`` modulo ``n``; the representative
    is chosen within half a box of ``center``.
    """
    out = []
    for o, c in zip(origin, center):
        raw = np.arange(n) - o
        out.append(raw - n * np.round((raw - c) / n).astype(int))
    return out


def _field_and_coords(state_or_field, center, origin=None, config=None):
    if isinstance(state_or_field, WaveState):
        fld = state_or_field.c_field
        origin = state_or_field.origin
        config = state_or_field.config
    else:
        fld = np.asarray(state_or_field)
    if center is None:
        center = config.center
    center = np.asarray(center, dtype=float)
    coords = centered_coordinates(fld.shape[0], origin, center)
    return fld, coords, center


@dataclass(frozen=True)
class QuadrantFractions:
    """Field-norm shares ``B[mu, nu]`` of the four quadrants around ``center``.

    ``mu`` is the sign of ``x - cx`` and ``nu`` the sign of ``y - cy``.
    """

    pp: float
    pm: float
    mp: float
    mm: float
    time: float
    center: tuple

    def as_dict(self):
        return {"++": self.pp, "+-": self.pm, "-+": self.mp, "--": self.mm}

    @property
    def max(self) -> float:
        return max(self.pp, self.pm, self.mp, self.mm)

    @property
    def argmax(self) -> str:
        d = self.as_dict()
        return max(d, key=d.get)


def _quadrants_from_density(dens, coords, center):
    dx = coords[0] - center[0]
    dy = coords[1] - center[1]
    sx = np.sign(dx)
    sy = np.sign(dy)
    rows = {s: dens[sx == s, :] for s in (1, -1)}
    sums = {}
    for a in (1, -1):
        block = rows[a]
        for b in (1, -1):
            sums[(a, b)] = float(block[:, sy == b].sum())
    total = sum(sums.values())
    if total < ZERO_FIELD:
        raise ZeroFieldError("field norm below 1e-14")
    return {k: v / total for k, v in sums.items()}


def quadrant_fractions(state, center=None, time=None, origin=None, config=None) -> QuadrantFractions:
    """Quadrant shares of ``sum |c_n|^2`` (2D).

    Sites on either dividing line ``x = cx`` or ``y = cy`` belong to no
    quadrant and are left out before normalizing. ``center`` defaults to the
    mean position of all coupling sites. Raises :class:`ZeroFieldError` when
    the field norm is below ``1e-14``.
    """
    fld, coords, center = _field_and_coords(state, center, origin, config)
    if fld.ndim != 2:
        raise ValueError("quadrant fractions need a 2D field")
    q = _quadrants_from_density(np.abs(fld) ** 2, coords, center)
    t = state.time if isinstance(state, WaveState) and time is None else time
    return QuadrantFractions(q[(1, 1)], q[(1, -1)], q[(-1, 1)], q[(-1, -1)], t, tuple(center))


def octant_fractions(state, center=None) -> dict:
    """Field-norm shares of the eight octants around ``center`` (3D), keyed by sign triples."""
    fld, coords, center = _field_and_coords(state, center)
    if fld.ndim != 3:
        raise ValueError("octant fractions need a 3D field")
    dens = np.abs(fld) ** 2
    signs = [np.sign(c - x) for c, x in zip(coords, center)]
    out = {}
    for key in itertools.product((1, -1), repeat=3):
        mask = ((signs[0] == key[0])[:, None, None] & (signs[1] == key[1])[None, :, None]
                & (signs[2] == key[2])[None, None, :])
        out[key] = float(dens[mask].sum())
    total = sum(out.values())
    if total < ZERO_FIELD:
        raise ZeroFieldError("field norm below 1e-14")
    return {k: v / total for k, v in out.items()}


def _band_width(config):
    return 2 * (config.extent + 1)


def diagonal_band_fraction(state: WaveState, half_width=None):
    """Largest share of field norm within ``|(x-cx) -+ (y-cy)| <= w`` of one diagonal.

    Returns ``(fraction, which)`` with ``which`` ``"main"`` (``x = y``) or
    ``"anti"``. ``w`` defaults to ``2 (extent + 1)``.
    """
    fld, coords, center = _field_and_coords(state, None)
    w = _band_width(state.config) if half_width is None else half_width
    dens = np.abs(fld) ** 2
    total = dens.sum()
    if total < ZERO_FIELD:
        raise ZeroFieldError("field norm below 1e-14")
    dx = (coords[0] - center[0])[:, None]
    dy = (coords[1] - center[1])[None, :]
    main = float(dens[np.abs(dx - dy) <= w].sum() / total)
    anti = float(dens[np.abs(dx + dy) <= w].sum() / total)
    return (main, "main") if main >= anti else (anti, "anti")


def axis_band_fraction(state: WaveState, half_width=None) -> float:
    """Share of field norm within ``w`` of either principal axis through the center."""
    fld, coords, center = _field_and_coords(state, None)
    w = _band_width(state.config) if half_width is None else half_width
    dens = np.abs(fld) ** 2
    total = dens.sum()
    if total < ZERO_FIELD:
        raise ZeroFieldError("field norm below 1e-14")
    near_x = np.abs(coords[0] - center[0]) <= w
    near_y = np.abs(coords[1] - center[1]) <= w
    mask = near_x[:, None] | near_y[None, :]
    return float(dens[mask].sum() / total)


# direction sets: (symmetry order, reference angle)
_SECTORS = {"axis": (4, 0.0), "diagonal": (4, math.pi / 4), "main": (2, math.pi / 4), "anti": (2, -math.pi / 4)}


def sector_fraction(state: WaveState, directions="diagonal", half_angle=math.pi / 8) -> float:
    """Share of field norm whose bearing from the center lies within ``half_angle`` of a direction set.

    ``directions`` is ``axis`` (0, 90, 180, 270 degrees), ``diagonal`` (all
    four diagonals), ``main`` (45 and 225) or ``anti`` (135 and 315). Unlike
    the fixed-width bands, the sectors widen with distance, so the measure
    does not depend on how far the front has travelled.
    """
    order, ref = _SECTORS[directions]
    fld, coords, center = _field_and_coords(state, None)
    dens = np.abs(fld) ** 2
    total = dens.sum()
    if total < ZERO_FIELD:
        raise ZeroFieldError("field norm below 1e-14")
    theta = np.arctan2((coords[1] - center[1])[None, :], (coords[0] - center[0])[:, None])
    off = np.abs(np.angle(np.exp(1j * order * (theta - ref)))) / order
    return float(dens[off <= half_angle].sum() / total)


# --- fast kernel engine --------------------------------------------------------------

def _free_propagator(offset, tau):
    out = np.ones_like(tau, dtype=complex)
    for m in offset:
        m = abs(int(m))
        out = out * (1j ** m) * special.jv(m, 2 * tau)
    return out


@dataclass
class KernelEngine:
    """Emitter memory-equation solver plus momentum-space field synthesis (2D or 3D).

    ``template`` fixes sites, detuning and magnitudes; :meth:`field` accepts
    a phase vector (shared by both emitters) or a full configuration with
    the same sites.
    """

    template: PairConfig
    n: int = 600
    t_star: float = 100.0
    h: float = 0.05
    oversample: int = 32

    def __post_init__(self):
        cfg = self.template
        self.steps = int(round(self.t_star / self.h))
        self.h = self.t_star / self.steps
        tau = self.h * np.arange(self.steps + 1)
        self._points = [(j, p.site) for j, em in enumerate(cfg.emitters) for p in em.points]
        offsets = {}
        self._pairs = []
        for a, (ja, sa) in enumerate(self._points):
            for b, (jb, sb) in enumerate(self._points):
                off = tuple(x - y for x, y in zip(sa, sb))
                key = tuple(sorted(abs(v) for v in off))
                idx = offsets.setdefault(key, len(offsets))
                self._pairs.append((a, b, idx))
        self._u0 = np.array([_free_propagator(k, tau) for k in offsets])
        self._pair_a = np.array([a for a, _, _ in self._pairs])
        self._pair_b = np.array([b for _, b, _ in self._pairs])
        self._pair_off = np.array([o for _, _, o in self._pairs])
        self._owner = np.array([j for j, _ in self._points])
        # momentum grid in FFT order and phases of coupling sites
        dummy = init_state(cfg, self.n)
        self.origin = dummy.origin
        k = 2 * np.pi * np.fft.fftfreq(self.n)
        self._k = k
        self._cos = np.cos(k)
        self._site_idx = [dummy.site_index(s) for _, s in self._points]

    # -- emitters --
    def _amplitudes(self, config_or_phases):
        if isinstance(config_or_phases, PairConfig):
            cfg = config_or_phases
        else:
            cfg = self.template.with_phases(config_or_phases)
        return np.concatenate([em.amplitudes for em in cfg.emitters]), cfg

    def kernel(self, amps):
        """``K[m, j, j']`` on the time grid."""
        coef = amps[self._pair_a] * np.conj(amps[self._pair_b])
        k = np.zeros((self.steps + 1, 2, 2), dtype=complex)
        for c, a, b, o in zip(coef, self._pair_a, self._pair_b, self._pair_off):
            k[:, self._owner[a], self._owner[b]] += c * self._u0[o]
        return k

    def atoms(self, config_or_phases, c0):
        """Emitter amplitudes ``c[m, j]`` on the time grid from initial ``c0``."""
        amps, cfg = self._amplitudes(config_or_phases)
        kern = self.kernel(amps)
        h, delta = self.h, cfg.detuning
        c = np.zeros((self.steps + 1, 2), dtype=complex)
        c[0] = c0
        f_prev = -1j * delta * c[0]
        lhs = (1 + 0.5j * h * delta) * np.eye(2) + 0.25 * h * h * kern[0]
        lhs_inv = np.linalg.inv(lhs)
        for n in range(self.steps):
            # S = sum_{l=1}^{n} K[n+1-l] c_l + K[n+1] c_0 / 2
            s = 0.5 * kern[n + 1] @ c[0]
            if n:
                s = s + np.einsum("lij,lj->i", kern[n:0:-1], c[1:n + 1])
            rhs = c[n] + 0.5 * h * f_prev - 0.5 * h * h * s
            c[n + 1] = lhs_inv @ rhs
            f_prev = -1j * delta * c[n + 1] - h * (0.5 * kern[0] @ c[n + 1] + s)
        return c, amps, cfg

    # -- field --
    def _spectral_history(self, c):
        """``F_j(w) = int_0^T e^{-i w (T - s)} c_j(s) ds`` on a fine frequency grid."""
        m = self.steps + 1
        length = 1 << int(math.ceil(math.log2(self.oversample * m)))
        w = np.full(m, self.h)
        w[0] = w[-1] = self.h / 2
        buf = np.zeros((length, 2), dtype=complex)
        buf[:m] = c * w[:, None]
        # sum_m buf_m e^{i w s_m} with w_q = 2 pi q / (L h)
        spec = sfft.ifft(buf, axis=0) * length
        freq = 2 * np.pi * np.fft.fftfreq(length, d=self.h)
        order = np.argsort(freq)
        freq, spec = freq[order], spec[order]
        spec = spec * np.exp(-1j * freq * self.t_star)[:, None]
        return freq, spec

    def field(self, config_or_phases, c0):
        """Real-space field ``c_n(t*)`` on the ``n^d`` grid (array indices as in evolve)."""
        c, amps, cfg = self.atoms(config_or_phases, c0)
        freq, spec = self._spectral_history(c)
        dim = cfg.dimension
        shape = (self.n,) * dim
        omega = np.zeros(shape)
        for ax in range(dim):
            sl = [None] * dim
            sl[ax] = slice(None)
            omega = omega - 2 * self._cos[tuple(sl)]
        ck = np.zeros(shape, dtype=complex)
        flat_omega = omega.ravel()
        for j in range(2):
            fj = (np.interp(flat_omega, freq, spec[:, j].real)
                  + 1j * np.interp(flat_omega, freq, spec[:, j].imag)).reshape(shape)
            bj = np.zeros(shape, dtype=complex)
            for a, (owner, _) in enumerate(self._points):
                if owner != j:
                    continue
                ph = np.ones(shape, dtype=complex)
                for ax, idx in enumerate(self._site_idx[a]):
                    sl = [None] * dim
                    sl[ax] = slice(None)
                    ph = ph * np.exp(-1j * self._k * idx)[tuple(sl)]
                bj += np.conj(amps[a]) * ph
            ck += bj * fj
        return sfft.ifftn(-1j * ck), c

    def fractions(self, config_or_phases, c0) -> QuadrantFractions:
        fld, _ = self.field(config_or_phases, c0)
        cfg = config_or_phases if isinstance(config_or_phases, PairConfig) else self.template
        return quadrant_fractions(fld, center=cfg.center, time=self.t_star, origin=self.origin)


# --- chiral optimization ---------------------------------------------------------------

_KIND_AMPS = {"plus": (1, 1), "minus": (1, -1), "eg": (1, 0), "ge": (0, 1)}


def _initial_atoms(kind):
    a = np.array(_KIND_AMPS[kind], dtype=complex)
    return a / np.linalg.norm(a)


@dataclass
class ChiralResult:
    phases: tuple
    fraction_engine: float
    fraction_verified: float
    quadrant: str
    log: list = field(default_factory=list)

    def log_table(self) -> str:
        lines = ["iteration,phi1,phi2,phi3,objective"]
        for row in self.log:
            lines.append("{},{:.10f},{:.10f},{:.10f},{:.10f}".format(*row))
        return "\n".join(lines) + "\n"


def optimize_chiral_phases(template: PairConfig, t_star=100.0, kind="plus", n=600, grid=16,
                           seed=0, time_average=False, verify=True, h=0.05, dt=0.05,
                           engine=None) -> ChiralResult:
    """Maximize ``max_{mu nu} B_{mu nu}(t*)`` over the shared phases ``(phi1, phi2, phi3)``.

    A ``grid^3`` scan over ``[0, 2 pi)^3`` with :class:`KernelEngine` is
    followed by Nelder-Mead from the best grid point (objective tolerance
    ``1e-3``). Ties on the grid are broken by scan order, so the result is
    deterministic; ``seed`` only labels the run. With ``time_average`` the
    objective is the mean over ``t* / 2, 3 t* / 4, t*``. The optimum is
    re-evaluated with the split-operator engine when ``verify`` is set.
    """
    del seed  # the search is deterministic
    c0 = _initial_atoms(kind)
    times = (t_star / 2, 0.75 * t_star, t_star) if time_average else (t_star,)
    engines = [engine] if engine is not None and not time_average else [
        KernelEngine(template, n=n, t_star=t, h=h) for t in times]

    def objective(ph):
        vals = []
        for eng in engines:
            try:
                vals.append(eng.fractions(tuple(ph), c0).max)
            except ZeroFieldError:
                vals.append(0.0)
        return float(np.mean(vals))

    log = []
    axis = 2 * np.pi * np.arange(grid) / grid
    best, best_ph = -1.0, None
    for it, ph in enumerate(itertools.product(axis, repeat=3)):
        val = objective(ph)
        log.append((it, *ph, val))
        if val > best:
            best, best_ph = val, ph

    def neg(ph):
        val = objective(ph)
        log.append((len(log), *ph, val))
        return -val

    res = optimize.minimize(neg, np.array(best_ph), method="Nelder-Mead",
                            options={"fatol": 1e-3, "xatol": 1e-3, "maxiter": 400,
                                     "initial_simplex": _simplex(best_ph, 2 * np.pi / grid)})
    phases = tuple(float(np.mod(p, 2 * np.pi)) for p in res.x)
    value = -float(res.fun)
    if value < best:
        phases, value = tuple(float(p) for p in best_ph), best
    verified = float("nan")
    quadrant = engines[-1].fractions(phases, c0).argmax
    if verify:
        cfg = template.with_phases(phases)
        st = init_state(cfg, n, kind)
        evolve_to(st, t_star, dt)
        q = quadrant_fractions(st)
        verified, quadrant = q.max, q.argmax
    return ChiralResult(phases, value, verified, quadrant, log)


def _simplex(x0, scale):
    x0 = np.asarray(x0, dtype=float)
    pts = [x0]
    for i in range(3):
        p = x0.copy()
        p[i] += scale / 2
        pts.append(p)
    return np.array(pts)


# --- snapshots ------------------------------------------------------------------------------

@dataclass
class EmissionSnapshot:
    real_space: np.ndarray
    momentum: np.ndarray
    state: WaveState


def emission_snapshot(config: PairConfig, kind="plus", t=100.0, n=None, dt=0.05,
                      theta=0.0, phi=0.0) -> EmissionSnapshot:
    """Evolve from ``kind`` to ``t`` and return ``|c_n|`` and ``|C_k|`` grids."""
    if n is None:
        n = 600 if config.dimension == 2 else 128
    st = init_state(config, n, kind, theta=theta, phi=phi)
    if t > 0:
        evolve_to(st, t, dt)
    return EmissionSnapshot(np.abs(st.c_field), momentum_snapshot(st), st)
