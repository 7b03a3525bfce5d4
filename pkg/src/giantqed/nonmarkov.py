"""Trace-distance (BLP) non-Markovianity of the two-emitter reduced state.

The reduced state lives on ``{|gg>, |eg>, |ge>}``. In the single-excitation
sector the ground population is whatever norm sits in the field, and
ground/excited coherences vanish because the field is always excited when
the emitters are not.

Every initial state ``cos(th)|eg> + sin(th) e^{i phi}|ge>`` evolves linearly,
so two basis runs (``|eg>`` and ``|ge>``) determine the emitter amplitudes
of all sampled pairs at once.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .evolve import WaveState, evolve_to, init_state, min_lattice_size
from .geometry import PairConfig
from .spectral import _dga_size

__all__ = [
    "AtomicDensity",
    "BLPRecord",
    "BudgetWarning",
    "reduced_density",
    "trace_distance",
    "blp_integral",
    "blp_measure",
    "basis_trajectories",
    "CANONICAL_PAIRS",
    "COST_CAP",
]

# (theta, phi) of |+>, |->, |eg>, |ge>
_PLUS = (math.pi / 4, 0.0)
_MINUS = (math.pi / 4, math.pi)
_EG = (0.0, 0.0)
_GE = (math.pi / 2, 0.0)
CANONICAL_PAIRS = ((_PLUS, _MINUS), (_MINUS, _PLUS), (_EG, _GE), (_GE, _EG))
PAIR_NAMES = {(_PLUS, _MINUS): "(+,-)", (_MINUS, _PLUS): "(-,+)", (_EG, _GE): "(eg,ge)", (_GE, _EG): "(ge,eg)"}

# samples * steps above which a BudgetWarning is raised
COST_CAP = 5e7


class BudgetWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class AtomicDensity:
    """3x3 density matrix on ``(|gg>, |eg>, |ge>)``."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (3, 3):
            raise ValueError("atomic density matrix must be 3x3")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_amplitudes(cls, c1, c2, ground=None):
        if ground is None:
            ground = 1.0 - abs(c1) ** 2 - abs(c2) ** 2
        m = np.zeros((3, 3), dtype=complex)
        m[0, 0] = ground
        m[1, 1] = abs(c1) ** 2
        m[2, 2] = abs(c2) ** 2
        m[1, 2] = c1 * np.conj(c2)
        m[2, 1] = np.conj(m[1, 2])
        return cls(m)

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.matrix)


def reduced_density(state: WaveState) -> AtomicDensity:
    """Partial trace over the field; the ground population is the field norm."""
    c1, c2 = state.c_atoms
    ground = float(np.vdot(state.c_field, state.c_field).real)
    return AtomicDensity.from_amplitudes(c1, c2, ground)


def trace_distance(rho1, rho2) -> float:
    """``||rho1 - rho2||_1 / 2`` from the eigenvalues of the Hermitian difference."""
    a = rho1.matrix if isinstance(rho1, AtomicDensity) else np.asarray(rho1)
    b = rho2.matrix if isinstance(rho2, AtomicDensity) else np.asarray(rho2)
    diff = a - b
    diff = 0.5 * (diff + diff.conj().T)
    return float(0.5 * np.abs(np.linalg.eigvalsh(diff)).sum())


def blp_integral(series) -> float:
    """Positive variation ``sum_k max(0, D_{k+1} - D_k)`` of a sampled series."""
    d = np.diff(np.asarray(series, dtype=float))
    return float(d[d > 0].sum())


def _running_integral(series):
    """Positive variation accumulated up to each sample (last axis is time)."""
    d = np.diff(series, axis=-1)
    run = np.cumsum(np.where(d > 0, d, 0.0), axis=-1)
    pad = np.zeros(series.shape[:-1] + (1,))
    return np.concatenate([pad, run], axis=-1)


@dataclass
class BLPRecord:
    """Outcome of a sampled BLP maximization.

    ``distance`` is ``D(t)`` of the maximizing pair, ``running`` its
    accumulated positive variation and ``value`` the final ``N``.
    ``pairs`` holds ``(theta1, phi1, theta2, phi2)`` per candidate and
    ``integrals`` the final ``I`` of each candidate (canonical pairs first).
    """

    times: np.ndarray
    distance: np.ndarray
    running: np.ndarray
    value: float
    pair: tuple
    pairs: np.ndarray
    integrals: np.ndarray
    running_all: np.ndarray = field(repr=False)
    caveat: str = ""

    def argmax_at(self, t) -> tuple:
        """Pair that maximizes the accumulated integral up to time ``t``."""
        k = int(np.searchsorted(self.times, t, side="right")) - 1
        idx = int(np.argmax(self.running_all[:, max(k, 0)]))
        return tuple(float(x) for x in self.pairs[idx])

    def pair_name(self, pair=None) -> str:
        pair = self.pair if pair is None else pair
        for (a, b), name in PAIR_NAMES.items():
            if np.allclose(pair, (*a, *b), atol=1e-12):
                return name
        return "sampled"

    def table(self) -> str:
        lines = ["theta1,phi1,theta2,phi2,I"]
        for p, v in zip(self.pairs, self.integrals):
            lines.append("{:.12g},{:.12g},{:.12g},{:.12g},{:.12g}".format(*p, v))
        lines.append("# N(Lambda) = {:.12g}".format(self.value))
        return "\n".join(lines) + "\n"


def basis_trajectories(config: PairConfig, t_final, dt=0.05, every=1, n=None, workers=None):
    """Emitter amplitudes of the ``|eg>`` and ``|ge>`` runs on a common time grid.

    Returns ``(times, a, b)`` with ``a, b`` of shape ``(n_times, 2)``.
    """
    if n is None:
        n = min_lattice_size(config, t_final)
    out = []
    for kind in ("eg", "ge"):
        st = init_state(config, n, kind)
        traj = evolve_to(st, t_final, dt, every=every, workers=workers)
        out.append(traj.atoms)
    return traj.times, out[0], out[1]


def sample_pairs(samples: int, seed) -> np.ndarray:
    """Canonical pairs followed by ``samples`` pairs uniform on the Bloch sphere."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-1.0, 1.0, size=(samples, 2))
    phi = rng.uniform(0.0, 2 * np.pi, size=(samples, 2))
    theta = 0.5 * np.arccos(u)
    drawn = np.column_stack([theta[:, 0], phi[:, 0], theta[:, 1], phi[:, 1]])
    canon = np.array([(*a, *b) for a, b in CANONICAL_PAIRS])
    return np.vstack([canon, drawn])


def _distance_series(pairs, a, b):
    """``D(t)`` for every pair at once; ``a, b`` are the basis amplitudes."""
    def amps(theta, phi):
        return (np.cos(theta)[:, None, None] * a[None]
                + (np.sin(theta) * np.exp(1j * phi))[:, None, None] * b[None])

    c = amps(pairs[:, 0], pairs[:, 1])
    d = amps(pairs[:, 2], pairs[:, 3])
    # excited block difference [[p, q], [q*, r]]
    p = np.abs(c[..., 0]) ** 2 - np.abs(d[..., 0]) ** 2
    r = np.abs(c[..., 1]) ** 2 - np.abs(d[..., 1]) ** 2
    q = c[..., 0] * np.conj(c[..., 1]) - d[..., 0] * np.conj(d[..., 1])
    mean = 0.5 * (p + r)
    rad = np.sqrt((0.5 * (p - r)) ** 2 + np.abs(q) ** 2)
    ground = -(p + r)
    return 0.5 * (np.abs(ground) + np.abs(mean + rad) + np.abs(mean - rad))


def blp_measure(config: PairConfig, samples: int, t_final: float, dt=0.05, seed=0, every=1,
                n=None, workers=None, cost_cap=COST_CAP, basis=None) -> BLPRecord:
    """Maximize the positive variation of ``D`` over sampled initial pairs.

    Pairs are drawn independently with ``cos 2 theta`` and ``phi`` uniform.
    The four canonical pairs ``(+,-)``, ``(-,+)``, ``(eg,ge)``, ``(ge,eg)``
    are always included; ties keep the lowest index. ``basis`` may supply
    precomputed ``(times, a, b)`` from :func:`basis_trajectories`.
    """
    if samples < 1:
        raise ValueError("need at least one sampled pair")
    steps = t_final / dt
    if samples * steps > cost_cap:
        warnings.warn(f"{samples} pairs x {steps:.0f} steps exceeds the cost cap {cost_cap:.3g}",
                      BudgetWarning, stacklevel=2)
    if basis is None:
        basis = basis_trajectories(config, t_final, dt, every, n, workers)
    times, a, b = basis
    pairs = sample_pairs(samples, seed)
    dist = _distance_series(pairs, a, b)
    running = _running_integral(dist)
    final = running[:, -1]
    best = int(np.argmax(final))
    caveat = ""
    if _has_real_splitting(config):
        caveat = "bound-state splitting can make D grow without memory effects"
    return BLPRecord(np.asarray(times), dist[best], running[best], float(final[best]),
                     tuple(float(x) for x in pairs[best]), pairs, final, running, caveat)


def _has_real_splitting(config: PairConfig) -> bool:
    """Odd-size diamond pairs at band center host a split pair of long-lived states."""
    size = _dga_size(config)
    return size is not None and size % 2 == 1 and abs(config.detuning) < 1e-12
