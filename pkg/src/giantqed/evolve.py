"""Single-excitation real-time evolution of two emitters on a periodic lattice.

The state is ``c_1 |eg,0> + c_2 |ge,0> + sum_n c_n |gg,1_n>``. One Strang step
is

    bath(dt/2) . interaction(dt) . bath(dt/2)

where the bath factor is the diagonal phase ``exp(-i omega(k) tau)`` applied
in momentum space and the interaction factor is the exact exponential of the
small Hermitian block that couples the two emitters to their coupling sites
(emitter detuning included). Consecutive half bath steps are fused, so a run
of ``n`` steps costs ``2n`` FFTs.
"""
from __future__ import annotations

import functools
import io
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np
import scipy.fft as sfft

from .geometry import PairConfig

__all__ = [
    "WaveState",
    "Trajectory",
    "WrapWarning",
    "init_state",
    "step",
    "evolve_to",
    "momentum_snapshot",
    "wavevectors",
    "dump_snapshot",
    "load_snapshot",
    "min_lattice_size",
    "V_MAX",
]

V_MAX = {2: 2.0 * math.sqrt(2.0), 3: 2.0 * math.sqrt(3.0)}
DEFAULT_WORKERS = 1


class WrapWarning(RuntimeWarning):
    """The ballistic front reaches the periodic boundary within the run."""


@dataclass
class WaveState:
    c_atoms: np.ndarray
    c_field: np.ndarray
    time: float
    config: PairConfig
    origin: tuple = field(default=())

    @property
    def n_sites(self) -> int:
        return self.c_field.shape[0]

    @property
    def dimension(self) -> int:
        return self.c_field.ndim

    def norm(self) -> float:
        return float(np.sum(np.abs(self.c_atoms) ** 2) + np.vdot(self.c_field, self.c_field).real)

    def copy(self, readonly=False) -> "WaveState":
        atoms, fld = self.c_atoms.copy(), self.c_field.copy()
        if readonly:
            atoms.flags.writeable = False
            fld.flags.writeable = False
        return WaveState(atoms, fld, self.time, self.config, self.origin)

    def site_index(self, site):
        """Array index of lattice coordinate ``site``."""
        return tuple((int(s) + o) % self.n_sites for s, o in zip(site, self.origin))

    def coordinates(self):
        """Lattice coordinates along one axis, aligned with array indices."""
        n = self.n_sites
        return [(np.arange(n) - o + n // 2) % n - n // 2 for o in self.origin]


def min_lattice_size(config: PairConfig, horizon: float) -> int:
    """Smallest even ``N`` with ``v_max * horizon <= N/2 - extent``."""
    need = 2 * (V_MAX[config.dimension] * horizon + config.extent)
    n = int(math.ceil(need))
    return n + (n % 2)


def _origin(config: PairConfig, n: int):
    center = np.round(config.center).astype(int)
    return tuple(int(n // 2 - c) for c in center)


def init_state(config: PairConfig, n: int, kind="plus", theta=0.0, phi=0.0, horizon=None) -> WaveState:
    """Emitters excited, field empty.

    ``kind`` is ``plus``, ``minus``, ``eg``, ``ge`` or ``custom`` (then
    ``cos(theta)|eg> + sin(theta) e^{i phi}|ge>``). The emitters' mean
    position is placed at the lattice center. With ``horizon`` given, a
    :class:`WrapWarning` is issued when ``n`` is too small for it.
    """
    kinds = {
        "plus": (1 / math.sqrt(2), 1 / math.sqrt(2)),
        "minus": (1 / math.sqrt(2), -1 / math.sqrt(2)),
        "eg": (1.0, 0.0),
        "ge": (0.0, 1.0),
    }
    if kind == "custom":
        atoms = (math.cos(theta), math.sin(theta) * np.exp(1j * phi))
    elif kind in kinds:
        atoms = kinds[kind]
    else:
        raise ValueError(f"unknown initial state {kind!r}")
    n = int(n)
    if n < 2 * config.extent + 3:
        raise ValueError(f"lattice of {n} sites cannot hold the emitters (extent {config.extent})")
    if horizon is not None and n < min_lattice_size(config, horizon):
        warnings.warn(f"N={n} wraps before t={horizon}; wrap-safe size is {min_lattice_size(config, horizon)}",
                      WrapWarning, stacklevel=2)
    shape = (n,) * config.dimension
    return WaveState(np.array(atoms, dtype=complex), np.zeros(shape, dtype=complex), 0.0, config,
                     _origin(config, n))


# --- propagators -----------------------------------------------------------------

@functools.lru_cache(maxsize=8)
def _dispersion(n, dim):
    k = 2 * np.pi * np.fft.fftfreq(n)
    c = -2 * np.cos(k)
    if dim == 2:
        return c[:, None] + c[None, :]
    return c[:, None, None] + c[None, :, None] + c[None, None, :]


@functools.lru_cache(maxsize=16)
def _bath_phase(n, dim, tau):
    return np.exp(-1j * _dispersion(n, dim) * tau)


@dataclass(frozen=True)
class _Block:
    sites: tuple          # flat indices of coupled sites
    unitary: np.ndarray   # (2 + S) x (2 + S)


def _block(state: WaveState, dt: float) -> _Block:
    cfg = state.config
    shape = state.c_field.shape
    index = {}
    entries = []
    for j, em in enumerate(cfg.emitters):
        for p in em.points:
            flat = int(np.ravel_multi_index(state.site_index(p.site), shape))
            slot = index.setdefault(flat, len(index))
            entries.append((j, slot, p.amplitude))
    size = 2 + len(index)
    h = np.zeros((size, size), dtype=complex)
    h[0, 0] = h[1, 1] = cfg.detuning
    for j, slot, g in entries:
        h[j, 2 + slot] += g
        h[2 + slot, j] += np.conj(g)
    w, v = np.linalg.eigh(h)
    u = (v * np.exp(-1j * w * dt)) @ v.conj().T
    return _Block(tuple(index), u)


def _apply_block(block: _Block, atoms, flat_field):
    idx = np.array(block.sites)
    x = np.concatenate([atoms, flat_field[idx]])
    y = block.unitary @ x
    atoms[:] = y[:2]
    flat_field[idx] = y[2:]


def step(state: WaveState, dt: float, workers=None) -> WaveState:
    """Advance ``state`` in place by one Strang step ``dt`` (negative allowed) and return it."""
    workers = workers or DEFAULT_WORKERS
    n, dim = state.n_sites, state.dimension
    half = _bath_phase(n, dim, dt / 2)
    fk = sfft.fftn(state.c_field, workers=workers)
    fk *= half
    fld = sfft.ifftn(fk, workers=workers, overwrite_x=True)
    _apply_block(_block(state, dt), state.c_atoms, fld.reshape(-1))
    fk = sfft.fftn(fld, workers=workers, overwrite_x=True)
    fk *= half
    state.c_field[...] = sfft.ifftn(fk, workers=workers, overwrite_x=True)
    state.time += dt
    return state


@dataclass
class Trajectory:
    times: np.ndarray
    atoms: np.ndarray                  # (n_samples, 2)
    records: dict                      # observer name -> list of outputs
    final: WaveState


def evolve_to(state: WaveState, t_final: float, dt: float = 0.05,
              observers: Mapping[str, Callable] | None = None, every: int = 1,
              workers=None) -> Trajectory:
    """Evolve ``state`` in place to ``t_final``, sampling every ``every`` steps.

    The number of steps is ``round((t_final - t) / dt)`` and the step is
    adjusted to land exactly on ``t_final``. Observers receive read-only
    copies of the state at each sample (including the initial one). A
    :class:`WrapWarning` is issued when ``v_max * t_final`` exceeds
    ``N/2 - extent``.
    """
    workers = workers or DEFAULT_WORKERS
    observers = dict(observers or {})
    span = t_final - state.time
    n_steps = int(round(abs(span) / dt)) if span else 0
    if n_steps:
        dt = span / n_steps
    n, dim = state.n_sites, state.dimension
    reach = V_MAX[dim] * max(abs(t_final), abs(state.time))
    if reach > n / 2 - state.config.extent:
        warnings.warn(f"ballistic front {reach:.1f} passes the boundary distance "
                      f"{n / 2 - state.config.extent:.1f}", WrapWarning, stacklevel=2)
    times, atoms = [], []
    records = {name: [] for name in observers}

    def sample(st):
        times.append(st.time)
        atoms.append(st.c_atoms.copy())
        if observers:
            snap = st.copy(readonly=True)
            for name, obs in observers.items():
                records[name].append(obs(snap))

    sample(state)
    if n_steps:
        block = _block(state, dt)
        half = _bath_phase(n, dim, dt / 2)
        full = _bath_phase(n, dim, dt)
        flat_atoms = state.c_atoms
        fk = sfft.fftn(state.c_field, workers=workers)
        fk *= half
        for i in range(1, n_steps + 1):
            fld = sfft.ifftn(fk, workers=workers, overwrite_x=True)
            _apply_block(block, flat_atoms, fld.reshape(-1))
            fk = sfft.fftn(fld, workers=workers, overwrite_x=True)
            state.time = state.time + dt
            if i % every == 0 or i == n_steps:
                fk *= half
                state.c_field[...] = sfft.ifftn(fk, workers=workers)
                if i % every == 0:
                    sample(state)
                fk *= half
            else:
                fk *= full
        state.time = float(t_final) if n_steps else state.time
        if n_steps % every:
            sample(state)
    return Trajectory(np.array(times), np.array(atoms), records, state)


# --- snapshots ----------------------------------------------------------------------

def wavevectors(n: int):
    """Wavevector components aligned with :func:`momentum_snapshot` axes (FFT order)."""
    return 2 * np.pi * np.fft.fftfreq(n)


def momentum_snapshot(state: WaveState) -> np.ndarray:
    """``|C_k|`` on the ``N^d`` grid (unitary FFT, FFT ordering of ``k``)."""
    return np.abs(sfft.fftn(state.c_field, norm="ortho"))


def _header(grid, t, config_hash):
    return f"# N={grid.shape[0]} d={grid.ndim} t={t!r} config={config_hash}\n"


def dump_snapshot(grid: np.ndarray, t: float, config_hash: str, fh, binary=False) -> None:
    """Write a grid dump: one header line, then row-major magnitudes.

    Text mode writes one value per line with 17 significant digits; binary
    mode writes raw little-endian float64 after the header (``fh`` must then
    be opened in binary mode).
    """
    grid = np.ascontiguousarray(grid, dtype=float)
    head = _header(grid, t, config_hash)
    if binary:
        fh.write(head.encode("ascii"))
        fh.write(grid.astype("<f8").tobytes(order="C"))
    else:
        fh.write(head)
        buf = io.StringIO()
        np.savetxt(buf, grid.reshape(-1), fmt="%.17g")
        fh.write(buf.getvalue())


def load_snapshot(fh, binary=False):
    """Inverse of :func:`dump_snapshot`; returns ``(grid, t, config_hash)``."""
    if binary:
        head = fh.readline().decode("ascii")
        data = np.frombuffer(fh.read(), dtype="<f8")
    else:
        head = fh.readline()
        data = np.loadtxt(fh, ndmin=1)
    meta = dict(item.split("=", 1) for item in head[1:].split())
    n, d = int(meta["N"]), int(meta["d"])
    return data.reshape((n,) * d), float(meta["t"]), meta["config"]


def config_hash(config: PairConfig) -> str:
    return config.digest()
