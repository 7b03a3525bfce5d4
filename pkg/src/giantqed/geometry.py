"""Coupling geometries of giant emitters on square and cubic lattices.

Sites are integer lattice vectors, amplitudes complex (units of J). A pair
of emitters is a :class:`PairConfig`; the second emitter of the standard
pairs is the first one translated by the braiding offset ``n_c``.
"""
from __future__ import annotations

import hashlib
import itertools
import json
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "CouplingPoint",
    "EmitterGeometry",
    "PairConfig",
    "make_sga",
    "make_dga",
    "make_cube3d",
    "make_octahedron3d",
    "offset_weights",
    "coupling_weight",
    "sga_pair",
    "dga_pair",
    "cube_pair",
    "octahedron_pair",
]


@dataclass(frozen=True)
class CouplingPoint:
    site: tuple
    amplitude: complex

    def __post_init__(self):
        object.__setattr__(self, "site", tuple(int(s) for s in self.site))
        object.__setattr__(self, "amplitude", complex(self.amplitude))
        if abs(self.amplitude) <= 0:
            raise ValueError("coupling amplitude must be nonzero")


@dataclass(frozen=True)
class EmitterGeometry:
    points: tuple

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if not pts:
            raise ValueError("an emitter needs at least one coupling point")
        dims = {len(p.site) for p in pts}
        if len(dims) != 1:
            raise ValueError("coupling points of one emitter have mixed dimensions")
        sites = [p.site for p in pts]
        if len(set(sites)) != len(sites):
            raise ValueError("coupling sites within one emitter must be distinct")

    @property
    def dimension(self) -> int:
        return len(self.points[0].site)

    @property
    def sites(self) -> np.ndarray:
        return np.array([p.site for p in self.points], dtype=int)

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.points], dtype=complex)

    def shifted(self, displacement) -> "EmitterGeometry":
        d = tuple(int(x) for x in displacement)
        return EmitterGeometry(tuple(
            CouplingPoint(tuple(s + x for s, x in zip(p.site, d)), p.amplitude) for p in self.points))

    def with_phases(self, phases) -> "EmitterGeometry":
        """Replace the phases of points 2..M, keeping magnitudes; point 1 gets phase 0."""
        phases = [0.0, *phases]
        if len(phases) != len(self.points):
            raise ValueError(f"expected {len(self.points) - 1} phases")
        return EmitterGeometry(tuple(
            CouplingPoint(p.site, abs(p.amplitude) * np.exp(1j * ph)) for p, ph in zip(self.points, phases)))

    def to_dict(self) -> dict:
        return {"sites": [list(p.site) for p in self.points],
                "amplitudes": [[p.amplitude.real, p.amplitude.imag] for p in self.points]}

    @classmethod
    def from_dict(cls, data) -> "EmitterGeometry":
        return cls(tuple(CouplingPoint(tuple(s), complex(*a))
                         for s, a in zip(data["sites"], data["amplitudes"])))


@dataclass(frozen=True)
class PairConfig:
    """Two emitters on a common lattice plus their detuning from the band center."""

    emitter_a: EmitterGeometry
    emitter_b: EmitterGeometry
    detuning: float = 0.0
    dimension: int = field(default=0)

    def __post_init__(self):
        dim = self.emitter_a.dimension
        if self.emitter_b.dimension != dim:
            raise ValueError("emitters live on lattices of different dimension")
        if self.dimension == 0:
            object.__setattr__(self, "dimension", dim)
        elif self.dimension != dim:
            raise ValueError(f"sites are {dim}-dimensional but dimension={self.dimension}")
        if self.dimension not in (2, 3):
            raise ValueError("only 2D square and 3D cubic lattices are supported")
        object.__setattr__(self, "detuning", float(self.detuning))

    @property
    def emitters(self):
        return (self.emitter_a, self.emitter_b)

    @property
    def coupling_scale(self) -> float:
        """Reference coupling ``g``: the largest coupling magnitude."""
        return float(max(np.abs(e.amplitudes).max() for e in self.emitters))

    @property
    def center(self) -> np.ndarray:
        """Mean position of all coupling sites of both emitters."""
        return np.vstack([self.emitter_a.sites, self.emitter_b.sites]).mean(axis=0)

    @property
    def extent(self) -> int:
        """Largest distance (sup norm) of a coupling site from the center."""
        sites = np.vstack([self.emitter_a.sites, self.emitter_b.sites])
        return int(np.ceil(np.abs(sites - self.center).max()))

    def with_detuning(self, detuning) -> "PairConfig":
        return PairConfig(self.emitter_a, self.emitter_b, detuning, self.dimension)

    def with_phases(self, phases) -> "PairConfig":
        """Both emitters take the same phase vector (first point fixed to 0)."""
        return PairConfig(self.emitter_a.with_phases(phases), self.emitter_b.with_phases(phases),
                          self.detuning, self.dimension)

    def to_dict(self) -> dict:
        return {"emitter_a": self.emitter_a.to_dict(), "emitter_b": self.emitter_b.to_dict(),
                "detuning": self.detuning, "dimension": self.dimension}

    @classmethod
    def from_dict(cls, data) -> "PairConfig":
        return cls(EmitterGeometry.from_dict(data["emitter_a"]), EmitterGeometry.from_dict(data["emitter_b"]),
                   data.get("detuning", 0.0), data.get("dimension", 0))

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def _emitter(sites, amplitudes, displacement):
    dim = len(sites[0])
    displacement = tuple(displacement) if displacement is not None else (0,) * dim
    if len(displacement) != dim:
        raise ValueError(f"displacement must have {dim} components")
    return EmitterGeometry(tuple(
        CouplingPoint(tuple(s + d for s, d in zip(site, displacement)), a)
        for site, a in zip(sites, amplitudes)))


def make_sga(n, phases=(0.0, 0.0, 0.0), displacement=None, g=1.0):
    """Square-like emitter: corners ``(n, n), (n, -n), (-n, n), (-n, -n)``.

    ``phases`` are the phases of points 2..4; the first point is fixed to 0.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sites = [(n, n), (n, -n), (-n, n), (-n, -n)]
    amps = g * np.exp(1j * np.array([0.0, *phases]))
    return _emitter(sites, amps, displacement)


def make_dga(n, displacement=None, g=1.0, phases=(0.0, 0.0, 0.0)):
    """Diamond-like emitter: axis points ``(n, 0), (-n, 0), (0, n), (0, -n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sites = [(n, 0), (-n, 0), (0, n), (0, -n)]
    amps = g * np.exp(1j * np.array([0.0, *phases]))
    return _emitter(sites, amps, displacement)


def make_cube3d(n, displacement=None, g=1.0):
    """Eight cube corners ``(s_x, s_y, s_z)``, ``s in {-n, n}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sites = list(itertools.product((n, -n), repeat=3))
    return _emitter(sites, [g] * 8, displacement)


def make_octahedron3d(n, displacement=None, g=1.0):
    """Six face centers ``(+-n, 0, 0), (0, +-n, 0), (0, 0, +-n)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    sites = [(n, 0, 0), (-n, 0, 0), (0, n, 0), (0, -n, 0), (0, 0, n), (0, 0, -n)]
    return _emitter(sites, [g] * 6, displacement)


def sga_pair(n, g, detuning=0.0, phases=(0.0, 0.0, 0.0)):
    """SGA pair, second emitter displaced by ``(n, n)``."""
    a = make_sga(n, phases, g=g)
    return PairConfig(a, a.shifted((n, n)), detuning)


def dga_pair(n, g, detuning=0.0, phases=(0.0, 0.0, 0.0)):
    """DGA pair, second emitter displaced by ``(n, 0)``."""
    a = make_dga(n, g=g, phases=phases)
    return PairConfig(a, a.shifted((n, 0)), detuning)


def cube_pair(n, g, detuning=0.0):
    a = make_cube3d(n, g=g)
    return PairConfig(a, a.shifted((n, n, n)), detuning)


def octahedron_pair(n, g, detuning=0.0):
    a = make_octahedron3d(n, g=g)
    return PairConfig(a, a.shifted((n, 0, 0)), detuning)


def offset_weights(a: EmitterGeometry, b: EmitterGeometry) -> dict:
    """Map each relative offset ``n_ap - n_bq`` to ``sum g_ap * conj(g_bq)``.

    ``offset_weights(a, a)`` carries ``sum |g_p|^2`` at the zero offset.
    """
    if a.dimension != b.dimension:
        raise ValueError("dimension mismatch between emitters")
    out = defaultdict(complex)
    for p in a.points:
        for q in b.points:
            key = tuple(x - y for x, y in zip(p.site, q.site))
            out[key] += p.amplitude * np.conj(q.amplitude)
    return dict(out)


def structure_factor(emitter: EmitterGeometry, k) -> np.ndarray:
    """``g(k) = sum_p g_p exp(i k . n_p)`` for wavevectors ``k`` (last axis = components)."""
    k = np.asarray(k, dtype=float)
    phase = np.tensordot(k, emitter.sites.T, axes=([-1], [0]))
    return np.exp(1j * phase) @ emitter.amplitudes


def coupling_weight(config: PairConfig, k, parity: int) -> np.ndarray:
    """Normalized mode weight ``P_alpha(k)`` for the collective state of ``parity``.

    ``|g_1(k) + parity g_2(k)|^2`` summed over the sign reflections of the
    wavevector components, divided by ``4 g^2``. Non-negative by construction;
    its Brillouin-zone average summed over both parities is ``2^d M`` for
    uniform ``|g_p| = g`` (``M`` points per emitter).
    """
    k = np.asarray(k, dtype=float)
    g = config.coupling_scale
    total = 0.0
    for signs in itertools.product((1, -1), repeat=config.dimension):
        kk = k * np.array(signs)
        ga = structure_factor(config.emitter_a, kk)
        gb = structure_factor(config.emitter_b, kk)
        total = total + np.abs(ga + parity * gb) ** 2
    return total / (4 * g * g)
