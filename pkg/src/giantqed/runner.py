"""Configuration-driven scenarios and the command-line interface.

A scenario is an INI file. Sections and keys (all energies in J, times in 1/J):

``[scenario]``
    ``name``; ``seed`` (int, default 0); ``analyses``: comma list drawn from
    ``spectral, dynamics, emission, chirality, blp, dfi``.
``[geometry]``
    ``family``: comma list of ``sga, dga, cube, octahedron``; ``size``: comma
    list of ints; ``g``; ``detuning`` (comma list allowed); ``phases``:
    three angles (2D only, default 0).
``[schedule]``
    ``t_final``; ``dt`` (0.05); ``lattice`` (``auto`` or int);
    ``sample_every`` (steps between trajectory samples, default 20);
    ``snapshot_times`` (comma list); ``binary`` (grid dumps, default no).
``[spectral]``
    ``detuning_min``, ``detuning_max``, ``points``.
``[dynamics]``
    ``kinds``: comma list of ``plus, minus, eg, ge``; ``resolvent``: yes/no.
``[emission]``
    ``kind``; ``time``.
``[chirality]``
    ``t_star``; ``kind``; ``grid``; ``verify``.
``[blp]``
    ``samples``; ``t_final``; ``sample_every``.

Every output is text with ``#`` header lines naming the tool version, the
scenario hash and the unit convention. No timestamps are written, so a rerun
with the same file and seed reproduces every byte.
"""
from __future__ import annotations

import argparse
import configparser
import hashlib
import itertools
import math
import sys
import time
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from . import evolve as _evolve
from .elliptic import Sheet
from .emission import (axis_band_fraction, diagonal_band_fraction, octant_fractions,
                       optimize_chiral_phases, quadrant_fractions, sector_fraction)
from .evolve import dump_snapshot, evolve_to, init_state, min_lattice_size, momentum_snapshot
from .geometry import cube_pair, dga_pair, octahedron_pair, sga_pair
from .nonmarkov import blp_measure
from .resolvent_dynamics import amplitude
from .selfenergy import ConvergenceError, SelfEnergyModel, markov
from .spectral import dfi_coupling_3d, find_unstable_poles

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE = 0, 2, 3
UNITS = "energies in J, times in 1/J"
ANALYSES = ("spectral", "dynamics", "emission", "chirality", "blp", "dfi")
FAMILIES = {"sga": sga_pair, "dga": dga_pair, "cube": cube_pair, "octahedron": octahedron_pair}
KINDS = ("plus", "minus", "eg", "ge")

PRESETS = {
    "fig1_rates": """
[scenario]
name = fig1_rates
analyses = spectral
[geometry]
family = sga, dga
size = 1
g = 0.2
[spectral]
detuning_min = -3.8
detuning_max = 3.8
points = 39
""",
    "fig2_dynamics": """
[scenario]
name = fig2_dynamics
analyses = dynamics, emission
[geometry]
family = sga
size = 1
g = 0.25
[schedule]
t_final = 100
lattice = 600
sample_every = 20
[dynamics]
kinds = plus, minus
resolvent = yes
[emission]
kind = plus
time = 100
""",
    "fig3_chiral": """
[scenario]
name = fig3_chiral
analyses = chirality
[geometry]
family = sga, dga
size = 1
g = 0.2
[schedule]
lattice = 600
[chirality]
t_star = 100
kind = plus
grid = 16
verify = yes
""",
    "fig4_3d": """
[scenario]
name = fig4_3d
analyses = emission, dfi
[geometry]
family = octahedron
size = 1
g = 0.1
detuning = 0, 1, 2
[schedule]
t_final = 50
dt = 0.1
lattice = 128
[emission]
kind = plus
time = 50
""",
    "fig8_momentum": """
[scenario]
name = fig8_momentum
analyses = emission
[geometry]
family = sga, dga
size = 1
g = 0.2
[schedule]
t_final = 100
lattice = 600
[emission]
kind = plus
time = 100
""",
    "fig9_blp": """
[scenario]
name = fig9_blp
seed = 1
analyses = blp
[geometry]
family = sga, dga
size = 1
g = 0.25
[schedule]
dt = 0.025
lattice = 600
[blp]
samples = 1000
t_final = 100
sample_every = 1
""",
}


class ConfigError(ValueError):
    """Invalid scenario; ``problems`` lists ``(section.key, message)`` pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{k}: {m}" for k, m in self.problems))


# --- parsing ---------------------------------------------------------------------------

@dataclass
class Scenario:
    name: str
    seed: int
    analyses: tuple
    configs: tuple                  # (label, PairConfig)
    options: dict = field(default_factory=dict)
    digest: str = ""

    def header(self, extra=()) -> str:
        lines = [f"# giantqed {__version__}", f"# scenario {self.name} config {self.digest}",
                 f"# {UNITS}"]
        lines += [f"# {x}" for x in extra]
        return "\n".join(lines) + "\n"


def _read(source) -> configparser.ConfigParser:
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    text = PRESETS.get(str(source))
    if text is None:
        path = Path(source)
        if not path.is_file():
            raise ConfigError([("file", f"{source} is neither a readable file nor a preset name")])
        text = path.read_text()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([("syntax", str(exc).replace("\n", " "))]) from None
    return cp


def _canonical(cp) -> str:
    parts = []
    for sec in sorted(cp.sections()):
        for key in sorted(cp[sec]):
            parts.append(f"{sec}.{key}={' '.join(cp[sec][key].split())}")
    return "\n".join(parts)


class _Reader:
    """Typed access that collects every problem instead of stopping at the first."""

    def __init__(self, cp):
        self.cp = cp
        self.problems = []

    def get(self, sec, key, conv, default=None, required=False):
        if not self.cp.has_option(sec, key):
            if required:
                self.problems.append((f"{sec}.{key}", "missing"))
            return default
        raw = self.cp[sec][key]
        try:
            return conv(raw)
        except (ValueError, TypeError) as exc:
            self.problems.append((f"{sec}.{key}", f"cannot parse {raw!r} ({exc})"))
            return default


def _list(conv):
    return lambda raw: tuple(conv(x.strip()) for x in raw.split(",") if x.strip())


def _bool(raw):
    v = raw.strip().lower()
    if v in ("yes", "true", "on", "1"):
        return True
    if v in ("no", "false", "off", "0"):
        return False
    raise ValueError("expected yes/no")


def _lattice(raw):
    return "auto" if raw.strip() == "auto" else int(raw)


def load_scenario(source, seed=None) -> Scenario:
    cp = _read(source)
    r = _Reader(cp)
    if not cp.has_section("scenario"):
        r.problems.append(("scenario", "section missing"))
    if not cp.has_section("geometry"):
        r.problems.append(("geometry", "section missing"))
    name = r.get("scenario", "name", str, "scenario")
    cfg_seed = r.get("scenario", "seed", int, 0)
    analyses = r.get("scenario", "analyses", _list(str), (), required=True)
    for a in analyses:
        if a not in ANALYSES:
            r.problems.append(("scenario.analyses", f"unknown analysis {a!r}"))
    families = r.get("geometry", "family", _list(str), (), required=True)
    sizes = r.get("geometry", "size", _list(int), (), required=True)
    g = r.get("geometry", "g", float, None, required=True)
    detunings = r.get("geometry", "detuning", _list(float), (0.0,))
    phases = r.get("geometry", "phases", _list(float), (0.0, 0.0, 0.0))
    for f in families:
        if f not in FAMILIES:
            r.problems.append(("geometry.family", f"unknown family {f!r}"))
    for s in sizes:
        if s < 1:
            r.problems.append(("geometry.size", "sizes must be >= 1"))
    if g is not None and not g > 0:
        r.problems.append(("geometry.g", "coupling must be positive"))
    if len(phases) != 3:
        r.problems.append(("geometry.phases", "expected three angles"))

    opts = {
        "t_final": r.get("schedule", "t_final", float, 100.0),
        "dt": r.get("schedule", "dt", float, 0.05),
        "lattice": r.get("schedule", "lattice", _lattice, "auto"),
        "sample_every": r.get("schedule", "sample_every", int, 20),
        "snapshot_times": r.get("schedule", "snapshot_times", _list(float), ()),
        "binary": r.get("schedule", "binary", _bool, False),
        "spectral": (r.get("spectral", "detuning_min", float, -3.8),
                     r.get("spectral", "detuning_max", float, 3.8),
                     r.get("spectral", "points", int, 39)),
        "kinds": r.get("dynamics", "kinds", _list(str), ("plus", "minus")),
        "resolvent": r.get("dynamics", "resolvent", _bool, True),
        "emission_kind": r.get("emission", "kind", str, "plus"),
        "emission_time": r.get("emission", "time", float, None),
        "chiral_t": r.get("chirality", "t_star", float, 100.0),
        "chiral_kind": r.get("chirality", "kind", str, "plus"),
        "chiral_grid": r.get("chirality", "grid", int, 16),
        "chiral_verify": r.get("chirality", "verify", _bool, True),
        "blp_samples": r.get("blp", "samples", int, 1000),
        "blp_t": r.get("blp", "t_final", float, 100.0),
        "blp_every": r.get("blp", "sample_every", int, 4),
    }
    for k in ("kinds",):
        for kind in opts[k]:
            if kind not in KINDS:
                r.problems.append(("dynamics.kinds", f"unknown initial state {kind!r}"))
    for key, label in (("emission_kind", "emission.kind"), ("chiral_kind", "chirality.kind")):
        if opts[key] not in KINDS:
            r.problems.append((label, f"unknown initial state {opts[key]!r}"))
    if opts["dt"] is not None and not opts["dt"] > 0:
        r.problems.append(("schedule.dt", "must be positive"))
    if opts["t_final"] is not None and opts["t_final"] < 0:
        r.problems.append(("schedule.t_final", "must be non-negative"))
    if opts["blp_samples"] is not None and opts["blp_samples"] < 1:
        r.problems.append(("blp.samples", "need at least one pair"))
    if opts["sample_every"] is not None and opts["sample_every"] < 1:
        r.problems.append(("schedule.sample_every", "must be >= 1"))

    configs = []
    if not r.problems:
        for fam, size, det in itertools.product(families, sizes, detunings):
            try:
                if fam in ("sga", "dga"):
                    cfg = FAMILIES[fam](size, g, det, phases)
                else:
                    cfg = FAMILIES[fam](size, g, det)
            except ValueError as exc:
                r.problems.append(("geometry", str(exc)))
                continue
            configs.append((f"{fam}{size}_d{det:g}", cfg))
        dims = {c.dimension for _, c in configs}
        if "spectral" in analyses and 3 in dims:
            r.problems.append(("scenario.analyses", "spectral scan is implemented for 2D pairs"))
        if "chirality" in analyses and 3 in dims:
            r.problems.append(("scenario.analyses", "chirality search is implemented for 2D pairs"))
        if "dfi" in analyses and 2 in dims:
            r.problems.append(("scenario.analyses", "dfi needs 3D pairs"))
        if isinstance(opts["lattice"], int):
            for label, cfg in configs:
                if opts["lattice"] < 2 * cfg.extent + 3:
                    r.problems.append(("schedule.lattice", f"too small for {label}"))
    if r.problems:
        raise ConfigError(r.problems)
    seed = cfg_seed if seed is None else int(seed)
    digest = hashlib.sha256(f"{_canonical(cp)}\nseed={seed}".encode()).hexdigest()[:16]
    return Scenario(name, seed, tuple(analyses), tuple(configs), opts, digest)


# --- validation ---------------------------------------------------------------------------

def _lattice_size(sc, cfg, horizon):
    lat = sc.options["lattice"]
    if lat == "auto":
        return min_lattice_size(cfg, horizon)
    return lat


def _step_cost(n, dim, trials=3):
    """Measured seconds per split-operator step on an ``n^dim`` grid."""
    shape = (n,) * dim
    if n ** dim > 3e7:
        return 1e-8 * n ** dim * math.log2(n ** dim)
    import scipy.fft as sfft
    x = np.zeros(shape, dtype=complex)
    t0 = time.perf_counter()
    for _ in range(trials):
        x = sfft.ifftn(sfft.fftn(x))
    return (time.perf_counter() - t0) / trials


def validate(sc: Scenario):
    """Return ``(warnings, estimated_seconds)`` for a parsed scenario."""
    notes = []
    cost = 0.0
    o = sc.options
    for label, cfg in sc.configs:
        horizons = []
        if "dynamics" in sc.analyses:
            horizons.append(o["t_final"])
        if "emission" in sc.analyses:
            horizons.append(o["emission_time"] if o["emission_time"] is not None else o["t_final"])
        if "blp" in sc.analyses:
            horizons.append(o["blp_t"])
        if "chirality" in sc.analyses:
            horizons.append(o["chiral_t"])
        for h in horizons:
            n = _lattice_size(sc, cfg, h)
            need = min_lattice_size(cfg, h)
            if n < need:
                notes.append(f"{label}: lattice {n} wraps before t={h:g}; wrap-safe size is {need}")
        n_default = _lattice_size(sc, cfg, max(horizons or [0.0]))
        per_step = _step_cost(n_default, cfg.dimension) if horizons else 0.0
        steps = lambda t: t / o["dt"]
        if "dynamics" in sc.analyses:
            cost += len(o["kinds"]) * steps(o["t_final"]) * per_step
            if o["resolvent"] and cfg.dimension == 2:
                cost += 2 * 1.0 * (o["t_final"] / (o["dt"] * o["sample_every"]) / 4)
        if "emission" in sc.analyses:
            cost += steps(horizons[-1] if horizons else 0) * per_step
        if "blp" in sc.analyses:
            cost += 2 * steps(o["blp_t"]) * per_step
        if "chirality" in sc.analyses:
            cost += o["chiral_grid"] ** 3 * 0.2 * (o["chiral_t"] / 100.0) + 300 * 0.2
            if o["chiral_verify"]:
                cost += steps(o["chiral_t"]) * per_step
        if "spectral" in sc.analyses:
            cost += o["spectral"][2] * 2 * 1.5
        if "dfi" in sc.analyses:
            cost += 30.0
    return notes, cost


# --- analyses ----------------------------------------------------------------------------

def _fmt(x) -> str:
    return f"{x:.12g}"


def _write_table(path, header, columns, rows):
    with open(path, "w", newline="\n") as fh:
        fh.write(header)
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if isinstance(v, (float, int, np.floating)) else str(v)
                              for v in row) + "\n")


def _dominant_pole(model, delta, sheet, est):
    poles = find_unstable_poles(model, delta, sheet)
    if not poles:
        return None
    return min(poles, key=lambda p: abs(p.z - est))


def _run_spectral(sc, label, cfg, out):
    lo, hi, pts = sc.options["spectral"]
    rows = []
    for parity in (1, -1):
        model = SelfEnergyModel(cfg, parity)
        for delta in np.linspace(lo, hi, pts):
            m = markov(model, delta)
            est = complex(delta + m.shift, -m.rate / 2)
            rates = []
            for sheet in (Sheet.SECOND, Sheet.THIRD):
                p = _dominant_pole(model, delta, sheet, est)
                rates.append(float("nan") if p is None else -2 * p.z.imag)
            rows.append(("+" if parity > 0 else "-", float(delta), m.rate, rates[0], rates[1], m.shift))
    _write_table(out / f"{label}_rates.csv", sc.header([f"pair {label}"]),
                 ["parity", "delta", "gamma_markov", "gamma_UPII", "gamma_UPIII", "shift"], rows)


def _snapshot(sc, st, label, tag, out):
    binary = sc.options["binary"]
    suffix = ".bin" if binary else ".txt"
    mode = "wb" if binary else "w"
    for name, grid in (("real", np.abs(st.c_field)), ("momentum", momentum_snapshot(st))):
        with open(out / f"{label}_{tag}_{name}{suffix}", mode) as fh:
            dump_snapshot(grid, st.time, sc.digest, fh, binary=binary)


def _run_dynamics(sc, label, cfg, out):
    o = sc.options
    n = _lattice_size(sc, cfg, o["t_final"])
    for kind in o["kinds"]:
        st = init_state(cfg, n, kind)
        snaps = sorted(t for t in o["snapshot_times"] if 0 < t <= o["t_final"])
        times, atoms = [], []
        for target in snaps + [o["t_final"]]:
            if target > st.time:
                traj = evolve_to(st, target, o["dt"], every=o["sample_every"])
                start = 1 if times else 0
                times.extend(traj.times[start:])
                atoms.extend(traj.atoms[start:])
            if target in snaps:
                _snapshot(sc, st, label, f"{kind}_t{target:g}", out)
        atoms = np.array(atoms)
        rows = []
        sign = {"plus": 1, "minus": -1}.get(kind)
        resolvent = None
        if sign is not None and o["resolvent"] and cfg.dimension == 2:
            model = SelfEnergyModel(cfg, sign)
            resolvent = np.abs(amplitude(model, cfg.detuning, np.array(times))) ** 2
        for i, t in enumerate(times):
            c1, c2 = atoms[i]
            coll = abs((c1 + (sign or 1) * c2) / math.sqrt(2)) ** 2
            row = [t, abs(c1) ** 2, abs(c2) ** 2, coll]
            if resolvent is not None:
                row.append(resolvent[i])
            rows.append(row)
        cols = ["t", "pop_1", "pop_2", "collective"] + (["collective_resolvent"] if resolvent is not None else [])
        _write_table(out / f"{label}_{kind}_dynamics.csv",
                     sc.header([f"pair {label}", f"initial {kind}", f"lattice {n}", f"dt {o['dt']}"]),
                     cols, rows)


def _run_emission(sc, label, cfg, out):
    o = sc.options
    t = o["emission_time"] if o["emission_time"] is not None else o["t_final"]
    n = _lattice_size(sc, cfg, t)
    st = init_state(cfg, n, o["emission_kind"])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _evolve.WrapWarning)
        evolve_to(st, t, o["dt"])
    _snapshot(sc, st, label, f"{o['emission_kind']}_t{t:g}", out)
    rows = []
    if cfg.dimension == 2:
        q = quadrant_fractions(st)
        rows += [(f"quadrant{k}", v) for k, v in q.as_dict().items()]
        diag, which = diagonal_band_fraction(st)
        rows += [(f"diagonal_band_{which}", diag), ("axis_band", axis_band_fraction(st))]
        rows += [(f"sector_{d}", sector_fraction(st, d)) for d in ("axis", "diagonal", "main", "anti")]
    else:
        for key, v in octant_fractions(st).items():
            rows.append(("octant" + "".join("+" if s > 0 else "-" for s in key), v))
    rows.append(("field_norm", float(np.vdot(st.c_field, st.c_field).real)))
    _write_table(out / f"{label}_emission.csv",
                 sc.header([f"pair {label}", f"initial {o['emission_kind']}", f"t {t:g}", f"lattice {n}"]),
                 ["metric", "value"], rows)


def _run_chirality(sc, label, cfg, out):
    o = sc.options
    n = _lattice_size(sc, cfg, o["chiral_t"])
    res = optimize_chiral_phases(cfg, o["chiral_t"], o["chiral_kind"], n=n, grid=o["chiral_grid"],
                                 seed=sc.seed, verify=o["chiral_verify"], dt=o["dt"])
    head = sc.header([f"pair {label}", f"t_star {o['chiral_t']:g}", f"seed {sc.seed}"])
    with open(out / f"{label}_chiral_log.csv", "w", newline="\n") as fh:
        fh.write(head)
        fh.write(res.log_table())
    _write_table(out / f"{label}_chiral.csv", head, ["phi1", "phi2", "phi3", "fraction_engine",
                                                     "fraction_verified", "quadrant"],
                 [(*res.phases, res.fraction_engine, res.fraction_verified, res.quadrant)])


def _run_blp(sc, label, cfg, out):
    o = sc.options
    n = _lattice_size(sc, cfg, o["blp_t"])
    rec = blp_measure(cfg, o["blp_samples"], o["blp_t"], o["dt"], seed=sc.seed, every=o["blp_every"], n=n)
    extra = [f"pair {label}", f"seed {sc.seed}", f"argmax {rec.pair_name()}"]
    if rec.caveat:
        extra.append(f"caveat: {rec.caveat}")
    with open(out / f"{label}_blp_pairs.csv", "w", newline="\n") as fh:
        fh.write(sc.header(extra))
        fh.write(rec.table())
    rows = []
    for i, t in enumerate(rec.times):
        rows.append((t, rec.distance[i], rec.running[i], rec.running_all[:, i].max()))
    _write_table(out / f"{label}_blp_series.csv", sc.header(extra),
                 ["t", "D_argmax", "I_argmax", "N_running"], rows)


def _run_dfi(sc, label, cfg, out):
    o = sc.options
    if cfg.detuning != 0.0:
        return  # the exchange coupling is defined at zero detuning only
    res = dfi_coupling_3d(cfg)
    n = 64 if o["lattice"] == "auto" else o["lattice"]
    t_end = 2 * math.pi / abs(res.j_ab) if res.j_ab else o["t_final"]
    st = init_state(cfg.with_detuning(0.0), n, "eg")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", _evolve.WrapWarning)
        traj = evolve_to(st, t_end, o["dt"], every=o["sample_every"])
    rows = [(t, abs(a[0]) ** 2, abs(a[1]) ** 2, 0.5 * (1 + math.cos(2 * res.j_ab * t)))
            for t, a in zip(traj.times, traj.atoms)]
    extra = [f"pair {label}", f"J_AB {_fmt(res.j_ab)}", f"z_plus {res.z_plus}", f"z_minus {res.z_minus}",
             f"lattice {n}"]
    _write_table(out / f"{label}_dfi.csv", sc.header(extra), ["t", "pop_1", "pop_2", "ideal_pop_1"], rows)


RUNNERS = {"spectral": _run_spectral, "dynamics": _run_dynamics, "emission": _run_emission,
           "chirality": _run_chirality, "blp": _run_blp, "dfi": _run_dfi}


def run_scenario(source, out_dir=None, seed=None, threads=None) -> Path:
    sc = load_scenario(source, seed)
    out = Path(out_dir or Path("out") / sc.name)
    out.mkdir(parents=True, exist_ok=True)
    if threads:
        _evolve.DEFAULT_WORKERS = int(threads)
    for analysis in ANALYSES:
        if analysis not in sc.analyses:
            continue
        for label, cfg in sc.configs:
            RUNNERS[analysis](sc, label, cfg, out)
    return out


# --- CLI -----------------------------------------------------------------------------------

def _parser():
    p = argparse.ArgumentParser(prog="giantqed", description="Giant-emitter lattice QED scenarios.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a scenario file or preset")
    r.add_argument("config")
    r.add_argument("--out", default=None)
    r.add_argument("--seed", type=int, default=None)
    r.add_argument("--threads", type=int, default=None)
    v = sub.add_parser("validate", help="check a scenario and estimate its cost")
    v.add_argument("config")
    sub.add_parser("list-presets", help="print preset names")
    return p


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list-presets":
        for name in PRESETS:
            print(name)
        return EXIT_OK
    try:
        if args.command == "validate":
            sc = load_scenario(args.config)
            notes, cost = validate(sc)
            print(f"{sc.name}: {len(sc.configs)} configuration(s), analyses {', '.join(sc.analyses)}")
            for note in notes:
                print(f"warning: {note}")
            print(f"estimated runtime {cost:.0f} s")
            return EXIT_OK
        out = run_scenario(args.config, args.out, args.seed, args.threads)
        print(f"outputs written to {out}")
        return EXIT_OK
    except ConfigError as exc:
        for key, msg in exc.problems:
            print(f"config error [{key}]: {msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
