"""Command-line front end: ``qoctl <subcommand> --config FILE``.

Config files are sectioned key=value text ([system], [target], [optimizer],
[output], [twolevel]).  Every output is a tab-separated table whose header
records the config hash and the column names.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import io
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .controllability import NLevelControlSystem, lie_rank
from .filters import (Band, Chain, ControlField, GaussianPass, GaussianStop, SingleBin,
                      angular_frequencies, fluence)
from .optimizer import OptimizerConfig, occupation_history, optimize
from .propagator import PropagationError, TimeGrid, imaginary_time_eigenstates
from .qsystem import (AsymmetricDoubleWell, GridSystem, Harmonic, NLevelSystem, PositionDipole,
                      SpatialGrid, Tabulated, dipole_matrix)
from .targets import (FinalTime, LocalDensity, PhaseFixedOverlap, Projection, TargetSpec, Uniform,
                      build_follower_path)
from .twolevel import TwoLevelSystem, integrate_exact, pulse_area_amplitude, rwa_fluence

log = logging.getLogger("qoct")

# Every recognised key with its default (as text).  Unknown keys are errors.
DEFAULTS = {
    "system": {
        "kind": "double_well",          # double_well | harmonic | tabulated | two_level | nlevel
        "x_max": "15.0",
        "n_points": "256",
        "b": "1.0",
        "omega0": "1.0",
        "beta": "0.00390625",
        "omega": "1.0",
        "center": "0.0",
        "potential_file": "",
        "n_states": "6",
        "eigen_dtau": "0.005",
        "eigen_tol": "1e-10",
        "omega_a": "0.0",
        "omega_b": "0.1568",
        "mu": "0.3921",
        "energies": "",
        "dipole_file": "",
        "t_final": "400.0",
        "dt": "0.005",
    },
    "target": {
        "kind": "projection",           # projection | phase_overlap | local_density | follower
        "initial": "0",
        "final": "1",
        "weight": "final",              # final | uniform (follower brings its own)
        "x0": "0.0",
        "sigma": "0.0",
    },
    "optimizer": {
        "scheme": "rapid",
        "alpha": "1.0",
        "fluence": "",
        "guess": "0.0",
        "filter": "none",               # none | gaussian_pass | gaussian_stop | band | single_bin
        "filter_centers": "",
        "filter_gamma": "500.0",
        "band_lo": "0.0",
        "band_hi": "0.0",
        "filter_pad": "1",
        "eta": "1.0",
        "xi": "1.0",
        "tol": "1e-5",
        "max_iter": "600",
        "j1_floor": "0.0",
    },
    "output": {
        "directory": "run",
        "field_stride": "1",
        "occupation_stride": "100",
    },
    "twolevel": {
        "t_values": "400, 200, 100, 50, 40, 25",
        "dt": "0.01",
        "oct": "false",
        "penalties": "1.0, 0.5, 0.3, 0.3, 0.3, 0.3",
        "guess": "0.05",
        "max_iter": "5000",
    },
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- config

@dataclass(frozen=True)
class RunConfig:
    """All sections, defaults expanded, values kept as canonical text."""

    sections: dict
    source: str = "<string>"

    def get(self, sec, key) -> str:
        return self.sections[sec][key]

    def f(self, sec, key) -> float:
        try:
            return float(self.get(sec, key))
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected a number, got {self.get(sec, key)!r}") from None

    def i(self, sec, key) -> int:
        v = self.f(sec, key)
        if v != int(v):
            raise ConfigError(f"[{sec}] {key}: expected an integer")
        return int(v)

    def floats(self, sec, key) -> list:
        txt = self.get(sec, key).strip()
        if not txt:
            return []
        try:
            return [float(v) for v in txt.replace(",", " ").split()]
        except ValueError:
            raise ConfigError(f"[{sec}] {key}: expected a list of numbers") from None

    def flag(self, sec, key) -> bool:
        v = self.get(sec, key).strip().lower()
        if v in ("1", "true", "yes", "on"):
            return True
        if v in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{sec}] {key}: expected true/false")

    def text(self) -> str:
        buf = io.StringIO()
        for sec in DEFAULTS:
            buf.write(f"[{sec}]\n")
            for k in DEFAULTS[sec]:
                buf.write(f"{k} = {self.sections[sec][k]}\n")
            buf.write("\n")
        return buf.getvalue()

    def digest(self) -> str:
        return hashlib.sha256(self.text().encode()).hexdigest()[:16]


def parse_config(text: str, source: str = "<string>", base: Path | None = None) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str.lower
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    sections = {s: dict(v) for s, v in DEFAULTS.items()}
    for sec in cp.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"unknown section [{sec}]")
        for k, v in cp[sec].items():
            if k not in DEFAULTS[sec]:
                raise ConfigError(f"unknown key [{sec}] {k}")
            sections[sec][k] = v.strip()
    base = base or Path(".")
    for sec, key in (("system", "potential_file"), ("system", "dipole_file")):
        v = sections[sec][key]
        if v:
            p = Path(v) if Path(v).is_absolute() else base / v
            if not p.is_file():
                raise ConfigError(f"[{sec}] {key}: file not found: {p}")
            sections[sec][key] = str(p)
    g = sections["optimizer"]["guess"]
    try:
        float(g)
    except ValueError:
        p = Path(g) if Path(g).is_absolute() else base / g
        if not p.is_file():
            raise ConfigError(f"[optimizer] guess: neither a number nor an existing file: {g}")
        sections["optimizer"]["guess"] = str(p)
    cfg = RunConfig(sections, source)
    validate(cfg)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text(), str(p), p.parent)


def validate(cfg: RunConfig):
    kind = cfg.get("system", "kind")
    if kind not in ("double_well", "harmonic", "tabulated", "two_level", "nlevel"):
        raise ConfigError(f"[system] kind: unknown system {kind!r}")
    if kind in ("double_well", "harmonic", "tabulated"):
        n = cfg.i("system", "n_points")
        if n < 8 or n & (n - 1):
            raise ConfigError("[system] n_points must be a power of two >= 8")
        if cfg.f("system", "x_max") <= 0:
            raise ConfigError("[system] x_max must be positive")
        if not 1 <= cfg.i("system", "n_states") <= 8:
            raise ConfigError("[system] n_states must be between 1 and 8")
    if kind == "tabulated" and not cfg.get("system", "potential_file"):
        raise ConfigError("[system] tabulated potential needs potential_file")
    if kind == "nlevel" and not (cfg.get("system", "energies") and cfg.get("system", "dipole_file")):
        raise ConfigError("[system] nlevel needs energies and dipole_file")
    if cfg.f("system", "t_final") <= 0 or cfg.f("system", "dt") <= 0:
        raise ConfigError("[system] t_final and dt must be positive")
    if cfg.get("target", "kind") not in ("projection", "phase_overlap", "local_density", "follower"):
        raise ConfigError(f"[target] kind: unknown target {cfg.get('target', 'kind')!r}")
    if cfg.get("target", "weight") not in ("final", "uniform"):
        raise ConfigError("[target] weight must be final or uniform")
    try:
        OptimizerConfig(scheme=cfg.get("optimizer", "scheme"), alpha=cfg.floats("optimizer", "alpha"),
                        fluence=cfg.floats("optimizer", "fluence") or None,
                        eta=cfg.f("optimizer", "eta"), xi=cfg.f("optimizer", "xi"),
                        max_iter=cfg.i("optimizer", "max_iter")).validate(len(cfg.floats("optimizer", "alpha")))
    except ValueError as exc:
        raise ConfigError(f"[optimizer] {exc}") from None
    if cfg.get("optimizer", "filter") not in ("none", "gaussian_pass", "gaussian_stop", "band", "single_bin"):
        raise ConfigError(f"[optimizer] filter: unknown filter {cfg.get('optimizer', 'filter')!r}")
    if cfg.get("optimizer", "filter") in ("gaussian_pass", "gaussian_stop", "single_bin") \
            and not cfg.floats("optimizer", "filter_centers"):
        raise ConfigError("[optimizer] filter needs filter_centers")
    for key in ("field_stride", "occupation_stride"):
        if cfg.i("output", key) < 1:
            raise ConfigError(f"[output] {key} must be at least 1")
    if cfg.f("twolevel", "dt") <= 0:
        raise ConfigError("[twolevel] dt must be positive")
    if any(t <= 0 for t in cfg.floats("twolevel", "t_values")):
        raise ConfigError("[twolevel] t_values must be positive")


# ------------------------------------------------------------- builders

@dataclass
class Setup:
    system: object
    basis: list
    energies: np.ndarray
    tg: TimeGrid


def build_setup(cfg: RunConfig) -> Setup:
    kind = cfg.get("system", "kind")
    tg = TimeGrid(cfg.f("system", "t_final"), cfg.f("system", "dt"))
    if kind in ("two_level", "nlevel"):
        if kind == "two_level":
            sysn = NLevelSystem.from_two_level(cfg.f("system", "omega_a"), cfg.f("system", "omega_b"),
                                               cfg.f("system", "mu"))
        else:
            E = cfg.floats("system", "energies")
            M = np.atleast_2d(np.loadtxt(cfg.get("system", "dipole_file")))
            sysn = NLevelSystem.from_eigenbasis(E, M)
        basis = [sysn.basis_state(n) for n in range(sysn.dim)]
        return Setup(sysn, basis, np.real(np.diag(sysn.h0)).copy(), tg)
    grid = SpatialGrid(cfg.f("system", "x_max"), cfg.i("system", "n_points"))
    pot = potential(cfg)
    E, states = imaginary_time_eigenstates(pot, grid, cfg.i("system", "n_states"),
                                           dtau=cfg.f("system", "eigen_dtau"),
                                           tol=cfg.f("system", "eigen_tol"))
    return Setup(GridSystem(grid, pot), states, np.asarray(E), tg)


def potential(cfg: RunConfig):
    kind = cfg.get("system", "kind")
    if kind == "double_well":
        return AsymmetricDoubleWell(cfg.f("system", "b"), cfg.f("system", "omega0"), cfg.f("system", "beta"))
    if kind == "harmonic":
        return Harmonic(cfg.f("system", "omega"), cfg.f("system", "center"))
    return Tabulated.load(cfg.get("system", "potential_file"))


def build_target(cfg: RunConfig, st: Setup) -> TargetSpec:
    kind = cfg.get("target", "kind")
    if kind == "follower":
        if len(st.basis) < 5:
            raise ConfigError("follower target needs at least 5 states")
        return build_follower_path(st.basis, st.energies, st.tg)
    weight = FinalTime() if cfg.get("target", "weight") == "final" else Uniform()
    if kind == "local_density":
        if not isinstance(st.system, GridSystem):
            raise ConfigError("local_density target needs a grid system")
        sigma = cfg.f("target", "sigma") or None
        return TargetSpec(LocalDensity(st.system.grid, cfg.f("target", "x0"), sigma), weight)
    n = cfg.i("target", "final")
    if not 0 <= n < len(st.basis):
        raise ConfigError(f"[target] final={n} outside the {len(st.basis)} available states")
    op = Projection(st.basis[n]) if kind == "projection" else PhaseFixedOverlap(st.basis[n])
    return TargetSpec(op, weight)


def build_filter(cfg: RunConfig):
    kind = cfg.get("optimizer", "filter")
    pad = cfg.i("optimizer", "filter_pad")
    centers = tuple(cfg.floats("optimizer", "filter_centers"))
    if kind == "none":
        return None
    if kind == "gaussian_pass":
        return Chain((GaussianPass(centers, cfg.f("optimizer", "filter_gamma"), pad),))
    if kind == "gaussian_stop":
        return Chain((GaussianStop(centers, cfg.f("optimizer", "filter_gamma"), pad),))
    if kind == "band":
        return Chain((Band(cfg.f("optimizer", "band_lo"), cfg.f("optimizer", "band_hi"), pad),))
    return Chain(tuple(SingleBin(c, pad) for c in centers[:1]))


def build_optimizer(cfg: RunConfig, st: Setup, max_iter: int | None = None) -> OptimizerConfig:
    g = cfg.get("optimizer", "guess")
    try:
        guess = float(g)
    except ValueError:
        data = np.loadtxt(g, ndmin=2)
        guess = ControlField(data[:, 1:].T, st.tg.dt)
    return OptimizerConfig(
        scheme=cfg.get("optimizer", "scheme"),
        alpha=cfg.floats("optimizer", "alpha"),
        fluence=cfg.floats("optimizer", "fluence") or None,
        filters=build_filter(cfg),
        eta=cfg.f("optimizer", "eta"),
        xi=cfg.f("optimizer", "xi"),
        tol=cfg.f("optimizer", "tol"),
        max_iter=max_iter or cfg.i("optimizer", "max_iter"),
        guess=guess,
    )


# ---------------------------------------------------------------- output

def write_table(path: Path, columns, rows, cfg: RunConfig | None, command: str):
    with open(path, "w") as fh:
        digest = cfg.digest() if cfg is not None else "none"
        fh.write(f"# qoct {__version__} {command} config_sha256={digest}\n")
        fh.write("# " + "\t".join(columns) + "\n")
        for r in rows:
            fh.write("\t".join(_fmt(v) for v in r) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def read_table(path) -> np.ndarray:
    return np.loadtxt(path, comments="#", ndmin=2)


def _outdir(cfg: RunConfig, override: str | None) -> Path:
    d = Path(override or cfg.get("output", "directory"))
    d.mkdir(parents=True, exist_ok=True)
    (d / "config.effective").write_text(cfg.text())
    return d


# ----------------------------------------------------------- subcommands

def cmd_eigen(cfg: RunConfig, out: Path, args) -> int:
    if cfg.get("system", "kind") not in ("double_well", "harmonic", "tabulated"):
        raise ConfigError("eigen needs a grid system")
    st = build_setup(cfg)
    E = st.energies
    write_table(out / "energies.tsv", ["n", "E_n", "E_n-E_0"],
                [(n, e, e - E[0]) for n, e in enumerate(E)], cfg, "eigen")
    M = dipole_matrix(st.basis, PositionDipole())
    rows = [(m, n, M[m, n]) for m in range(len(E)) for n in range(m, len(E))]
    write_table(out / "dipoles.tsv", ["m", "n", "mu_mn"], rows, cfg, "eigen")
    return 0


def cmd_optimize(cfg: RunConfig, out: Path, args) -> int:
    st = build_setup(cfg)
    spec = build_target(cfg, st)
    ocfg = build_optimizer(cfg, st, args.max_iters)
    i0 = cfg.i("target", "initial")
    if not 0 <= i0 < len(st.basis):
        raise ConfigError(f"[target] initial={i0} outside the available states")
    psi0 = st.basis[i0]
    eps, rec = optimize(st.system, psi0, spec, ocfg, st.tg)
    # records
    npol = eps.n_pol
    cols = ["iter", "J1", "J2", "J3", "J"] + [f"E0_{j}" for j in range(npol)] + [f"alpha_{j}" for j in range(npol)]
    write_table(out / "convergence.tsv", cols, rec.rows(), cfg, "optimize")
    fs = cfg.i("output", "field_stride")
    t = eps.times
    write_table(out / "field.tsv", ["t"] + [f"eps_{'xy'[j]}" for j in range(npol)],
                ((t[i], *eps.values[:, i]) for i in range(0, eps.n_steps, fs)), cfg, "optimize")
    w = angular_frequencies(eps.n_steps, eps.dt)
    X = np.fft.fft(eps.values, axis=1)
    half = eps.n_steps // 2 + 1
    write_table(out / "spectrum.tsv", ["omega"] + [f"power_{'xy'[j]}" for j in range(npol)],
                ((abs(w[m]), *(np.abs(X[:, m] * eps.dt) ** 2)) for m in range(half)), cfg, "optimize")
    times, occ = occupation_history(st.system, psi0, eps, st.tg, st.basis, cfg.i("output", "occupation_stride"))
    write_table(out / "occupations.tsv", ["t"] + [f"c{n}" for n in range(occ.shape[1])],
                ((times[k], *occ[k]) for k in range(times.size)), cfg, "optimize")
    k = rec.iterations - 1 if rec.last_field is eps else rec.best_index
    summary = {
        "j1": rec.j1[k],
        "j": rec.j[k],
        "fluence": " ".join(_fmt(v) for v in fluence(eps)),
        "iterations": rec.iterations,
        "returned_iteration": k,
        "best_j1": rec.best_j1,
        "converged": rec.converged,
        "wall_time_s": f"{rec.wall_time:.3f}",
    }
    with open(out / "summary.txt", "w") as fh:
        fh.write(f"# qoct {__version__} optimize config_sha256={cfg.digest()}\n")
        for key, v in summary.items():
            fh.write(f"{key} = {_fmt(v) if isinstance(v, float) else v}\n")
    eps_file = out / "field.tsv"
    log.info("wrote %s; J1=%.6f", eps_file, rec.j1[k])
    return 0 if rec.j1[k] >= cfg.f("optimizer", "j1_floor") else 1


def _twolevel_row(args):
    T, sysd, dt, oct_on, alpha, guess, max_iter = args
    sys2 = TwoLevelSystem(*sysd)
    tg = TimeGrid(T, dt)
    A = pulse_area_amplitude(sys2.mu, T)
    _, cb = integrate_exact(sys2, lambda t: A * np.sin(sys2.omega_ba * t), tg)
    p_oct = e_oct = np.nan
    if oct_on:
        sysn = sys2.as_nlevel()
        eps, rec = optimize(sysn, sysn.basis_state(0), sysn.basis_state(1),
                            OptimizerConfig(scheme="rapid", alpha=alpha, guess=guess, max_iter=max_iter), tg)
        p_oct = rec.j1[-1]
        e_oct = float(fluence(eps)[0])
    return (T, abs(cb) ** 2, p_oct, rwa_fluence(A, T), e_oct)


def cmd_twolevel(cfg: RunConfig, out: Path, args) -> int:
    Ts = cfg.floats("twolevel", "t_values")
    pens = cfg.floats("twolevel", "penalties")
    oct_on = cfg.flag("twolevel", "oct")
    if oct_on and len(pens) not in (1, len(Ts)):
        raise ConfigError("[twolevel] penalties must have one value or one per T")
    pens = pens * len(Ts) if len(pens) == 1 else pens
    sysd = (cfg.f("system", "omega_a"), cfg.f("system", "omega_b"), cfg.f("system", "mu"))
    max_iter = args.max_iters or cfg.i("twolevel", "max_iter")
    jobs = [(T, sysd, cfg.f("twolevel", "dt"), oct_on, pens[i] if pens else 1.0,
             cfg.f("twolevel", "guess"), max_iter) for i, T in enumerate(Ts)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_twolevel_row, jobs))
    else:
        rows = [_twolevel_row(j) for j in jobs]
    write_table(out / "twolevel.tsv", ["T", "P_RWA", "P_OCT", "E0_RWA", "E0_OCT"], rows, cfg, "twolevel")
    return 0


def cmd_controllability(cfg: RunConfig, out: Path, args) -> int:
    kind = cfg.get("system", "kind")
    if kind == "two_level":
        h0 = np.diag([cfg.f("system", "omega_a"), cfg.f("system", "omega_b")])
        mu = cfg.f("system", "mu")
        ctrl = (-np.array([[0.0, mu], [mu, 0.0]]),)
    elif kind == "nlevel":
        h0 = np.diag(cfg.floats("system", "energies"))
        ctrl = (-np.atleast_2d(np.loadtxt(cfg.get("system", "dipole_file"))),)
    else:
        raise ConfigError("controllability needs a two_level or nlevel system")
    n = h0.shape[0]
    rank, ok = lie_rank(NLevelControlSystem(h0, ctrl))
    verdict = "completely controllable" if ok else "not controllable"
    line = f"rank {rank} of {n * n}: {verdict}"
    (out / "controllability.txt").write_text(
        f"# qoct {__version__} controllability config_sha256={cfg.digest()}\n{line}\n")
    print(line)
    return 0


COMMANDS = {
    "eigen": cmd_eigen,
    "optimize": cmd_optimize,
    "twolevel": cmd_twolevel,
    "controllability": cmd_controllability,
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="qoctl", description="Quantum optimal control runs.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="sectioned key=value run configuration")
    ap.add_argument("--out", help="output directory (overrides [output] directory)")
    ap.add_argument("--jobs", type=int, default=1, help="concurrent independent runs")
    ap.add_argument("--max-iters", type=int, default=None, help="override the iteration cap")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return 2
    if args.max_iters is not None and args.max_iters < 1:
        print("error: --max-iters must be at least 1", file=sys.stderr)
        return 2
    try:
        cfg = load_config(args.config)
        out = _outdir(cfg, args.out)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PropagationError as exc:
        print(f"propagation error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
