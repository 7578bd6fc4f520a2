"""Command-line front end.

Usage::

    monent simulate --config run.toml [--seed N] [--out DIR] [--traj-dump [N]]
    monent master   --config run.toml
    monent oracle   --config run.toml
    monent sweep    --config run.toml

A run configuration is TOML with three sections::

    [model]
    preset = "local_diffusive"          # or: file = "model.toml"
    params = { gamma = 1.0, phi1 = 0.0 }
    initial = "bell0"                   # named state, or a vector / matrix literal

    [run]
    T = 2.0
    dt = 1e-3
    n_traj = 1000
    seed = 0
    mode = "P"                          # or "Q"
    observables = ["concurrence"]       # state | concurrence | weight | counts
    record_every = 10                   # optional, in steps
    sweep = { param = "phi1", values = [0.0, 0.5, 1.0] }   # optional

    [output]
    dir = "out"
    traj_dump = 0                       # trajectories to dump in full

Exit status is 0 on success, 1 for configuration or output errors and 2 for
numerical failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analytics, engine, presets
from .engine import NumericalError
from .entanglement import chi, concurrence_mixed
from .model import ModelError, Model, UnsupportedClassification, NonLocalError
from .modelfile import load_model, tomllib
from .qcore import BASIS_LABELS, I4, bell_basis, ket, matrix_from_literal, vector_from_literal

log = logging.getLogger("monitored_entanglement")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 1, 2


class ConfigError(ValueError):
    """The run configuration is invalid."""


# -- configuration --------------------------------------------------------------------


@dataclass
class RunConfig:
    preset: str | None = None
    params: dict = field(default_factory=dict)
    model_file: str | None = None
    initial: object = "bell0"
    T: float = 1.0
    dt: float = 1e-3
    n_traj: int = 100
    seed: int = 0
    mode: str = "P"
    observables: list = field(default_factory=lambda: ["concurrence"])
    record_every: int | None = None
    scheme: str = "exponential"
    sweep_param: str | None = None
    sweep_values: list = field(default_factory=list)
    out_dir: str = "out"
    traj_dump: int = 0
    base_dir: Path = field(default_factory=Path.cwd)

    def build_preset(self) -> presets.Preset | None:
        if self.preset is None:
            return None
        return presets.build(self.preset, **self.params)

    def build_model(self) -> Model:
        p = self.build_preset()
        if p is not None:
            return p.model
        path = Path(self.model_file)
        if not path.is_absolute():
            path = self.base_dir / path
        if not path.exists():
            raise ConfigError(f"model file {path} does not exist")
        return load_model(path)


def _named_state(name: str) -> np.ndarray:
    bells = bell_basis()
    if name.startswith("bell") and name[4:] in ("0", "1", "2", "3"):
        return bells[int(name[4:])]
    if name in BASIS_LABELS:
        return ket(name)
    if name == "esd":
        return presets.esd_initial_state()
    if name == "maximally_mixed":
        return I4 / 4
    raise ConfigError(f"unknown initial state {name!r}; use bell0..bell3, 11/10/01/00, esd, "
                      "maximally_mixed or a literal")


def parse_initial(spec) -> np.ndarray:
    if isinstance(spec, str):
        return _named_state(spec)
    try:
        arr = np.asarray(spec, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError("initial state literal must be a list of [re, im] pairs") from None
    if arr.shape == (4, 2):
        v = vector_from_literal(spec)
        nrm = np.linalg.norm(v)
        if nrm == 0:
            raise ConfigError("initial state vector is zero")
        return v / nrm
    if arr.shape in ((16, 2), (4, 4, 2)):
        return matrix_from_literal(spec, 4)
    raise ConfigError(f"initial state literal has shape {arr.shape}; expected 4 or 16 [re, im] pairs")


def _number(section: dict, key: str, default, kind=float):
    value = section.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"run.{key} must be a number, got {value!r}")
    if kind is int and value != int(value):
        raise ConfigError(f"run.{key} must be an integer, got {value!r}")
    return kind(value)


def config_from_dict(data: dict, base_dir: Path | None = None) -> RunConfig:
    unknown = set(data) - {"model", "run", "output"}
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
    m = data.get("model", {})
    r = data.get("run", {})
    o = data.get("output", {})
    cfg = RunConfig(base_dir=base_dir or Path.cwd())
    if ("preset" in m) == ("file" in m):
        raise ConfigError("model: give exactly one of 'preset' or 'file'")
    cfg.preset = m.get("preset")
    cfg.model_file = m.get("file")
    cfg.params = dict(m.get("params", {}))
    cfg.initial = m.get("initial", "bell0")
    cfg.T = _number(r, "T", cfg.T)
    cfg.dt = _number(r, "dt", cfg.dt)
    cfg.n_traj = _number(r, "n_traj", cfg.n_traj, int)
    cfg.seed = _number(r, "seed", cfg.seed, int)
    cfg.mode = r.get("mode", cfg.mode)
    obs = r.get("observables", cfg.observables)
    cfg.observables = [obs] if isinstance(obs, str) else list(obs)
    if "record_every" in r:
        cfg.record_every = _number(r, "record_every", 1, int)
    cfg.scheme = r.get("scheme", cfg.scheme)
    sweep = r.get("sweep")
    if sweep is not None:
        if not isinstance(sweep, dict) or "param" not in sweep or "values" not in sweep:
            raise ConfigError("run.sweep needs 'param' and 'values'")
        cfg.sweep_param = str(sweep["param"])
        cfg.sweep_values = list(sweep["values"])
    cfg.out_dir = o.get("dir", cfg.out_dir)
    cfg.traj_dump = int(o.get("traj_dump", 0))
    return cfg


def validate(cfg: RunConfig) -> Model:
    """Check every run invariant and return the model."""
    if not (math.isfinite(cfg.T) and cfg.T > 0):
        raise ConfigError(f"run.T must be positive, got {cfg.T}")
    if not (math.isfinite(cfg.dt) and cfg.dt > 0):
        raise ConfigError(f"run.dt must be positive, got {cfg.dt}")
    if cfg.dt > cfg.T:
        raise ConfigError(f"run.dt = {cfg.dt} exceeds run.T = {cfg.T}")
    if cfg.n_traj < 1:
        raise ConfigError(f"run.n_traj must be at least 1, got {cfg.n_traj}")
    if cfg.mode not in engine.MODES:
        raise ConfigError(f"run.mode must be 'Q' or 'P', got {cfg.mode!r}")
    bad = [o for o in cfg.observables if o not in engine.OBSERVABLES]
    if bad or not cfg.observables:
        raise ConfigError(f"run.observables must be drawn from {list(engine.OBSERVABLES)}, got {cfg.observables}")
    if cfg.scheme not in engine.SCHEMES:
        raise ConfigError(f"run.scheme must be one of {list(engine.SCHEMES)}")
    if cfg.record_every is not None and cfg.record_every < 1:
        raise ConfigError("run.record_every must be at least 1")
    if cfg.traj_dump < 0:
        raise ConfigError("output.traj_dump must be non-negative")
    try:
        model = cfg.build_model()
    except ModelError as exc:
        raise ConfigError(str(exc)) from None
    lam = np.asarray(model.lambdas, dtype=float)
    if lam.size and lam.max() * cfg.dt >= engine.MAX_RATE_DT:
        raise ConfigError(f"lambda_k dt = {lam.max() * cfg.dt:.3g} must be below {engine.MAX_RATE_DT}")
    parse_initial(cfg.initial)
    return model


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = tomllib.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data, base_dir=path.parent)


# -- output ----------------------------------------------------------------------------


def fmt(x: float) -> str:
    return f"{x:.17g}"


def write_csv(path: Path, header: list[str], rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(float(x)) for x in row])


def _entry_names():
    return [f"{a}{b}" for a in range(1, 5) for b in range(1, 5)]


def estimate_columns(name: str, est: engine.EnsembleEstimate, labels) -> tuple[list[str], list[np.ndarray]]:
    """CSV columns for one observable: estimate then standard error."""
    if name in ("concurrence", "weight"):
        return [name, f"{name}_se"], [est.mean, est.std_error]
    if name == "counts":
        heads, cols = [], []
        for k, lab in enumerate(labels):
            heads += [f"counts_{lab}", f"counts_{lab}_se"]
            cols += [est.mean[:, k], est.std_error[:, k]]
        return heads, cols
    heads, cols = [], []
    for idx, e in enumerate(_entry_names()):
        a, b = divmod(idx, 4)
        heads += [f"rho{e}_re", f"rho{e}_im", f"rho{e}_se"]
        cols += [est.mean[:, a, b].real, est.mean[:, a, b].imag, est.std_error[:, a, b]]
    return heads, cols


def dump_trajectory(path: Path, rec: engine.TrajectoryRecord) -> None:
    header = ["t", "weight"]
    if rec.pure:
        comps = [f"phi{lab}" for lab in BASIS_LABELS]
        flat = rec.states
    else:
        comps = [f"sigma{e}" for e in _entry_names()]
        flat = rec.states.reshape(len(rec.grid), 16)
    for c in comps:
        header += [f"{c}_re", f"{c}_im"]
    header += [f"N_{lab}" for lab in rec.channel_labels]
    counts = rec.cumulative_counts()
    rows = []
    for n, t in enumerate(rec.grid):
        row = [t, rec.weight[n]]
        for z in flat[n]:
            row += [z.real, z.imag]
        row += list(counts[n])
        rows.append(row)
    write_csv(path, header, rows)


# -- commands ------------------------------------------------------------------------------


def cmd_simulate(cfg: RunConfig, out: Path | None = None) -> dict:
    model = validate(cfg)
    out = Path(out or cfg.out_dir)
    rho0 = parse_initial(cfg.initial)
    t0 = time.perf_counter()
    ests = engine.ensemble_run(model, rho0, cfg.T, cfg.dt, cfg.n_traj, seed=cfg.seed,
                               observable=list(cfg.observables), mode=cfg.mode, scheme=cfg.scheme,
                               record_every=cfg.record_every)
    labels = [ch.label or str(k) for k, ch in enumerate(model.detection_operators(0.0).channels)]
    times = next(iter(ests.values())).times
    header, cols = ["t"], [times]
    for name in cfg.observables:
        h, c = estimate_columns(name, ests[name], labels)
        header += h
        cols += c
    write_csv(out / "simulate.csv", header, zip(*cols))
    for i in range(cfg.traj_dump):
        rec = engine.simulate(model, rho0, cfg.T, cfg.dt, seed=cfg.seed, mode=cfg.mode, traj_index=i,
                              scheme=cfg.scheme)
        dump_trajectory(out / f"traj_{i:04d}.csv", rec)
    summary = dict(command="simulate", preset=cfg.preset, params=cfg.params, mode=cfg.mode, seed=cfg.seed,
                   n_traj=cfg.n_traj, T=cfg.T, dt=cfg.dt, observables=cfg.observables,
                   final={name: _final(ests[name]) for name in cfg.observables},
                   seconds=round(time.perf_counter() - t0, 3))
    (out / "simulate.json").write_text(json.dumps(summary, indent=2, default=str))
    return summary


def _final(est: engine.EnsembleEstimate):
    m = est.mean[-1]
    if np.ndim(m) == 0:
        return dict(estimate=float(m), std_error=float(est.std_error[-1]))
    if np.iscomplexobj(m):
        return dict(trace=float(np.trace(m).real))
    return dict(estimate=[float(x) for x in np.ravel(m)])


def cmd_master(cfg: RunConfig, out: Path | None = None) -> dict:
    model = validate(cfg)
    out = Path(out or cfg.out_dir)
    init = parse_initial(cfg.initial)
    rho0 = np.outer(init, init.conj()) if init.ndim == 1 else init
    path = engine.evolve_master(model, rho0, cfg.T, cfg.dt)
    conc = [concurrence_mixed((r + r.conj().T) / 2) for r in path.states]
    header = ["t", "concurrence"] + [f"rho{a}{a}" for a in range(1, 5)] + \
             ["rho14_re", "rho14_im", "rho23_re", "rho23_im", "trace"]
    rows = []
    for t, c, r in zip(path.times, conc, path.states):
        rows.append([t, c, *np.diag(r).real, r[0, 3].real, r[0, 3].imag, r[1, 2].real, r[1, 2].imag,
                     np.trace(r).real])
    write_csv(out / "master.csv", header, rows)
    t_d = analytics.apriori_esd_time(model, rho0, cfg.T, cfg.dt, path=path)
    summary = dict(command="master", preset=cfg.preset, params=cfg.params, T=cfg.T, dt=cfg.dt,
                   esd_time=t_d, min_eigenvalue=path.min_eigenvalue)
    (out / "master.json").write_text(json.dumps(summary, indent=2, default=str))
    if t_d is None:
        print("no entanglement sudden death on [0, T]")
    else:
        print(f"entanglement sudden death at t_D = {t_d:.12g}")
    return summary


def available_oracles(preset: presets.Preset, init: np.ndarray) -> dict:
    """Oracle columns that apply to this preset and initial state."""
    rho0 = np.outer(init, init.conj()) if init.ndim == 1 else init
    p = preset.params
    out = {}
    if preset.id in ("local_diffusive", "local_jump", "gammadelta"):
        curve = analytics.oracle_mean_concurrence_local(preset.model, concurrence_mixed(rho0))
        out["mean_concurrence"] = curve
    if preset.id == "nonlocal_diffusive" and p.get("omega0", 0.0) == 0.0 and init.ndim == 1:
        c0, d0 = chi(init), analytics.d_form(init)
        out["chi_abs"] = lambda t: np.abs(analytics.oracle_nonlocal_chi(p["gamma"], p["theta"], c0, d0, t))
    if preset.id in ("local_diffusive", "local_jump", "nonlocal_diffusive") and p.get("omega0", 0.0) == 0.0:
        try:
            t_d = analytics.oracle_esd_times(preset.id, p, rho0)
        except UnsupportedClassification:
            t_d = None
        if t_d is not None:
            g = p["gamma"]
            out["apriori_concurrence"] = lambda t: np.maximum(0.0, analytics.esd_apriori_curve(g, t))
    if preset.id == "swap_witness":
        nu = p["nu"]
        out["apriori_concurrence"] = analytics.oracle_replacement_apriori_concurrence(rho0, nu)
        c0 = concurrence_mixed(rho0)
        out["mean_concurrence"] = lambda t: analytics.oracle_sec4_mean_concurrence(nu, c0, t)
    return out


def cmd_oracle(cfg: RunConfig, out: Path | None = None) -> dict:
    validate(cfg)
    out = Path(out or cfg.out_dir)
    preset = cfg.build_preset()
    if preset is None:
        raise ConfigError("oracle needs a preset model; custom model files have no closed forms")
    init = parse_initial(cfg.initial)
    oracles = available_oracles(preset, init)
    if not oracles:
        raise ConfigError(f"no oracle applies to preset {preset.id!r} with these parameters and initial "
                          f"state; its oracles are: {', '.join(preset.oracles) or 'none'}")
    grid = engine.make_grid(cfg.T, cfg.dt)
    stride = cfg.record_every or max(1, (len(grid) - 1) // 200)
    t = grid[::stride] if (len(grid) - 1) % stride == 0 else np.append(grid[::stride], grid[-1])
    names = list(oracles)
    write_csv(out / "oracle.csv", ["t"] + names, zip(t, *[np.real(oracles[n](t)) for n in names]))
    summary = dict(command="oracle", preset=preset.id, params=preset.params, columns=names)
    esd = None
    try:
        rho0 = np.outer(init, init.conj()) if init.ndim == 1 else init
        esd = analytics.oracle_esd_times(preset.id, preset.params, rho0)
    except (UnsupportedClassification, ValueError):
        pass
    summary["esd_time"] = esd
    (out / "oracle.json").write_text(json.dumps(summary, indent=2, default=str))
    return summary


def cmd_sweep(cfg: RunConfig, out: Path | None = None) -> dict:
    if cfg.sweep_param is None or not cfg.sweep_values:
        raise ConfigError("sweep needs run.sweep = { param = ..., values = [...] }")
    if cfg.preset is None:
        raise ConfigError("sweep varies a preset parameter; model files cannot be swept")
    out = Path(out or cfg.out_dir)
    rows = []
    results = []
    for i, value in enumerate(cfg.sweep_values):
        point = replace(cfg, params={**cfg.params, cfg.sweep_param: value}, seed=cfg.seed + i)
        res = cmd_simulate(point, out / f"point_{i:03d}")
        results.append(res)
        row = [i, value, point.seed]
        for name in cfg.observables:
            fin = res["final"][name]
            if "estimate" in fin and np.ndim(fin["estimate"]) == 0:
                row += [fin["estimate"], fin["std_error"]]
        rows.append(row)
    header = ["index", cfg.sweep_param, "seed"]
    for name in cfg.observables:
        if name in ("concurrence", "weight"):
            header += [f"{name}_final", f"{name}_final_se"]
    write_csv(out / "sweep.csv", header, rows)
    summary = dict(command="sweep", param=cfg.sweep_param, values=cfg.sweep_values, points=len(results))
    (out / "sweep.json").write_text(json.dumps(summary, indent=2, default=str))
    return summary


COMMANDS = dict(simulate=cmd_simulate, master=cmd_master, oracle=cmd_oracle, sweep=cmd_sweep)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="monent", description="Monitored two-qubit entanglement simulations.")
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--seed", type=int, help="root seed, overrides run.seed")
    ap.add_argument("--out", help="output directory, overrides output.dir")
    ap.add_argument("--traj-dump", nargs="?", type=int, const=1, default=None, metavar="N",
                    help="also write the first N trajectories in full (default 1)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out is not None:
            cfg.out_dir = args.out
        if args.traj_dump is not None:
            cfg.traj_dump = args.traj_dump
        COMMANDS[args.command](cfg)
    except (ConfigError, ModelError, NonLocalError, UnsupportedClassification) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
