"""Command-line front end: INI configuration, figure recipes and data output.

Every run writes plain CSV tables, binary field snapshots and a
``manifest.json`` into the output directory. Nothing is plotted here.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import json
import logging
import os
import platform
import struct
import sys
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Tuple

import numpy as np
import scipy

from .core import ModelParams, State

log = logging.getLogger("eoklab")

COMMANDS = ("onset", "dispersion", "amplitude", "evolve1d", "evolve2d", "snake", "maxwell",
            "spectrum", "map", "ly-scan")


class ConfigError(ValueError):
    """Invalid configuration text; the message names the line or key."""


# --- schema -------------------------------------------------------------------------------
# section -> key -> (type, default). None means "derived at run time".

def _floats(text: str) -> tuple:
    """'a, b, c' or 'start:stop:count' -> tuple of floats."""
    text = text.strip()
    if not text:
        return ()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range must be start:stop:count")
        return tuple(float(v) for v in np.linspace(float(parts[0]), float(parts[1]), int(parts[2])))
    return tuple(float(v) for v in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else float(text)


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "auto", "none") else int(text)


SCHEMA: Dict[str, Dict[str, Tuple[Any, Any]]] = {
    "run": {"command": (str, None), "seed": (int, 0), "workers": (int, 1), "recipe": (str, "")},
    "params": {"gamma": (float, 0.0), "sigma": (float, 1.0), "a": (float, 0.0),
               "tau": (float, 0.0), "m": (float, 0.0)},
    "grid": {"length": (_opt_float, None), "n": (_opt_int, None),
             "ly": (_opt_float, None), "ny": (_opt_int, None)},
    "integrator": {"experiment": (str, ""), "dt": (_opt_float, None), "t_end": (_opt_float, None),
                   "snapshots": (_opt_int, None), "newton_tol": (float, 1e-10),
                   "newton_max_iter": (int, 20), "noise_amplitude": (float, 1e-3)},
    "continuation": {"branches": (str, "L0, Lpi"), "ds": (float, 0.02), "ds_max": (float, 0.3),
                     "max_steps": (int, 3000), "stability": (_bool, True),
                     "fold_a": (_floats, ()), "fold_index": (int, 6)},
    "dispersion": {"k": (_floats, _floats("0:4:401")), "gammas": (_floats, ())},
    "maxwell": {"periods": (int, 21), "spread": (float, 0.25), "n": (int, 65)},
    "spectrum": {"k_y": (_floats, _floats("0.02:3:60")), "segment": (int, 5), "gammas": (_floats, ()),
                 "masses": (_floats, ()), "method": (str, "shift-invert")},
}

_FORMAT = {tuple: lambda v: ", ".join(repr(float(x)) for x in v), bool: lambda v: str(v).lower()}


def _format(value) -> str:
    if value is None:
        return "auto"
    for kind, fmt in _FORMAT.items():
        if isinstance(value, kind):
            return fmt(value)
    return repr(value) if isinstance(value, float) else str(value)


@dataclass(frozen=True)
class RunConfig:
    command: str
    params: ModelParams
    sections: Dict[str, Dict[str, Any]]
    seed: int = 0
    workers: int = 1
    out: str = "out"

    def get(self, section: str, key: str):
        return self.sections[section][key]

    def serialize(self) -> str:
        """INI text with every default resolved; parse(serialize(c)) == c."""
        lines = []
        for section in SCHEMA:
            lines.append(f"[{section}]")
            values = self.sections[section]
            for key in SCHEMA[section]:
                lines.append(f"{key} = {_format(values[key])}")
            lines.append("")
        return "\n".join(lines)

    def __eq__(self, other):
        if not isinstance(other, RunConfig):
            return NotImplemented
        return (self.command, self.params, self.seed, self.workers) == \
            (other.command, other.params, other.seed, other.workers) and \
            self.serialize() == other.serialize()


def _line_of(text: str, section: str, key: str | None = None) -> int:
    """1-based line of a section header or of a key inside it (0 if not found)."""
    current = None
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if key is None and current == section:
                return i
        elif key is not None and current == section and "=" in line:
            if line.split("=", 1)[0].strip().lower() == key:
                return i
    return 0


def parse_config(text: str, out: str = "out") -> RunConfig:
    """Validate INI text against the schema and resolve defaults."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"parse error: {exc}") from exc
    sections = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"line {_line_of(text, section)}: unknown section [{section}]")
    for section, keys in SCHEMA.items():
        given = dict(cp[section]) if cp.has_section(section) else {}
        resolved = {}
        for key in given:
            if key not in keys:
                raise ConfigError(f"line {_line_of(text, section, key)}: unknown key "
                                  f"'{key}' in [{section}]")
        for key, (kind, default) in keys.items():
            if key in given:
                try:
                    resolved[key] = kind(given[key])
                except ValueError as exc:
                    raise ConfigError(f"line {_line_of(text, section, key)}: bad value for "
                                      f"{section}.{key}: {exc}") from exc
            else:
                resolved[key] = default
        sections[section] = resolved
    command = sections["run"]["command"]
    if command is None:
        raise ConfigError("missing run.command")
    if command not in COMMANDS:
        raise ConfigError(f"line {_line_of(text, 'run', 'command')}: unknown command "
                          f"{command!r}; expected one of {', '.join(COMMANDS)}")
    p = sections["params"]
    try:
        params = ModelParams(**p)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if params.eta <= 0:
        raise ConfigError(f"eta must be positive (eta = 1 - 3m^2 + 2 tau m = {params.eta:.6g}; "
                          f"keys params.m, params.tau)")
    integ = sections["integrator"]
    for key in ("dt", "t_end"):
        if integ[key] is not None and integ[key] <= 0:
            raise ConfigError(f"line {_line_of(text, 'integrator', key)}: "
                              f"integrator.{key} must be positive")
    if sections["run"]["workers"] < 1:
        raise ConfigError("run.workers must be at least 1")
    return RunConfig(command, params, sections, seed=sections["run"]["seed"],
                     workers=sections["run"]["workers"], out=out)


# --- recipes --------------------------------------------------------------------------------

RECIPES: Dict[str, str] = {
    "fig1": """[run]\ncommand = dispersion\n[params]\nm = 0.4\n[dispersion]\nk = 0:3:301
gammas = 0.0675, 0.0703, 0.0730\n""",
    "fig2a": "[run]\ncommand = evolve1d\n[params]\ngamma = 0.24\na = 0.1\n[integrator]\nexperiment = eckhaus\n",
    "fig2b": "[run]\ncommand = evolve2d\n[params]\ngamma = 0.1\na = 0.1\n[integrator]\nexperiment = zigzag\n",
    "fig3": "[run]\ncommand = snake\n[params]\nm = 0.4\n[grid]\nn = 1025\n",
    "fig5": "[run]\ncommand = maxwell\n[params]\nm = 0.47\n",
    "fig6a": "[run]\ncommand = spectrum\n[params]\nm = 0.5\n[spectrum]\ngammas = 0.0242\n",
    "fig6b": "[run]\ncommand = spectrum\n[params]\nm = 0.5\n[spectrum]\ngammas = 0.0437\n",
    "fig7a": "[run]\ncommand = evolve2d\n[params]\ngamma = 0.0242\nm = 0.5\n[integrator]\nexperiment = fig7a-body\n",
    "fig7b": "[run]\ncommand = evolve2d\n[params]\ngamma = 0.0199\nm = 0.5\n[integrator]\nexperiment = fig7b-wall\n",
    "fig7c": "[run]\ncommand = evolve2d\n[params]\ngamma = 0.0437\nm = 0.5\n[integrator]\nexperiment = fig7c-localized-body\n",
    "fig8-hex": "[run]\ncommand = evolve2d\n[params]\ngamma = 0.03\nm = 0.5\n[integrator]\nexperiment = hex-seed\n",
    "fig8-map": """[run]\ncommand = map\n[params]\nm = 0.5\n[grid]\nn = 513\n[spectrum]
gammas = 0.015:0.05:8\nmasses = 0.42:0.52:6\nk_y = 0.05:3:30\n""",
    "fig9a": "[run]\ncommand = ly-scan\n[params]\nm = 0.5\n[spectrum]\ngammas = 0.018:0.045:10\n",
    "fig9b": "[run]\ncommand = ly-scan\n[params]\nm = 0.45\n[spectrum]\ngammas = 0.03:0.06:10\n",
    "fig10a": "[run]\ncommand = snake\n[params]\nm = 0.4\na = 0.1\n[grid]\nn = 1025\n",
    "fig10b": """[run]\ncommand = snake\n[params]\nm = 0.4\n[grid]\nn = 513\n[continuation]
fold_a = 0:0.1:6\n""",
    "fig10c": """[run]\ncommand = map\n[params]\nm = 0.5\ntau = -0.1\na = 0.1\n[grid]\nn = 513\n[spectrum]
gammas = 0.015:0.06:8\nmasses = 0.42:0.52:6\nk_y = 0.05:3:30\n""",
}


# --- output helpers -------------------------------------------------------------------------

SNAPSHOT_MAGIC = b"EOKSNAP1"
HEADER_SIZE = 256
# magic, version, ndim, nx, ny, lx, ly, hx, hy, time, gamma, sigma, a, tau, m, nfields
_HEADER = struct.Struct("<8sIIQQddddddddddI")


def write_snapshot(path: Path, state: State, params: ModelParams, t: float) -> None:
    """Fixed 256-byte little-endian header, then u and phi as row-major float64."""
    grid = state.grid
    nx = grid.counts[0]
    ny = grid.counts[1] if grid.dimension == 2 else 1
    lx = grid.lengths[0]
    ly = grid.lengths[1] if grid.dimension == 2 else 0.0
    hx = grid.spacing[0]
    hy = grid.spacing[1] if grid.dimension == 2 else 0.0
    head = _HEADER.pack(SNAPSHOT_MAGIC, 1, grid.dimension, nx, ny, lx, ly, hx, hy, float(t),
                        params.gamma, params.sigma, params.a, params.tau, params.m, 2)
    with open(path, "wb") as fh:
        fh.write(head.ljust(HEADER_SIZE, b"\0"))
        fh.write(np.ascontiguousarray(state.u.values, dtype="<f8").tobytes())
        fh.write(np.ascontiguousarray(state.phi.values, dtype="<f8").tobytes())


def read_snapshot(path: Path) -> dict:
    raw = Path(path).read_bytes()
    fields = _HEADER.unpack(raw[:_HEADER.size])
    magic, version, ndim, nx, ny, lx, ly, hx, hy, t, g, s, a, tau, m, nf = fields
    if magic != SNAPSHOT_MAGIC:
        raise ValueError("not an eoklab snapshot")
    shape = (nx,) if ndim == 1 else (nx, ny)
    data = np.frombuffer(raw[HEADER_SIZE:], dtype="<f8").reshape((nf,) + shape)
    return {"version": version, "shape": shape, "lengths": (lx, ly)[:ndim],
            "spacing": (hx, hy)[:ndim], "time": t,
            "params": ModelParams(gamma=g, sigma=s, a=a, tau=tau, m=m), "u": data[0], "phi": data[1]}


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


class Outputs:
    def __init__(self, root: Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.files: List[str] = []

    def csv(self, name: str, header: List[str], rows) -> Path:
        path = self.root / name
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                if len(row) != len(header):
                    raise ValueError(f"{name}: row has {len(row)} cells, header {len(header)}")
                w.writerow([_cell(v) for v in row])
        self.files.append(name)
        return path

    def snapshot(self, name: str, state: State, params: ModelParams, t: float) -> Path:
        path = self.root / name
        write_snapshot(path, state, params, t)
        self.files.append(name)
        return path


# --- commands -------------------------------------------------------------------------------

def cmd_onset(cfg: RunConfig, out: Outputs):
    from .amplitude import amplitude_data
    from .linear import critical_onset, spatial_eigenvalues
    p = cfg.params
    onset = critical_onset(p)
    data = amplitude_data(p)
    regime = spatial_eigenvalues(p).regime if p.gamma > 0 else ""
    out.csv("onset.csv", ["m", "a", "tau", "sigma", "eta", "mu0", "gamma_c", "k_c", "f", "criticality",
                          "spatial_regime"],
            [[p.m, p.a, p.tau, p.sigma, p.eta, p.mu0, onset.gamma_c, onset.k_c, data.f,
              data.criticality, regime]])
    return {"gamma_c": onset.gamma_c, "k_c": onset.k_c}


def cmd_dispersion(cfg: RunConfig, out: Outputs):
    from .linear import critical_onset, dispersion
    p = cfg.params
    k = np.array(cfg.get("dispersion", "k"))
    gammas = cfg.get("dispersion", "gammas") or (critical_onset(p).gamma_c,)
    rows = [[g, kk, float(dispersion(kk, p.with_(gamma=g)))] for g in gammas for kk in k]
    out.csv("dispersion.csv", ["gamma", "k", "lambda"], rows)
    return {"curves": len(gammas)}


def cmd_amplitude(cfg: RunConfig, out: Outputs):
    from .amplitude import amplitude_data, eckhaus_boundaries
    p = cfg.params
    data = amplitude_data(p)
    rows = [[p.m, data.f, data.gamma_hat, data.criticality]]
    out.csv("amplitude.csv", ["m", "f", "gamma_hat", "criticality"], rows)
    if data.criticality != "degenerate" and data.gamma_hat != 0:
        q_exist, q_eck = eckhaus_boundaries(data)
        out.csv("eckhaus.csv", ["Q2_existence", "Q2_eckhaus"], [[q_exist, q_eck]])
    return {"f": data.f, "criticality": data.criticality}


def _integrator_config(cfg: RunConfig, base):
    from .dynamics import uniform_snapshots
    integ = cfg.sections["integrator"]
    t_end = integ["t_end"] if integ["t_end"] is not None else base.t_end
    count = integ["snapshots"] if integ["snapshots"] is not None else max(len(base.snapshot_times) - 1, 1)
    return base.with_(dt=integ["dt"] if integ["dt"] is not None else base.dt, t_end=t_end,
                      snapshot_times=uniform_snapshots(t_end, count),
                      newton_tol=integ["newton_tol"], newton_max_iter=integ["newton_max_iter"],
                      noise_amplitude=integ["noise_amplitude"], noise_seed=cfg.seed)


def _evolve(cfg: RunConfig, out: Outputs, dimension: int):
    from .dynamics import EXPERIMENTS, run_experiment
    name = cfg.get("integrator", "experiment")
    if not name:
        name = "eckhaus" if dimension == 1 else "zigzag"
    if name not in EXPERIMENTS:
        raise ConfigError(f"unknown experiment {name!r}")
    exp = EXPERIMENTS[name]
    icfg = _integrator_config(cfg, exp.config)
    wanted = "fd-1d" if dimension == 1 else "spectral-2d"
    if icfg.scheme != wanted:
        raise ConfigError(f"experiment {name!r} uses the {icfg.scheme} scheme, not {wanted}")
    n = cfg.get("grid", "n")
    res = run_experiment(name, cfg.params, icfg, n=n)
    tr = res.trajectory
    out.csv("timeseries.csv", ["t", "mass", "energy", "norm"],
            zip(tr.times, tr.mass, tr.energy, tr.norm))
    for i, (t, s) in enumerate(zip(tr.times, tr.snapshots)):
        out.snapshot(f"snapshot_{i:05d}.bin", s, cfg.params, t)
    diag = {k: v for k, v in res.diagnostics.items() if k != "cells"}
    if "cells" in res.diagnostics:
        out.csv("cells.csv", ["t", "cells"], zip(tr.times, res.diagnostics["cells"]))
    return diag


def cmd_evolve1d(cfg, out):
    return _evolve(cfg, out, 1)


def cmd_evolve2d(cfg, out):
    return _evolve(cfg, out, 2)


def _controls(cfg: RunConfig):
    from .continuation import Controls
    c = cfg.sections["continuation"]
    return Controls(ds=c["ds"], ds_max=c["ds_max"], max_steps=c["max_steps"])


def _branch_rows(branch):
    for i, p in enumerate(branch.points):
        stable = "" if p.stability is None else p.stability
        yield [branch.label, i, p.value, p.norm, p.nu, p.fold, stable, p.peaks]


def cmd_snake(cfg: RunConfig, out: Outputs):
    from .continuation import fold_continuation, localized_branch, snaking_region
    from .stability import annotate_branch
    p = cfg.params
    n = cfg.get("grid", "n") or 1025
    length = cfg.get("grid", "length")
    labels = [s.strip() for s in cfg.get("continuation", "branches").split(",") if s.strip()]
    psi = {"L0": 0.0, "Lpi": np.pi}
    unknown = set(labels) - set(psi)
    if unknown:
        raise ConfigError(f"unknown branch labels {sorted(unknown)}; use L0 and/or Lpi")
    branches = []
    for label in labels:
        br = localized_branch(p, psi[label], length, n, _controls(cfg))
        if cfg.get("continuation", "stability"):
            annotate_branch(br)
        branches.append(br)
    rows = [r for br in branches for r in _branch_rows(br)]
    out.csv("branches.csv", ["branch", "index", "gamma", "norm", "nu", "fold", "stable", "peaks"], rows)
    fold_rows = [[br.label, j + 1, f.value, f.norm, f.peaks] for br in branches
                 for j, f in enumerate(br.folds)]
    out.csv("folds.csv", ["branch", "fold", "gamma", "norm", "peaks"], fold_rows)
    result = {"terminations": {br.label: br.termination for br in branches}}
    if len(branches) == 2:
        g1, g2 = snaking_region(p, branches=branches)
        out.csv("region.csv", ["gamma_1", "gamma_2"], [[g1, g2]])
        result["region"] = [g1, g2]
    fold_a = cfg.get("continuation", "fold_a")
    if fold_a:
        idx = cfg.get("continuation", "fold_index")
        rows = []
        for br in branches:
            if len(br.folds) < idx:
                raise ValueError(f"{br.label} has only {len(br.folds)} folds")
            curve = fold_continuation(br.folds[idx - 1], br.problem, fold_a)
            rows += [[br.label, idx, a, g] for a, g in zip(curve.a, curve.gamma)]
        out.csv("fold_curves.csv", ["branch", "fold", "a", "gamma"], rows)
    return result


def cmd_maxwell(cfg: RunConfig, out: Outputs):
    from .energy import default_periods, maxwell_point
    mw = cfg.sections["maxwell"]
    periods = default_periods(cfg.params, mw["periods"], mw["spread"])
    g_max, p_star, locus = maxwell_point(cfg.params, periods, n=mw["n"])
    out.csv("maxwell_locus.csv", ["period", "gamma_M"], zip(locus.periods, locus.gamma_m))
    out.csv("maxwell.csv", ["gamma_max", "period_star"], [[g_max, p_star]])
    return {"gamma_max": g_max, "period_star": p_star}


def _stripe_branch(p: ModelParams, n: int, length):
    from .continuation import Controls, localized_branch
    return localized_branch(p, 0.0, length, n, Controls(ds=0.02, ds_max=0.3, max_steps=4000))


def cmd_spectrum(cfg: RunConfig, out: Outputs):
    from .stability import classify_mode, critical_Ly, growth_curve, stripe_at
    p = cfg.params
    sp_cfg = cfg.sections["spectrum"]
    gammas = sp_cfg["gammas"] or (p.gamma,)
    n = cfg.get("grid", "n") or 513
    branch = _stripe_branch(p, n, cfg.get("grid", "length"))
    rows, classes = [], []
    for g in gammas:
        pt = stripe_at(branch, g, sp_cfg["segment"])
        curve = growth_curve(pt, sp_cfg["k_y"], pt.params, method=sp_cfg["method"])
        rows += [[g, k, b] for k, b in zip(curve.k_y, curve.beta_max)]
        mc = classify_mode(curve, pt.state)
        classes.append([g, mc.label, mc.k_max, mc.beta_max, mc.edge_fraction, mc.interior_fraction,
                        critical_Ly(curve)])
    out.csv("growth.csv", ["gamma", "k_y", "beta_max"], rows)
    out.csv("modes.csv", ["gamma", "label", "k_max", "beta_max", "edge_fraction",
                          "interior_fraction", "critical_Ly"], classes)
    return {"labels": [c[1] for c in classes]}


def _map_job(args):
    from .stability import instability_map
    base, gammas, m, k_values, segment, n, length = args
    res = instability_map(gammas, [m], base, k_values, segment=segment, n=n, length=length)
    return list(res.labels[0]), list(res.region[0])


def _fan_out(jobs, workers: int):
    if workers <= 1:
        return [_map_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_map_job, jobs))


def cmd_map(cfg: RunConfig, out: Outputs):
    sp_cfg = cfg.sections["spectrum"]
    gammas = sp_cfg["gammas"]
    masses = sp_cfg["masses"] or (cfg.params.m,)
    if not gammas:
        raise ConfigError("spectrum.gammas is required for map")
    n = cfg.get("grid", "n") or 513
    jobs = [(cfg.params, gammas, m, sp_cfg["k_y"], sp_cfg["segment"], n, cfg.get("grid", "length"))
            for m in masses]
    results = _fan_out(jobs, cfg.workers)
    rows, regions = [], []
    for m, (labels, region) in zip(masses, results):
        rows += [[m, g, lab] for g, lab in zip(gammas, labels)]
        regions.append([m, region[0], region[1]])
    out.csv("map.csv", ["m", "gamma", "label"], rows)
    out.csv("map_region.csv", ["m", "gamma_1", "gamma_2"], regions)
    return {"cells": len(rows)}


def cmd_ly_scan(cfg: RunConfig, out: Outputs):
    from .stability import classify_mode, critical_Ly, growth_curve, stripe_at
    p = cfg.params
    sp_cfg = cfg.sections["spectrum"]
    gammas = sp_cfg["gammas"] or (p.gamma,)
    n = cfg.get("grid", "n") or 513
    branch = _stripe_branch(p, n, cfg.get("grid", "length"))
    rows = []
    for g in gammas:
        try:
            pt = stripe_at(branch, g, sp_cfg["segment"])
        except ValueError as exc:
            log.info("gamma=%.5g skipped: %s", g, exc)
            rows.append([p.m, g, "outside", ""])
            continue
        curve = growth_curve(pt, sp_cfg["k_y"], pt.params, method=sp_cfg["method"])
        rows.append([p.m, g, classify_mode(curve, pt.state).label, critical_Ly(curve)])
    out.csv("ly_scan.csv", ["m", "gamma", "label", "critical_Ly"], rows)
    return {"points": len(rows)}


DISPATCH = {"onset": cmd_onset, "dispersion": cmd_dispersion, "amplitude": cmd_amplitude,
            "evolve1d": cmd_evolve1d, "evolve2d": cmd_evolve2d, "snake": cmd_snake,
            "maxwell": cmd_maxwell, "spectrum": cmd_spectrum, "map": cmd_map, "ly-scan": cmd_ly_scan}


def _versions() -> dict:
    from . import __version__
    return {"eoklab": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run(config: RunConfig) -> int:
    """Execute a validated config; returns the process exit status."""
    out = Outputs(Path(config.out))
    (out.root / "config.ini").write_text(config.serialize())
    np.random.seed(config.seed)
    start = time.time()
    manifest = {"command": config.command, "seed": config.seed, "workers": config.workers,
                "config": config.serialize(), "versions": _versions()}
    try:
        result = DISPATCH[config.command](config, out)
        status = 0
        manifest["result"] = result
    except Exception as exc:  # reported as a structured record, not a traceback dump
        status = 1
        record = {"error": type(exc).__name__, "message": str(exc),
                  "traceback": traceback.format_exc()}
        (out.root / "error.json").write_text(json.dumps(record, indent=2))
        log.error("%s failed: %s: %s", config.command, type(exc).__name__, exc)
    manifest["status"] = status
    manifest["wall_time_s"] = time.time() - start
    manifest["outputs"] = sorted(out.files)
    (out.root / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_cell))
    return status


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="eoklab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", help="INI configuration file")
    ap.add_argument("--recipe", choices=sorted(RECIPES), help="named figure recipe")
    ap.add_argument("--out", default="out", help="output directory")
    ap.add_argument("--seed", type=int, help="override run.seed")
    ap.add_argument("--workers", type=int, help="override run.workers")
    ap.add_argument("--list-recipes", action="store_true")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("EOK_LOG", "WARNING").upper(),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    if args.list_recipes:
        for name, text in RECIPES.items():
            print(f"{name}: {parse_config(text).command}")
        return 0
    if bool(args.config) == bool(args.recipe):
        print("error: give exactly one of --config or --recipe", file=sys.stderr)
        return 2
    text = Path(args.config).read_text(encoding="utf-8") if args.config else RECIPES[args.recipe]
    try:
        cfg = parse_config(text, out=args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    run_section = dict(cfg.sections["run"])
    if args.recipe:
        run_section["recipe"] = args.recipe
    if args.seed is not None:
        run_section["seed"] = args.seed
    if args.workers is not None:
        run_section["workers"] = max(1, args.workers)
    sections = {**cfg.sections, "run": run_section}
    cfg = replace(cfg, sections=sections, seed=run_section["seed"], workers=run_section["workers"])
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
