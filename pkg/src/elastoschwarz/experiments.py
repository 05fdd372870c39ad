"""End-to-end experiment drivers behind the command-line interface.

Each driver takes an :class:`ExperimentConfig`, writes CSV files into an output
directory and returns an :class:`ExperimentResult` listing the files, a summary
table and any expectation failures.
"""
from __future__ import annotations

import configparser
import csv
import json
import math
import platform
import time
from dataclasses import dataclass, field
from importlib import metadata
from pathlib import Path

import numpy as np

from . import dd, fem, mesh as meshmod, solvers, symbols
from .errors import ConfigError, DomainError, ElastoSchwarzError
from .symbols import ElasticMedium

KINDS = ("symbol-scan", "delta-star", "two-subdomain", "grid-4x4", "transmission")

_MEDIUM = {"rho": (float, 1.0), "cp": (float, 1.0), "cs": (float, 0.5), "lam": (float, None), "mu": (float, None)}
_DD = {
    "layers": ("intlist", "1,3"),
    "tol": (float, 1e-6),
    "max_iters": (int, 1000),
    "gmres_max_iters": (int, 500),
    "restart": (int, 0),
    "gmres_stop": (str, "error"),
    "pou": (str, "restricted"),
    "interface_weighting": (str, "neighbors"),
    "workers": (int, 1),
}

SCHEMAS = {
    "symbol-scan": {
        **_MEDIUM,
        "omega": (float, 1.0),
        "variants": ("strlist", "classical"),
        "deltas": ("floatlist", "0.1,0.5,1"),
        "k_min": (float, 0.0),
        "k_max": (float, 6.0),
        "n_k": (int, 601),
    },
    "delta-star": {
        **_MEDIUM,
        "omegas": ("floatlist", "1"),
        "factors": ("floatlist", "0.95,1.0,1.05"),
        "k_max_factor": (float, 100.0),
        "spacing": (float, 1e-3),
    },
    "two-subdomain": {
        **_MEDIUM,
        **_DD,
        "omega": (float, 5.0),
        "cells_per_unit": (int, 80),
        "kinds": ("strlist", "ORAS"),
        "solver": (str, "stationary"),
        "max_iters": (int, 200),
        "snapshot_iter": (int, 60),
        "expect_converged": ("intlist", "3"),
    },
    "grid-4x4": {
        **_MEDIUM,
        **_DD,
        "omega": (float, 5.0),
        "cells": (int, 160),
        "px": (int, 4),
        "py": (int, 4),
        "kinds": ("strlist", "RAS,ORAS"),
        "solver": (str, "both"),
        "ras_iters": (int, 50),
        "expect_oras_converge": (bool, True),
    },
    "transmission": {
        **_DD,
        "frequency": (float, 1e4),
        "inner_rho": (float, 7800.0),
        "inner_mu": (float, 77e9),
        "inner_lam": (float, 12e10),
        "outer_rho": (float, 7800.0),
        "outer_mu": (float, 68e9),
        "outer_lam": (float, 11e11),
        "inner_E": (float, 2e11),
        "inner_nu": (float, 0.3),
        "outer_E": (float, 2e11),
        "outer_nu": (float, 0.47),
        "radius": (float, 0.5),
        "cells": (int, 120),
        "parts": (int, 4),
        "layers": ("intlist", "1,2,3"),
        "kinds": ("strlist", "RAS,ORAS"),
        "solver": (str, "both"),
        "max_iters": (int, 300),
        "ras_iters": (int, 50),
        "expect_oras_converge": (bool, True),
    },
}

ALIASES = {"symbol_scan": "symbol-scan", "analyze": "symbol-scan", "delta_star": "delta-star",
           "two": "two-subdomain", "grid": "grid-4x4", "grid4x4": "grid-4x4"}


@dataclass
class ExperimentConfig:
    kind: str
    params: dict
    source: str = ""

    def __getitem__(self, key):
        return self.params[key]

    def medium(self):
        p = self.params
        try:
            if p.get("lam") is not None or p.get("mu") is not None:
                if p.get("lam") is None or p.get("mu") is None:
                    raise ConfigError("give both lam and mu, or cp and cs")
                m = ElasticMedium(p["rho"], p["lam"], p["mu"])
            else:
                m = ElasticMedium.from_speeds(p["cp"], p["cs"], p["rho"])
        except DomainError as exc:
            raise ConfigError(f"invalid medium: {exc}") from None
        return m


@dataclass
class ExperimentResult:
    kind: str
    files: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    notes: list = field(default_factory=list)
    data: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.failures


def _convert(kind, raw, key):
    try:
        if kind is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(raw)
            return low in ("true", "yes", "1")
        if kind in (int, float, str):
            return kind(raw.strip())
        items = [s.strip() for s in raw.split(",") if s.strip()]
        conv = {"intlist": int, "floatlist": float, "strlist": str}[kind]
        return [conv(s) for s in items]
    except ValueError:
        raise ConfigError(f"cannot parse {key} = {raw!r}") from None


def parse_config(text, kind=None, source=""):
    """Parse line-oriented ``key = value`` text into a validated config.

    ``experiment = <kind>`` inside the text selects the schema unless ``kind``
    is given.  Unknown keys are rejected.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    raw = dict(cp["run"])
    given = raw.pop("experiment", None)
    kind = kind or given
    if kind is None:
        raise ConfigError("config does not name an experiment")
    kind = ALIASES.get(kind, kind)
    if given is not None and ALIASES.get(given, given) != kind:
        raise ConfigError(f"config is for {given!r} but {kind!r} was requested")
    if kind not in SCHEMAS:
        raise ConfigError(f"unknown experiment {kind!r}")
    schema = SCHEMAS[kind]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown keys for {kind}: {', '.join(unknown)}")
    params = {}
    for key, (typ, default) in schema.items():
        if key in raw:
            params[key] = _convert(typ, raw[key], key)
        elif default is None or typ in (int, float, str, bool):
            params[key] = default
        else:
            params[key] = _convert(typ, default, key)
    cfg = ExperimentConfig(kind, params, source)
    validate(cfg)
    return cfg


def load_config(path, kind=None):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, kind, source=str(path))


def validate(cfg):
    """Reject nonpositive physical parameters and inconsistent settings before compute."""
    p = cfg.params
    positive = ("omega", "frequency", "tol", "cells", "cells_per_unit", "px", "py", "parts",
                "n_k", "spacing", "k_max_factor", "radius", "snapshot_iter")
    for key in positive:
        if key in p and not p[key] > 0:
            raise ConfigError(f"{key} must be positive")
    for key in ("max_iters", "gmres_max_iters", "ras_iters", "restart", "workers"):
        if key in p and p[key] < 0:
            raise ConfigError(f"{key} must be nonnegative")
    if "layers" in p and (not p["layers"] or min(p["layers"]) < 0):
        raise ConfigError("layers must be nonnegative integers")
    if "kinds" in p:
        bad = [k for k in p["kinds"] if k not in dd.KINDS]
        if bad:
            raise ConfigError(f"unknown preconditioner kinds {bad}")
    if p.get("solver", "both") not in ("stationary", "gmres", "both"):
        raise ConfigError("solver must be stationary, gmres or both")
    if p.get("gmres_stop", "error") not in ("error", "residual"):
        raise ConfigError("gmres_stop must be error or residual")
    if p.get("pou", "restricted") not in ("restricted", "multiplicity"):
        raise ConfigError("pou must be restricted or multiplicity")
    if p.get("interface_weighting", "single") not in dd.INTERFACE_WEIGHTINGS:
        raise ConfigError(f"interface_weighting must be one of {dd.INTERFACE_WEIGHTINGS}")
    if cfg.kind == "transmission":
        for side in ("inner", "outer"):
            try:
                ElasticMedium(p[f"{side}_rho"], p[f"{side}_lam"], p[f"{side}_mu"])
            except DomainError as exc:
                raise ConfigError(f"invalid {side} medium: {exc}") from None
    else:
        cfg.medium()
    if cfg.kind == "symbol-scan":
        bad = [v for v in p["variants"] if v not in symbols.VARIANTS or v == "custom"]
        if bad:
            raise ConfigError(f"unknown variants {bad}")
        if not p["k_max"] > p["k_min"] or p["k_min"] < 0:
            raise ConfigError("need 0 <= k_min < k_max")
        if any(d < 0 for d in p["deltas"]):
            raise ConfigError("deltas must be nonnegative")
    if cfg.kind == "delta-star":
        if any(o <= 0 for o in p["omegas"]) or any(f <= 0 for f in p["factors"]):
            raise ConfigError("omegas and factors must be positive")
    return cfg


def _fmt(x):
    return format(float(x), ".17g")


def _tag(x):
    return format(float(x), "g").replace(".", "p").replace("-", "m")


def write_rows(path, header, rows):
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return Path(path)


# -- analysis experiments ----------------------------------------------------

def run_symbol_scan(cfg, out):
    p = cfg.params
    out = Path(out)
    m = cfg.medium()
    grid = np.linspace(p["k_min"], p["k_max"], p["n_k"])
    res = ExperimentResult(cfg.kind)
    for variant in p["variants"]:
        for delta in p["deltas"]:
            table = symbols.scan_rho(variant, grid, p["omega"], m, delta)
            path, side = symbols.write_scan_csv(table, out / f"scan_{variant}_delta{_tag(delta)}.csv")
            res.files += [path, side]
            rho = table.rho()
            res.summary.append({"variant": variant, "delta": delta, "n": len(rho),
                                "skipped": len(table.skipped), "rho_min": float(rho.min()),
                                "rho_max": float(rho.max())})
    return res


def run_delta_star(cfg, out):
    p = cfg.params
    m = cfg.medium()
    res = ExperimentResult(cfg.kind)
    alpha = symbols.critical_alpha(m)
    rows = []
    for omega in p["omegas"]:
        ds = symbols.delta_star(m, omega)
        k_max = p["k_max_factor"] * omega / m.cs
        for f in p["factors"]:
            k_at, rmax = symbols.max_rho_above_ks(m, omega, f * ds, k_max=k_max, spacing=p["spacing"] * omega)
            rows.append([omega, alpha, ds, ds * omega, f, f * ds, k_at, rmax])
            res.summary.append({"omega": omega, "alpha": alpha, "delta_star": ds, "factor": f,
                                "max_rho": rmax, "k_at_max": k_at})
    res.files.append(write_rows(Path(out) / "delta_star.csv",
                                ["omega", "alpha", "delta_star", "delta_star_times_omega", "factor",
                                 "delta", "k_at_max", "max_rho"], rows))
    return res


# -- finite-element experiments ----------------------------------------------

def interface_cut(mesh, values, x0=0.0, tol=1e-9):
    """Vertex ``y`` coordinates on the vertical line ``x = x0`` and the nodal magnitudes there."""
    v = mesh.vertices
    sel = np.nonzero(np.abs(v[:, 0] - x0) < tol)[0]
    order = np.argsort(v[sel, 1])
    sel = sel[order]
    mag = np.hypot(np.abs(values[2 * sel]), np.abs(values[2 * sel + 1]))
    return v[sel, 1], mag


def count_sign_changes(mag):
    """Sign changes of ``|e| - mean |e|`` along a cut; two per bump of ``|sin(k y)|``."""
    s = np.sign(np.asarray(mag) - np.mean(mag))
    s = s[s != 0]
    return int(np.sum(s[1:] != s[:-1]))


def _solve_reference(system):
    return solvers.factorize(system.matrix).solve(system.rhs)


def _dd_runs(res, out, prefix, mesh, disc, system, reference, parts, p, kinds, solver_mode,
             stationary_iters, snapshot_iter=None):
    """Stationary and GMRES runs for every (layers, kind); fills ``res``."""
    out = Path(out)
    restart = p["restart"] or None
    for l in p["layers"]:
        dec = dd.grow_overlap(mesh, parts, l)
        dd.build_pou(dec, p["pou"], mesh)
        dec_path = out / f"{prefix}_l{l}_decomposition.json"
        dec.dump(dec_path)
        res.files.append(dec_path)
        for kind in kinds:
            t0 = time.perf_counter()
            prec = dd.SchwarzPreconditioner(dec, kind, system.matrix, disc, workers=p["workers"],
                                            interface_weighting=p["interface_weighting"])
            setup = time.perf_counter() - t0
            if solver_mode in ("stationary", "both"):
                iters = stationary_iters(kind)
                snaps = (snapshot_iter,) if snapshot_iter else ()
                t0 = time.perf_counter()
                h = dd.stationary_iterate(system, prec, max_iters=iters, tol=p["tol"], reference=reference,
                                          snapshots=snaps, label=f"{kind}-stationary-l{l}")
                elapsed = time.perf_counter() - t0
                path = h.to_csv(out / f"{prefix}_l{l}_{kind.lower()}_stationary.csv")
                res.files.append(path)
                row = {"layers": l, "kind": kind, "mode": "stationary", "status": h.status,
                       "iterations": h.iterations, "final_rel_error": h.final()}
                res.timings[f"{prefix}_l{l}_{kind.lower()}_stationary"] = setup + elapsed
                e = h.metadata["snapshots"].get(snapshot_iter)
                if e is not None:
                    snap = out / f"{prefix}_l{l}_{kind.lower()}_error_iter{snapshot_iter}.csv"
                    mag = np.hypot(np.abs(e[0::2]), np.abs(e[1::2]))
                    write_rows(snap, ["x", "y", "abs_e"],
                               [(x, y, a) for (x, y), a in zip(mesh.vertices, mag)])
                    res.files.append(snap)
                    _, cut = interface_cut(mesh, e, x0=0.0)
                    if cut.size:
                        row["interface_sign_changes"] = count_sign_changes(cut)
                res.summary.append(row)
                res.data[(l, kind, "stationary")] = h
            if solver_mode in ("gmres", "both"):
                stop = p["gmres_stop"]
                cfg = solvers.KrylovConfig(p["tol"], p["gmres_max_iters"], restart)
                t0 = time.perf_counter()
                _, h = solvers.gmres(system.matrix, prec, system.rhs, cfg, exact=reference,
                                     norm=system.l2_norm, stop_on=stop)
                elapsed = time.perf_counter() - t0
                h.label = f"{kind}-gmres-l{l}"
                path = h.to_csv(out / f"{prefix}_l{l}_{kind.lower()}_gmres.csv")
                res.files.append(path)
                res.summary.append({"layers": l, "kind": kind, "mode": "gmres", "status": h.status,
                                    "iterations": h.iterations, "final_rel_error": h.final()})
                res.timings[f"{prefix}_l{l}_{kind.lower()}_gmres"] = setup + elapsed
                res.data[(l, kind, "gmres")] = h


def run_two_subdomain(cfg, out):
    """Waveguide ``(-1, 1) x (0, 1)`` split at ``x = 0``; ORAS stationary by default."""
    p = cfg.params
    m = cfg.medium()
    n = p["cells_per_unit"]
    mesh = meshmod.build_rect_mesh(2 * n, n, (-1.0, 1.0), (0.0, 1.0))
    wave = fem.PlaneWave(p["omega"], m)
    bcs = {"top": fem.BoundaryCondition("dirichlet", wave), "bottom": fem.BoundaryCondition("dirichlet", wave),
           "left": fem.BoundaryCondition("absorbing", wave), "right": fem.BoundaryCondition("absorbing", wave)}
    disc = fem.NavierDiscretization(mesh, m, p["omega"], bcs, body_force=wave.body_force, exact=wave)
    system = disc.assemble()
    reference = _solve_reference(system)
    parts = dd.partition_elements(mesh, dd.GridPartition(2, 1))
    res = ExperimentResult(cfg.kind)
    res.data["mesh"] = mesh
    _dd_runs(res, out, "two", mesh, disc, system, reference, parts, p, p["kinds"], p["solver"],
             lambda kind: p["max_iters"], snapshot_iter=p["snapshot_iter"])
    for row in res.summary:
        if row["layers"] in p["expect_converged"] and row["mode"] == "stationary" and row["status"] != "converged":
            res.failures.append(f"{row['kind']} stationary with {row['layers']} layers did not converge")
    return res


def run_grid_experiment(cfg, out):
    """Unit square with absorbing boundaries split into a ``px x py`` grid."""
    p = cfg.params
    m = cfg.medium()
    mesh = meshmod.build_rect_mesh(p["cells"], p["cells"])
    wave = fem.PlaneWave(p["omega"], m)
    bcs = {t: fem.BoundaryCondition("absorbing", wave) for t in mesh.tags()}
    disc = fem.NavierDiscretization(mesh, m, p["omega"], bcs, body_force=wave.body_force, exact=wave)
    system = disc.assemble()
    reference = _solve_reference(system)
    parts = dd.partition_elements(mesh, dd.GridPartition(p["px"], p["py"]))
    res = ExperimentResult(cfg.kind)
    _dd_runs(res, out, "grid", mesh, disc, system, reference, parts, p, p["kinds"], p["solver"],
             lambda kind: p["ras_iters"] if kind == "RAS" else p["max_iters"])
    _check_oras(res, p)
    return res


def inclusion_media(p):
    inner = ElasticMedium(p["inner_rho"], p["inner_lam"], p["inner_mu"])
    outer = ElasticMedium(p["outer_rho"], p["outer_lam"], p["outer_mu"])
    return inner, outer


def young_poisson(mu, lam):
    """``(E, nu)`` from Lame parameters."""
    nu = lam / (2 * (lam + mu))
    return 2 * mu * (1 + nu), nu


def run_transmission(cfg, out):
    """Square ``(-1, 1)^2`` with a circular inclusion, absorbing outer boundary."""
    p = cfg.params
    inner, outer = inclusion_media(p)
    omega = 2 * math.pi * p["frequency"]
    mesh = meshmod.build_rect_mesh(p["cells"], p["cells"], (-1.0, 1.0), (-1.0, 1.0))
    meshmod.assign_regions_by_radius(mesh, p["radius"], inner=0, outer=1)
    wave = fem.PlaneWave(omega, outer)
    bcs = {t: fem.BoundaryCondition("absorbing", wave) for t in mesh.tags()}
    disc = fem.NavierDiscretization(mesh, {0: inner, 1: outer}, omega, bcs)
    system = disc.assemble()
    reference = _solve_reference(system)
    parts = dd.partition_elements(mesh, dd.CoordinateBisection(p["parts"]))
    res = ExperimentResult(cfg.kind)
    res.notes.append("geometry: square (-1,1)^2 with an elementwise circular inclusion instead of a meshed disk")
    for side, med in (("inner", inner), ("outer", outer)):
        E, nu = young_poisson(med.mu, med.lam)
        res.notes.append(f"{side}: cp={med.cp:.6g} cs={med.cs:.6g} E={E:.3g} nu={nu:.3g} "
                         f"(listed E={p[side + '_E']:.3g} nu={p[side + '_nu']:.3g})")
    _dd_runs(res, out, "transmission", mesh, disc, system, reference, parts, p, p["kinds"], p["solver"],
             lambda kind: p["ras_iters"] if kind == "RAS" else p["max_iters"])
    _check_oras(res, p)
    return res


def _check_oras(res, p):
    if not p["expect_oras_converge"]:
        return
    for row in res.summary:
        if row["kind"] == "ORAS" and row["mode"] == "stationary" and row["status"] != "converged":
            res.failures.append(f"ORAS stationary with {row['layers']} layers ended as {row['status']}")


RUNNERS = {
    "symbol-scan": run_symbol_scan,
    "delta-star": run_delta_star,
    "two-subdomain": run_two_subdomain,
    "grid-4x4": run_grid_experiment,
    "transmission": run_transmission,
}


def _version():
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "unknown"


def _jsonable(v):
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    if isinstance(v, Path):
        return str(v)
    return v


def run_experiment(cfg, out):
    """Run ``cfg`` into directory ``out``; writes ``summary.csv`` and ``manifest.json``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    res = RUNNERS[cfg.kind](cfg, out)
    elapsed = time.perf_counter() - t0
    if res.summary:
        keys = list(dict.fromkeys(k for row in res.summary for k in row))
        res.files.append(write_rows(out / "summary.csv", keys,
                                    [[row.get(k, "") for k in keys] for row in res.summary]))
    manifest = {
        "experiment": cfg.kind,
        "config": {k: _jsonable(v) for k, v in cfg.params.items()},
        "config_source": cfg.source,
        "code_version": _version(),
        "python": platform.python_version(),
        "numpy": np.__version__,
        "gmres_preconditioning": "right",
        "timings_s": {"total": elapsed, **res.timings},
        "files": sorted(str(Path(f).name) for f in res.files) + ["manifest.json"],
        "notes": res.notes,
        "failures": res.failures,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=_jsonable))
    res.files.append(out / "manifest.json")
    return res


__all__ = ["ExperimentConfig", "ExperimentResult", "parse_config", "load_config", "run_experiment",
           "run_symbol_scan", "run_delta_star", "run_two_subdomain", "run_grid_experiment",
           "run_transmission", "count_sign_changes", "interface_cut", "ElastoSchwarzError"]
