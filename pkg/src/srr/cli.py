"""Command line front end: seeded, config-driven experiment runs.

    srr <command> --config cfg.json [--seed N] [--out DIR] [--threads K]

Commands: simulate, bench-srf, recover-grid, recover-an, certify, prop2.
Configs are flat JSON objects carrying `experiment`, `schema_version`, and the
experiment's parameters; unknown keys are rejected so typos fail loudly.
Results land in `--out` as CSV tables plus a `.meta.json` sidecar per table
(config echo, config hash, seed, library version, summary statistics).

Every command is a deterministic function of (config, seed): trials get
independent sub-seeds derived from the run seed and the trial index, so the
row content does not depend on `--threads`. Only sidecar timestamps vary
between re-runs.

Exit codes: 0 ok, 2 bad config or usage, 3 numerical failure, 4 a size or
model-capacity ceiling was exceeded.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import math
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from srr import __version__ as _VERSION
from srr.certificate import build_certificate, build_interp_system, dbar_bounds, validate_certificate
from srr.errors import CapacityError, ConfigError, NumericalError
from srr.gridsolve import SolverOptions, debias, extract_targets, resolution_error, solve_bp, solve_bpdn
from srr.ops import GridSpec, TFShift, eval_trigpoly_grid
from srr.rng import derive_seed
from srr.scene import (
    NoiseSpec,
    TargetScene,
    add_noise,
    draw_probing_signal,
    draw_scene,
    matched_filter,
    model_error_decay_study,
    synthesize_periodic,
    synthesize_truncated,
)
from srr.sdp import SdpOptions, build_sdp, build_sdp_noisy, dual_poly, locate_shifts, solve_sdp

__all__ = [
    "ExperimentConfig",
    "ResultTable",
    "SCHEMA_VERSION",
    "load_config",
    "main",
]

SCHEMA_VERSION = 1

# Sub-seed stream tags. Values are arbitrary but frozen: changing them changes
# every seeded output.
_T_SCENE, _T_PROBE, _T_NOISE, _T_TRIAL = 101, 102, 103, 104


# ---------------------------------------------------------------- field checks


def _chk_int(v, lo=None, hi=None, even=False, odd=False):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise ConfigError(f"{v} is below the minimum {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{v} is above the maximum {hi}")
    if even and v % 2:
        raise ConfigError(f"{v} must be even")
    if odd and v % 2 == 0:
        raise ConfigError(f"{v} must be odd")
    return v


def _chk_num(v, lo=None, hi=None):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"expected a number, got {v!r}")
    v = float(v)
    if lo is not None and v < lo:
        raise ConfigError(f"{v} is below the minimum {lo}")
    if hi is not None and v > hi:
        raise ConfigError(f"{v} is above the maximum {hi}")
    return v


def _chk_choice(v, options):
    if v not in options:
        raise ConfigError(f"expected one of {sorted(options)}, got {v!r}")
    return v


def _chk_bool(v):
    if not isinstance(v, bool):
        raise ConfigError(f"expected true/false, got {v!r}")
    return v


def _chk_list(v, item_check):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"expected a nonempty list, got {v!r}")
    return [item_check(item) for item in v]


def _chk_pair(v):
    if not isinstance(v, list) or len(v) != 2:
        raise ConfigError(f"expected [tau_max, nu_max], got {v!r}")
    return [_chk_num(item, lo=1e-12, hi=1.0) for item in v]


def _chk_targets(v):
    # explicit support: list of [tau, nu, b_re, b_im]
    if not isinstance(v, list) or not v:
        raise ConfigError(f"expected a nonempty list of [tau, nu, b_re, b_im], got {v!r}")
    out = []
    for item in v:
        if not isinstance(item, list) or len(item) != 4:
            raise ConfigError(f"each target must be [tau, nu, b_re, b_im], got {item!r}")
        tau, nu, br, bi = (_chk_num(c) for c in item)
        if not (0 <= tau < 1 and 0 <= nu < 1):
            raise ConfigError(f"target shift ({tau}, {nu}) must lie in [0, 1)^2")
        out.append([tau, nu, br, bi])
    return out


def _opt(check):
    return lambda v: None if v is None else check(v)


_B_DISTS = {"unit_disc", "random_sign_real", "unit_modulus"}
_X_DISTS = {"gaussian", "unit_modulus"}

# field name -> (validator, default); default None with no _opt wrapper marks a
# required field.
_SOLVER_FIELDS = {
    "max_iter": (lambda v: _chk_int(v, lo=1), 20_000),
    "tol_feas": (lambda v: _chk_num(v, lo=1e-15), 1e-7),
    "tol_obj": (lambda v: _chk_num(v, lo=1e-15), 1e-9),
    "step_ratio": (lambda v: _chk_num(v, lo=1e-3, hi=1e3), 1.0),
}

_SCHEMAS = {
    "simulate": {
        "n_half": (lambda v: _chk_int(v, lo=1), None),
        "n_targets": (lambda v: _chk_int(v, lo=1), None),
        "region": (_chk_pair, [1.0, 1.0]),
        "min_sep": (lambda v: _chk_num(v, lo=0.0, hi=0.5), 0.0),
        "b_dist": (lambda v: _chk_choice(v, _B_DISTS), "unit_disc"),
        "x_dist": (lambda v: _chk_choice(v, _X_DISTS), "gaussian"),
        "model": (lambda v: _chk_choice(v, {"periodic", "truncated"}), "periodic"),
        "snr_db": (_opt(_chk_num), None),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
    },
    "bench-srf": {
        "l_samples": (lambda v: _chk_int(v, lo=3, odd=True), None),
        "n_targets": (lambda v: _chk_int(v, lo=1), 10),
        "srf_list": (lambda v: _chk_list(v, lambda s: _chk_int(s, lo=1, hi=64)), [1, 2, 5, 10, 20]),
        "snr_db_list": (lambda v: _chk_list(v, _opt(_chk_num)), [None]),
        "n_trials": (lambda v: _chk_int(v, lo=1), 100),
        "region_scale": (lambda v: _chk_num(v, lo=1e-6), 2.0),
        "b_dist": (lambda v: _chk_choice(v, _B_DISTS), "unit_disc"),
        "x_dist": (lambda v: _chk_choice(v, _X_DISTS), "gaussian"),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
        **_SOLVER_FIELDS,
    },
    "recover-grid": {
        "l_samples": (lambda v: _chk_int(v, lo=3, odd=True), None),
        "k_grid": (lambda v: _chk_int(v, lo=1), None),
        "n_targets": (lambda v: _chk_int(v, lo=1), None),
        "min_sep": (lambda v: _chk_num(v, lo=0.0, hi=0.5), 0.0),
        "b_dist": (lambda v: _chk_choice(v, _B_DISTS), "random_sign_real"),
        "x_dist": (lambda v: _chk_choice(v, _X_DISTS), "gaussian"),
        "snr_db": (_opt(_chk_num), None),
        "delta": (_opt(lambda v: _chk_num(v, lo=0.0)), None),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
        **_SOLVER_FIELDS,
    },
    "recover-an": {
        "n_half": (lambda v: _chk_int(v, lo=1), None),
        "targets": (_opt(_chk_targets), None),
        "n_targets": (_opt(lambda v: _chk_int(v, lo=1)), None),
        "min_sep": (lambda v: _chk_num(v, lo=0.0, hi=0.5), 0.0),
        "b_dist": (lambda v: _chk_choice(v, _B_DISTS), "unit_modulus"),
        "x_dist": (lambda v: _chk_choice(v, _X_DISTS), "unit_modulus"),
        "snr_db": (_opt(_chk_num), None),
        "delta": (_opt(lambda v: _chk_num(v, lo=0.0)), None),
        "rho": (lambda v: _chk_num(v, lo=1e-12), 1.0),
        "max_iter": (lambda v: _chk_int(v, lo=1), 20_000),
        "tol": (lambda v: _chk_num(v, lo=1e-15), 1e-6),
        "grid_size": (_opt(lambda v: _chk_int(v, lo=1)), None),
        "locate_tol": (lambda v: _chk_num(v, lo=1e-12, hi=1.0), 1e-3),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
    },
    "certify": {
        "n_half": (lambda v: _chk_int(v, lo=2, even=True), None),
        "s_list": (lambda v: _chk_list(v, lambda s: _chk_int(s, lo=1)), [1, 2, 3]),
        "n_trials": (lambda v: _chk_int(v, lo=1), 50),
        "sep_factor": (lambda v: _chk_num(v, lo=0.0), 2.38),
        "deterministic": (_chk_bool, False),
        "x_dist": (lambda v: _chk_choice(v, _X_DISTS), "gaussian"),
        "grid_size": (_opt(lambda v: _chk_int(v, lo=1)), None),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
    },
    "prop2": {
        "l_list": (lambda v: _chk_list(v, lambda s: _chk_int(s, lo=3, odd=True)), [63, 127, 255, 511]),
        "n_trials": (lambda v: _chk_int(v, lo=2), 50),
        "n_targets": (lambda v: _chk_int(v, lo=1), 5),
        "seed": (lambda v: _chk_int(v, lo=0), 0),
    },
}


# --------------------------------------------------------------------- config


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment request: name plus canonical parameter dict.

    `params` always carries every schema field (defaults filled in), so a
    config round-trips through to_dict/from_dict unchanged.
    """

    experiment: str
    params: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        if not isinstance(raw, dict):
            raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
        raw = dict(raw)
        version = raw.pop("schema_version", None)
        if version != SCHEMA_VERSION:
            raise ConfigError(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
        experiment = raw.pop("experiment", None)
        if experiment not in _SCHEMAS:
            raise ConfigError(f"experiment must be one of {sorted(_SCHEMAS)}, got {experiment!r}")
        schema = _SCHEMAS[experiment]
        unknown = set(raw) - set(schema)
        if unknown:
            raise ConfigError(f"unknown config fields for {experiment}: {sorted(unknown)}")
        params = {}
        for name, (check, default) in schema.items():
            if name in raw:
                try:
                    params[name] = check(raw[name])
                except ConfigError as exc:
                    raise ConfigError(f"field {name!r}: {exc}") from None
            elif default is None and not _is_optional(check):
                raise ConfigError(f"missing required field {name!r} for {experiment}")
            else:
                params[name] = default
        return cls(experiment=experiment, params=params)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "experiment": self.experiment, **self.params}

    def digest(self) -> str:
        """sha256 of the canonical JSON form; timestamps never enter it."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def _is_optional(check) -> bool:
    # _opt-wrapped validators accept None; probe rather than tag.
    try:
        return check(None) is None
    except (ConfigError, TypeError):
        return False


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path!r} is not valid JSON: {exc}") from None
    return ExperimentConfig.from_dict(raw)


# -------------------------------------------------------------------- results


@dataclass
class ResultTable:
    """A named-column table of floats plus a free-form summary for the sidecar."""

    columns: list
    rows: list
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(f"row width {len(row)} != {len(self.columns)} columns")

    def to_csv(self, path: str) -> None:
        lines = [",".join(self.columns)]
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @classmethod
    def from_csv(cls, path: str) -> "ResultTable":
        with open(path) as fh:
            lines = fh.read().splitlines()
        if not lines:
            raise ValueError(f"{path} is empty")
        columns = lines[0].split(",")
        rows = [[float(v) for v in line.split(",")] for line in lines[1:]]
        return cls(columns=columns, rows=rows)


def _fmt(v) -> str:
    # repr of a float is the shortest string that parses back bit-identically
    return repr(float(v))


def _write_outputs(tables, cfg: ExperimentConfig, seed: int, out_dir: str) -> list:
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for name, table in tables:
        csv_path = os.path.join(out_dir, f"{name}.csv")
        table.to_csv(csv_path)
        sidecar = {
            "experiment": cfg.experiment,
            "schema_version": SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "config_sha256": cfg.digest(),
            "seed": seed,
            "library_version": _VERSION,
            "created_utc": datetime.datetime.now(datetime.timezone.utc).isoformat(),
            "columns": table.columns,
            "n_rows": len(table.rows),
            "summary": table.meta,
        }
        with open(os.path.join(out_dir, f"{name}.meta.json"), "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
        paths.append(csv_path)
    return paths


def _run_trials(fn, n_trials: int, threads: int) -> list:
    """fn(t) for t = 0..n-1; output order is by trial index regardless of pool."""
    if threads <= 1:
        return [fn(t) for t in range(n_trials)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(n_trials)))


def _mean_sem(values) -> tuple:
    a = np.asarray([v for v in values if not math.isnan(v)], dtype=float)
    if a.size == 0:
        return math.nan, math.nan
    sem = float(a.std(ddof=1) / math.sqrt(a.size)) if a.size > 1 else 0.0
    return float(a.mean()), sem


def _scene_rows(scene: TargetScene) -> list:
    return [[s.tau, s.nu, b.real, b.imag] for s, b in scene.targets]


def _noise_delta_sq(y_clean, snr_db: float) -> float:
    # the noise draw is renormalized to the requested SNR, so ||n||^2 is exact
    return float(np.vdot(y_clean.samples, y_clean.samples).real / 10.0 ** (snr_db / 10.0))


# ------------------------------------------------------------------- commands


def cmd_simulate(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    scene = draw_scene(
        p["n_targets"],
        region=tuple(p["region"]),
        min_sep=p["min_sep"],
        b_dist=p["b_dist"],
        seed=derive_seed(seed, _T_SCENE),
    )
    x = draw_probing_signal(p["n_half"], dist=p["x_dist"], seed=derive_seed(seed, _T_PROBE))
    synth = synthesize_periodic if p["model"] == "periodic" else synthesize_truncated
    y = synth(scene, x)
    if p["snr_db"] is not None:
        y = add_noise(y, NoiseSpec(p["snr_db"], seed=derive_seed(seed, _T_NOISE)))
    ell = np.arange(-p["n_half"], p["n_half"] + 1)
    scene_tab = ResultTable(["tau", "nu", "b_re", "b_im"], _scene_rows(scene))
    probe_tab = ResultTable(
        ["l", "x_re", "x_im"],
        [[int(i), v.real, v.imag] for i, v in zip(ell, x.samples)],
    )
    sample_tab = ResultTable(
        ["p", "y_re", "y_im"],
        [[int(i), v.real, v.imag] for i, v in zip(ell, y.samples)],
        meta={"model": p["model"], "snr_db": p["snr_db"], "n_targets": scene.n_targets},
    )
    return [("scene", scene_tab), ("probe", probe_tab), ("samples", sample_tab)]


def cmd_prop2(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    study = model_error_decay_study(p["l_list"], p["n_trials"], n_targets=p["n_targets"], seed=seed)
    rows = [[float(L), err] for L, err in zip(study.lengths, study.mean_rel_errors)]
    table = ResultTable(
        ["l_samples", "mean_rel_error"],
        rows,
        meta={"slope": study.slope, "n_trials": p["n_trials"]},
    )
    return [("decay", table)]


def cmd_certify(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    n_half = p["n_half"]
    min_sep = p["sep_factor"] / n_half
    columns = [
        "n_targets", "trial", "built", "passed",
        "interp_max_err", "stat_max_err", "far_max", "far_bound", "grid_max",
        "interp_pass", "stat_pass", "far_pass", "near_pass",
        "dbar_gap_inf", "dbar_norm", "dbar_inv_norm",
    ]

    def one(s: int, t: int) -> list:
        scene = draw_scene(
            s, min_sep=min_sep, b_dist="random_sign_real",
            seed=derive_seed(seed, _T_SCENE, s, t),
        )
        u = np.sign([b.real for _, b in scene.targets])
        x = None
        if not p["deterministic"]:
            x = draw_probing_signal(n_half, dist=p["x_dist"], seed=derive_seed(seed, _T_PROBE, s, t))
        try:
            cert = build_certificate(scene.shifts(), u, x=x, n_half=n_half)
        except NumericalError:
            # near-singular interpolation system: report the trial as failed
            return [s, t, 0.0, 0.0] + [math.nan] * 5 + [0.0] * 4 + [math.nan] * 3
        rep = validate_certificate(cert, grid_size=p["grid_size"])
        bounds = dbar_bounds(build_interp_system(scene.shifts(), u, x=x, n_half=n_half))
        return [
            s, t, 1.0, float(rep.passed),
            rep.interp_max_err, rep.stat_max_err, rep.far_max, rep.far_bound, rep.grid_max,
            float(rep.interp_pass), float(rep.stat_pass), float(rep.far_pass), float(rep.near_pass),
            bounds.gap_inf, bounds.norm_2, bounds.inv_norm_2,
        ]

    rows = []
    rates = {}
    for s in p["s_list"]:
        s_rows = _run_trials(lambda t: one(s, t), p["n_trials"], threads)
        rows.extend(s_rows)
        rates[str(s)] = float(np.mean([r[3] for r in s_rows]))
    table = ResultTable(columns, rows, meta={
        "pass_rate_by_n_targets": rates,
        "pass_rate_overall": float(np.mean([r[3] for r in rows])),
        "deterministic": p["deterministic"],
        "min_sep": min_sep,
    })
    return [("certify", table)]



def cmd_recover_grid(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    L = p["l_samples"]
    n_half = (L - 1) // 2
    scene = draw_scene(
        p["n_targets"], min_sep=p["min_sep"], b_dist=p["b_dist"],
        seed=derive_seed(seed, _T_SCENE),
    )
    x = draw_probing_signal(n_half, dist=p["x_dist"], seed=derive_seed(seed, _T_PROBE))
    y_clean = synthesize_periodic(scene, x)
    y = y_clean
    if p["snr_db"] is not None:
        y = add_noise(y_clean, NoiseSpec(p["snr_db"], seed=derive_seed(seed, _T_NOISE)))
    grid = GridSpec(p["k_grid"])
    opts = SolverOptions(
        max_iter=p["max_iter"], tol_feas=p["tol_feas"], tol_obj=p["tol_obj"],
        step_ratio=p["step_ratio"],
    )
    delta = p["delta"]
    if delta is None and p["snr_db"] is not None:
        delta = _noise_delta_sq(y_clean, p["snr_db"])
    if delta is None:
        est = solve_bp(y, x, grid, opts)
    else:
        est = solve_bpdn(y, x, grid, delta=delta, opts=opts)
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            found = extract_targets(est, mode="top_s", n_targets=p["n_targets"])
    except ValueError as exc:
        raise NumericalError(f"nothing to extract from the solver iterate: {exc}") from None
    deb = debias(y, x, found.shifts())
    rows = [
        [s.tau, s.nu, b.real, b.imag]
        for s, b in zip(found.shifts(), deb.coeffs)
    ]
    table = ResultTable(["tau", "nu", "b_re", "b_im"], rows, meta={
        "converged": est.converged,
        "iterations": est.iterations,
        "residual": est.residual,
        "objective": est.objective,
        "debias_residual": deb.residual,
        "resolution_error": resolution_error(scene, found, n_half),
        "truth": _scene_rows(scene),
    })
    return [("targets", table)]


def cmd_recover_an(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    n_half = p["n_half"]
    if p["targets"] is not None:
        try:
            scene = TargetScene([(TFShift(t, v), complex(br, bi)) for t, v, br, bi in p["targets"]])
        except ValueError as exc:
            raise ConfigError(f"bad explicit targets: {exc}") from None
    elif p["n_targets"] is not None:
        scene = draw_scene(
            p["n_targets"], min_sep=p["min_sep"], b_dist=p["b_dist"],
            seed=derive_seed(seed, _T_SCENE),
        )
    else:
        raise ConfigError("recover-an needs either 'targets' or 'n_targets'")
    x = draw_probing_signal(n_half, dist=p["x_dist"], seed=derive_seed(seed, _T_PROBE))
    y_clean = synthesize_periodic(scene, x)
    y = y_clean
    if p["snr_db"] is not None:
        y = add_noise(y_clean, NoiseSpec(p["snr_db"], seed=derive_seed(seed, _T_NOISE)))
    delta = p["delta"]
    if delta is None and p["snr_db"] is not None:
        delta = math.sqrt(_noise_delta_sq(y_clean, p["snr_db"]))
    prob = build_sdp(y, x) if delta is None else build_sdp_noisy(y, x, delta)
    sol = solve_sdp(prob, SdpOptions(rho=p["rho"], max_iter=p["max_iter"], tol=p["tol"]))
    if not sol.converged:
        raise NumericalError(
            f"dual solver stopped at {sol.iterations} iterations with residuals "
            f"({sol.primal_residual:.2e}, {sol.dual_residual:.2e}) above tol {p['tol']:g}"
        )
    dp = dual_poly(sol, x)
    grid_size = p["grid_size"] or 16 * (2 * n_half + 1)
    if grid_size < 8 * (2 * n_half + 1):
        raise ConfigError(f"grid_size must be >= {8 * (2 * n_half + 1)} for n_half={n_half}")
    vals = np.abs(eval_trigpoly_grid(dp.poly, grid_size))
    qgrid_rows = [
        [i / grid_size, j / grid_size, vals[i, j]]
        for i in range(grid_size)
        for j in range(grid_size)
    ]
    found = locate_shifts(dp, tol=p["locate_tol"], grid_size=grid_size)
    shift_rows = []
    if found.n_targets:
        try:
            deb = debias(y, x, found.shifts())
            coeffs = deb.coeffs
        except NumericalError:
            coeffs = [complex(math.nan, math.nan)] * found.n_targets
        for (s, q), b in zip(found.targets, coeffs):
            shift_rows.append([s.tau, s.nu, q.real, q.imag, b.real, b.imag])
    meta = {
        "converged": sol.converged,
        "iterations": sol.iterations,
        "objective": sol.objective,
        "eig_min_bordered": sol.eig_min_bordered,
        "max_trace_dev": sol.max_trace_dev,
        "sup_abs_q_grid": float(vals.max()),
        "n_located": found.n_targets,
        "truth": _scene_rows(scene),
    }
    return [
        ("qgrid", ResultTable(["tau", "nu", "q_abs"], qgrid_rows)),
        ("shifts", ResultTable(["tau", "nu", "q_re", "q_im", "b_re", "b_im"], shift_rows, meta=meta)),
    ]


def _snap_to_grid(found: TargetScene, grid: GridSpec) -> TargetScene:
    """Round each estimate to its nearest grid cell, merging collisions."""
    k = grid.k_grid
    cells = {}
    for s, b in found.targets:
        key = (round(s.tau * k) % k, round(s.nu * k) % k)
        cells[key] = cells.get(key, 0.0) + b
    return TargetScene([(TFShift(n / k, m / k), b) for (n, m), b in cells.items()])


def cmd_bench_srf(cfg: ExperimentConfig, seed: int, threads: int) -> list:
    p = cfg.params
    L = p["l_samples"]
    n_half = (L - 1) // 2
    n_s = p["n_targets"]
    width = p["region_scale"] / math.sqrt(L)
    if width > 1.0:
        raise ConfigError(f"region_scale {p['region_scale']} exceeds the torus for L={L}")
    opts = SolverOptions(
        max_iter=p["max_iter"], tol_feas=p["tol_feas"], tol_obj=p["tol_obj"],
        step_ratio=p["step_ratio"],
    )

    def solve_one(y, x, grid, delta):
        if delta is None:
            est = solve_bp(y, x, grid, opts)
        else:
            est = solve_bpdn(y, x, grid, delta=delta, opts=opts)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            found = extract_targets(est, mode="top_s", n_targets=n_s)
        return est, found

    def one_trial(srf: int, qi: int, snr_db, t: int) -> dict:
        # scene/probe/noise streams are keyed by (snr, trial) only, so every
        # srf sees the same instances and the curves are paired comparisons
        scene = draw_scene(
            n_s, region=(width, width), b_dist=p["b_dist"],
            seed=derive_seed(seed, _T_SCENE, qi, t),
        )
        x = draw_probing_signal(n_half, dist=p["x_dist"], seed=derive_seed(seed, _T_PROBE, qi, t))
        y_per = synthesize_periodic(scene, x)
        y_tr = synthesize_truncated(scene, x)
        deltas = {"periodic": None, "truncated": None}
        if snr_db is not None:
            deltas["periodic"] = _noise_delta_sq(y_per, snr_db)
            deltas["truncated"] = _noise_delta_sq(y_tr, snr_db)
            y_per = add_noise(y_per, NoiseSpec(snr_db, seed=derive_seed(seed, _T_NOISE, qi, t, 0)))
            y_tr = add_noise(y_tr, NoiseSpec(snr_db, seed=derive_seed(seed, _T_NOISE, qi, t, 1)))
        k = srf * L
        pad = 1.0 / k  # one spill cell so edge targets keep their mass in range
        grid = GridSpec(k, region=(min(1.0, width + pad), min(1.0, width + pad)))
        out = {}
        for tag, y in (("periodic", y_per), ("truncated", y_tr)):
            try:
                est, found = solve_one(y, x, grid, deltas[tag])
                out[tag] = resolution_error(scene, found, n_half)
                out[tag + "_cell"] = resolution_error(scene, _snap_to_grid(found, grid), n_half)
                out[tag + "_conv"] = float(est.converged)
            except (ValueError, NumericalError):
                # e.g. an all-zero iterate with nothing to extract; score the
                # trial as failed rather than aborting the sweep
                out[tag] = math.nan
                out[tag + "_cell"] = math.nan
                out[tag + "_conv"] = 0.0
        out["matched"] = resolution_error(scene, matched_filter(y_per, x, n_s), n_half)
        return out

    columns = [
        "srf", "snr_db", "n_trials",
        "err_periodic_mean", "err_periodic_sem",
        "err_periodic_cell_mean", "err_periodic_cell_sem",
        "err_truncated_mean", "err_truncated_sem",
        "err_truncated_cell_mean", "err_truncated_cell_sem",
        "err_matched_mean", "err_matched_sem",
        "n_converged_periodic", "n_converged_truncated",
    ]
    rows = []
    for srf in p["srf_list"]:
        for qi, snr_db in enumerate(p["snr_db_list"]):
            res = _run_trials(lambda t: one_trial(srf, qi, snr_db, t), p["n_trials"], threads)
            row = [float(srf), math.nan if snr_db is None else snr_db, float(len(res))]
            for key in ("periodic", "periodic_cell", "truncated", "truncated_cell", "matched"):
                row.extend(_mean_sem([r[key] for r in res]))
            row.append(sum(r["periodic_conv"] for r in res))
            row.append(sum(r["truncated_conv"] for r in res))
            rows.append(row)
    table = ResultTable(columns, rows, meta={
        "l_samples": L,
        "region_width": width,
        "n_targets": n_s,
    })
    return [("srf", table)]


# ----------------------------------------------------------------------- main


_COMMANDS = {
    "simulate": cmd_simulate,
    "bench-srf": cmd_bench_srf,
    "recover-grid": cmd_recover_grid,
    "recover-an": cmd_recover_an,
    "certify": cmd_certify,
    "prop2": cmd_prop2,
}


def _resolve_threads(cli_value: int) -> int:
    env = os.environ.get("SRR_THREADS")
    if env is not None:
        try:
            value = int(env)
        except ValueError:
            raise ConfigError(f"SRR_THREADS must be an integer, got {env!r}") from None
        if value < 1:
            raise ConfigError(f"SRR_THREADS must be >= 1, got {value}")
        return value
    if cli_value < 1:
        raise ConfigError(f"--threads must be >= 1, got {cli_value}")
    return cli_value


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="srr",
        description="Seeded super-resolution experiments driven by JSON configs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True, help="path to a JSON experiment config")
        cmd.add_argument("--seed", type=int, default=None, help="override the config seed")
        cmd.add_argument("--out", default=".", help="output directory (default: cwd)")
        cmd.add_argument("--threads", type=int, default=1, help="trial workers (SRR_THREADS overrides)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.command:
            raise ConfigError(
                f"config is for experiment {cfg.experiment!r} but the command is {args.command!r}"
            )
        seed = args.seed if args.seed is not None else cfg.params["seed"]
        if seed < 0:
            raise ConfigError(f"seed must be >= 0, got {seed}")
        threads = _resolve_threads(args.threads)
        tables = _COMMANDS[args.command](cfg, seed, threads)
        for path in _write_outputs(tables, cfg, seed, args.out):
            print(f"wrote {path}")
        return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except CapacityError as exc:
        print(f"capacity exceeded: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
