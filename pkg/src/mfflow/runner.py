"""Experiment configuration, training loops, and CSV artifacts.

Each experiment writes a self-describing run directory:

    config.json     the exact configuration with every default materialized
    metrics.csv     one row per logged iteration (schema fixed per experiment)
    final-state.csv terminal particle state
    histograms.csv  angle histograms (reduced runs only)
    scan.csv        perpendicular-dependence values (scan runs only)
    report.json     summary of the reduction comparison (comparison runs only)
    manifest.json   code version and seed
    timing.csv      wall-clock seconds (excluded from the determinism contract)

All CSV floats use 17 significant digits so doubles round-trip exactly;
at thread count 1 a rerun of the same config is byte-identical on every
artifact except timing.csv.

Metric rows are logged at iterations k with k % log_every == 0, including
k = 0 (the state before any step), for k up to and including K.
"""

from __future__ import annotations

import copy
import csv
import json
import os
import time
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Mapping

import numpy as np

from . import __version__
from .errors import ConfigError, SchemaError
from .linear import (
    Dataset,
    gd_on_q_baseline,
    init_linear_state,
    ols_optimum,
    q_value_and_grad,
    step_mean_field_linear,
)
from .meanfield import (
    TargetSpec,
    batch_loss,
    init_cloud,
    invariance_defect,
    neg_identity,
    perp_dependence_scan,
    predict,
    project_to_angles,
    reflection,
    sphere_batch,
    step,
    symmetrize_batch,
    symmetrize_cloud,
)
from .reduced import (
    QuadratureSpec,
    alpha_expected,
    angle_histogram,
    draw_mc_batch,
    init_reduced,
    masses,
    objective_a_quadrature,
    step_reduced,
    w2_to_dirac,
)
from .rng import RandomSource
from .sphere import SplitDims

HALF_PI = np.pi / 2.0

EXPERIMENTS = (
    "linear-figure1",
    "perp-scan-figure2",
    "reduced-figure3",
    "reduction-equivalence",
    "invariance-suite",
)

_DEFAULTS: dict[str, dict[str, Any]] = {
    "linear-figure1": {
        "seed": 0,
        "d": 5,
        "n_data": 100,
        "noise_var": 2.0,
        "m": 64,
        "eta": 1e-2,
        "k_steps": 12_000,
        "log_every": 50,
        "n_runs": 10,
    },
    "perp-scan-figure2": {
        "seed": 0,
        "d": 20,
        "d_h": 5,
        "m": 1024,
        "eta": 5e-3,
        "n_batch": 1000,
        "k_steps": 20_000,
        "log_every": 100,
        "eval_n": 4096,
        "scan_axis": 0,
        "r_grid": [i / 10 for i in range(11)],
    },
    "reduced-figure3": {
        "seed": 0,
        "d": 30,
        "d_h": 5,
        "m": 1024,
        "eta": 5e-3,
        "n_batch": 1000,
        "k_steps": 20_000,
        "log_every": 100,
        "bins": 50,
        "prefactor": "one_over_n",
        "clamp_theta": False,
        "loss_outer": 96,
        "loss_inner": 64,
    },
    "reduction-equivalence": {
        "seed": 0,
        "d": 30,
        "d_h": 5,
        "m_sweep": [256, 1024, 4096],
        "eta": 5e-3,
        "n_batch": 1000,
        "k_steps": 500,
        "log_every": 25,
        "eval_n": 20_000,
        "symmetrize": False,
        "loss_outer": 96,
        "loss_inner": 64,
    },
    "invariance-suite": {
        "seed": 0,
        "d": 10,
        "d_h": 5,
        "m": 64,
        "eta": 1e-3,
        "n_batch": 256,
        "k_steps": 1000,
        "log_every": 50,
        "flavor": "invariant",
        "n_test": 100,
        "eval_n": 2048,
    },
}

_CHOICES = {
    "prefactor": ("one_over_n", "d_over_n"),
    "flavor": ("invariant", "anti-invariant"),
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment configuration with all defaults materialized."""

    experiment: str
    params: Mapping[str, Any]

    def __getitem__(self, key: str) -> Any:
        return self.params[key]

    def to_dict(self) -> dict[str, Any]:
        return {"experiment": self.experiment, **copy.deepcopy(dict(self.params))}

    @staticmethod
    def from_dict(raw: Mapping[str, Any]) -> "ExperimentConfig":
        if not isinstance(raw, Mapping):
            raise ConfigError(f"config must be a JSON object, got {type(raw).__name__}")
        experiment = raw.get("experiment")
        if experiment not in EXPERIMENTS:
            raise ConfigError(
                f"experiment must be one of {', '.join(EXPERIMENTS)}; got {experiment!r}"
            )
        params = copy.deepcopy(_DEFAULTS[experiment])
        for key, value in raw.items():
            if key == "experiment":
                continue
            if key not in params:
                raise ConfigError(f"unknown config key {key!r} for {experiment}")
            params[key] = copy.deepcopy(value)
        _validate(experiment, params)
        return ExperimentConfig(experiment=experiment, params=MappingProxyType(params))


def _require_int(params, key, minimum):
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if value < minimum:
        raise ConfigError(f"{key} must be >= {minimum}, got {value}")


def _require_real(params, key, positive=True):
    value = params[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number, got {value!r}")
    if positive and not value > 0:
        raise ConfigError(f"{key} must be > 0, got {value}")
    params[key] = float(value)


def _validate(experiment: str, params: dict[str, Any]) -> None:
    _require_int(params, "seed", 0)
    for key in ("k_steps", "log_every"):
        _require_int(params, key, 1)
    _require_real(params, "eta")
    if "d_h" in params:
        _require_int(params, "d", 2)
        _require_int(params, "d_h", 1)
        try:
            SplitDims(params["d"], params["d_h"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    else:
        _require_int(params, "d", 1)
    for key in ("m", "n_batch", "eval_n", "n_data", "n_runs", "n_test",
                "loss_outer", "loss_inner"):
        if key in params:
            _require_int(params, key, 1)
    if "bins" in params:
        _require_int(params, "bins", 2)
    for key, choices in _CHOICES.items():
        if key in params and params[key] not in choices:
            raise ConfigError(f"{key} must be one of {choices}, got {params[key]!r}")
    for key in ("clamp_theta", "symmetrize"):
        if key in params and not isinstance(params[key], bool):
            raise ConfigError(f"{key} must be a boolean, got {params[key]!r}")
    if "noise_var" in params:
        _require_real(params, "noise_var")
    if "scan_axis" in params:
        _require_int(params, "scan_axis", 0)
        if params["scan_axis"] >= params["d_h"]:
            raise ConfigError(
                f"scan_axis must be < d_h = {params['d_h']}, got {params['scan_axis']}"
            )
    if "r_grid" in params:
        grid = params["r_grid"]
        if (
            not isinstance(grid, list)
            or not grid
            or not all(isinstance(r, (int, float)) and not isinstance(r, bool) for r in grid)
        ):
            raise ConfigError("r_grid must be a non-empty list of numbers")
        params["r_grid"] = [float(r) for r in grid]
    if "m_sweep" in params:
        sweep = params["m_sweep"]
        if (
            not isinstance(sweep, list)
            or not sweep
            or not all(isinstance(m, int) and not isinstance(m, bool) and m >= 1 for m in sweep)
        ):
            raise ConfigError("m_sweep must be a non-empty list of positive integers")
    if experiment == "linear-figure1" and params["m"] % 2 != 0:
        raise ConfigError(f"m must be even for the mirrored linear init, got {params['m']}")


# ---------------------------------------------------------------- artifacts


def _fmt(value) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
        return str(int(value))
    return format(float(value), ".17g")


def _write_csv(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _resolve_out_dir(cfg: ExperimentConfig, out_dir) -> Path:
    if out_dir is not None:
        return Path(out_dir)
    root = os.environ.get("MFFLOW_OUT", "runs")
    return Path(root) / f"{cfg.experiment}-seed{cfg['seed']}"


def _logged_iterations(k_steps: int, log_every: int):
    return (k for k in range(k_steps + 1) if k % log_every == 0)


# ---------------------------------------------------------------- experiments


def _run_linear(cfg: ExperimentConfig) -> dict:
    rs = RandomSource(cfg["seed"])
    d, n_data = cfg["d"], cfg["n_data"]
    data_rng = rs.split(1).generator()
    x = data_rng.uniform(-1.0, 1.0, size=(n_data, d))
    y_center = data_rng.normal()
    y = data_rng.normal(y_center, np.sqrt(cfg["noise_var"]), size=n_data)
    dataset = Dataset(x=x, y=y)
    _, q_min = ols_optimum(dataset)

    eta, k_steps, log_every = cfg["eta"], cfg["k_steps"], cfg["log_every"]
    metrics = []
    finals = []

    def log_row(run_id, method, k, w):
        q, _ = q_value_and_grad(dataset, w)
        metrics.append([run_id, method, k, q, q - q_min, *w])

    for run_idx in range(cfg["n_runs"]):
        state = init_linear_state(cfg["m"], dataset, rs.split(2, run_idx))
        for k in range(k_steps + 1):
            if k % log_every == 0:
                log_row(str(run_idx), "mean-field", k, state.w)
            if k < k_steps:
                state = step_mean_field_linear(state, eta, iteration=k)
        for j in range(state.m):
            finals.append([str(run_idx), j, state.a[j], *state.b[j]])

    trajectory = gd_on_q_baseline(dataset, np.zeros(d), eta, k_steps)
    for k in _logged_iterations(k_steps, log_every):
        log_row("baseline", "gd-on-q", k, trajectory[k])

    w_cols = [f"w{i + 1}" for i in range(d)]
    b_cols = [f"b{i + 1}" for i in range(d)]
    return {
        "metrics.csv": (["run-id", "method", "iteration", "loss", "gap", *w_cols], metrics),
        "final-state.csv": (["run-id", "particle", "a", *b_cols], finals),
    }


def _run_perp_scan(cfg: ExperimentConfig) -> dict:
    rs = RandomSource(cfg["seed"])
    dims = SplitDims(cfg["d"], cfg["d_h"])
    target = TargetSpec.norm_on_subspace(dims)
    cloud = init_cloud(cfg["m"], dims, rs.split(1))
    eval_batch = sphere_batch(cfg["eval_n"], dims.d, rs.split(2))
    u_h = np.zeros(dims.d_H)
    u_h[cfg["scan_axis"]] = 1.0
    r_grid = np.asarray(cfg["r_grid"])

    eta, k_steps, log_every = cfg["eta"], cfg["k_steps"], cfg["log_every"]
    metrics = []
    scan_rows = []
    for k in range(k_steps + 1):
        if k % log_every == 0:
            metrics.append([k, batch_loss(cloud, target, eval_batch)])
            values = perp_dependence_scan(cloud, u_h, r_grid)
            scan_rows.extend([k, r, v] for r, v in zip(r_grid, values))
        if k < k_steps:
            batch = sphere_batch(cfg["n_batch"], dims.d, rs.split(3, k))
            cloud = step(cloud, target, eta, batch, iteration=k)

    b_cols = [f"b{i + 1}" for i in range(dims.d)]
    finals = [[j, cloud.a[j], *cloud.b[j]] for j in range(cloud.m)]
    return {
        "metrics.csv": (["iteration", "loss"], metrics),
        "scan.csv": (["iteration", "r", "value"], scan_rows),
        "final-state.csv": (["particle", "a", *b_cols], finals),
    }


def _run_reduced(cfg: ExperimentConfig) -> dict:
    rs = RandomSource(cfg["seed"])
    dims = SplitDims(cfg["d"], cfg["d_h"])
    cloud = init_reduced(cfg["m"], dims, rs.split(1))
    alpha = alpha_expected(dims.d_H)
    inner = QuadratureSpec(kind="gauss", n=cfg["loss_inner"])

    eta, k_steps, log_every = cfg["eta"], cfg["k_steps"], cfg["log_every"]
    flips = overshoots = 0
    metrics = []
    hist_rows = []
    for k in range(k_steps + 1):
        if k % log_every == 0:
            plus, minus = masses(cloud)
            metrics.append([
                k,
                objective_a_quadrature(cloud, n_outer=cfg["loss_outer"], inner=inner),
                plus,
                minus,
                w2_to_dirac(cloud, +1, 0.0),
                w2_to_dirac(cloud, -1, HALF_PI),
                abs(plus - alpha),
                abs(minus - alpha),
                flips,
                overshoots,
            ])
            for side_label, side in (("plus", +1), ("minus", -1)):
                lefts, mass = angle_histogram(cloud, side, cfg["bins"])
                hist_rows.extend([k, side_label, left, m] for left, m in zip(lefts, mass))
        if k < k_steps:
            batch = draw_mc_batch(cfg["n_batch"], dims, rs.split(2, k))
            cloud, events = step_reduced(
                cloud,
                batch,
                eta,
                prefactor=cfg["prefactor"],
                clamp_theta=cfg["clamp_theta"],
                iteration=k,
            )
            flips += events.sign_flips
            overshoots += events.overshoots

    finals = [[j, cloud.c[j], cloud.theta[j], int(cloud.eps[j])] for j in range(cloud.m)]
    return {
        "metrics.csv": (
            [
                "iteration", "loss", "plus-mass", "minus-mass",
                "w2-plus-to-0", "w2-minus-to-half-pi",
                "mass-error-plus", "mass-error-minus",
                "sign-flip-count", "overshoot-count",
            ],
            metrics,
        ),
        "histograms.csv": (["iteration", "side", "bin-left", "mass"], hist_rows),
        "final-state.csv": (["particle", "c", "theta", "eps"], finals),
    }


def _run_compare(cfg: ExperimentConfig) -> dict:
    """Full flow vs the 1-D angle flow from the matched projected init.

    Both flows start from the same particles: the reduced side is the
    angle projection of the full side's init. Losses share one evaluation
    batch and one quadrature across the m sweep, so the finite-width
    discrepancy is the only moving part. With symmetrize on, the full
    cloud and every batch are reflected across the first perpendicular
    axis (a target-preserving relabeling that leaves the projection law
    unchanged).
    """
    rs = RandomSource(cfg["seed"])
    dims = SplitDims(cfg["d"], cfg["d_h"])
    target = TargetSpec.norm_on_subspace(dims)
    transforms = [reflection(dims.d, dims.d_H)] if cfg["symmetrize"] else []
    eval_batch = sphere_batch(cfg["eval_n"], dims.d, rs.split(2))
    eval_target = target(eval_batch)
    inner = QuadratureSpec(kind="gauss", n=cfg["loss_inner"])
    eta, k_steps, log_every = cfg["eta"], cfg["k_steps"], cfg["log_every"]

    metrics = []
    report: dict[str, Any] = {"m-sweep": list(cfg["m_sweep"]), "per-m": {}}
    final_cloud = None
    for m in cfg["m_sweep"]:
        cloud = init_cloud(m, dims, rs.split(1, m))
        if transforms:
            cloud = symmetrize_cloud(cloud, transforms)
        reduced = project_to_angles(cloud)
        rel_series = []
        initial = {}
        for k in range(k_steps + 1):
            if k % log_every == 0:
                samples = 0.5 * (eval_target - predict(cloud, eval_batch)) ** 2
                loss_full = float(samples.mean())
                loss_reduced = objective_a_quadrature(
                    reduced, n_outer=cfg["loss_outer"], inner=inner
                )
                rel = abs(loss_full - loss_reduced) / max(abs(loss_reduced), 1e-300)
                metrics.append([m, k, loss_full, loss_reduced, rel])
                rel_series.append(rel)
                if k == 0:
                    initial = {
                        "loss-full": loss_full,
                        "loss-reduced": loss_reduced,
                        "se-full": float(samples.std(ddof=1) / np.sqrt(samples.size)),
                    }
            if k < k_steps:
                batch = sphere_batch(cfg["n_batch"], dims.d, rs.split(3, m, k))
                if transforms:
                    batch = symmetrize_batch(batch, transforms)
                cloud = step(cloud, target, eta, batch, iteration=k)
                rbatch = draw_mc_batch(cfg["n_batch"], dims, rs.split(4, m, k))
                reduced, _ = step_reduced(reduced, rbatch, eta, iteration=k)
        report["per-m"][str(m)] = {
            **initial,
            "median-rel-discrepancy": float(np.median(rel_series)),
        }
        if m == max(cfg["m_sweep"]):
            final_cloud = cloud

    b_cols = [f"b{i + 1}" for i in range(dims.d)]
    finals = [[j, final_cloud.a[j], *final_cloud.b[j]] for j in range(final_cloud.m)]
    return {
        "metrics.csv": (
            ["m", "iteration", "loss-full", "loss-reduced", "rel-discrepancy"],
            metrics,
        ),
        "report.json": report,
        "final-state.csv": (["particle", "a", *b_cols], finals),
    }


def compare_reduction(config) -> dict:
    """Run the reduction-equivalence study and return its report.

    The report carries, per width in the sweep, the initial losses of
    both flows (with the Monte-Carlo standard error of the full-flow
    loss) and the median relative loss discrepancy over the run.
    """
    if isinstance(config, ExperimentConfig):
        cfg = config
    else:
        raw = dict(config)
        raw.setdefault("experiment", "reduction-equivalence")
        cfg = ExperimentConfig.from_dict(raw)
    if cfg.experiment != "reduction-equivalence":
        raise ConfigError(
            f"compare_reduction needs a reduction-equivalence config, got {cfg.experiment!r}"
        )
    return _run_compare(cfg)["report.json"]


def _run_invariance(cfg: ExperimentConfig) -> dict:
    rs = RandomSource(cfg["seed"])
    dims = SplitDims(cfg["d"], cfg["d_h"])
    anti = cfg["flavor"] == "anti-invariant"
    if anti:
        transforms = [neg_identity(dims.d)]
        direction = np.zeros(dims.d)
        direction[0] = 1.0
        target = TargetSpec.odd_linear([direction], [1.0])
    else:
        transforms = [reflection(dims.d, 0)]
        target = TargetSpec.norm_on_subspace(dims)
    cloud = symmetrize_cloud(init_cloud(cfg["m"], dims, rs.split(1)), transforms)
    test_points = sphere_batch(cfg["n_test"], dims.d, rs.split(2))
    eval_batch = symmetrize_batch(sphere_batch(cfg["eval_n"], dims.d, rs.split(3)), transforms)

    eta, k_steps, log_every = cfg["eta"], cfg["k_steps"], cfg["log_every"]
    metrics = []
    for k in range(k_steps + 1):
        if k % log_every == 0:
            row = [
                k,
                batch_loss(cloud, target, eval_batch),
                max(invariance_defect(cloud, t, test_points) for t in transforms),
            ]
            if anti:
                w = cloud.a @ cloud.b / (2.0 * cloud.m)
                row.append(float(np.max(np.abs(predict(cloud, test_points) - test_points @ w))))
            metrics.append(row)
        if k < k_steps:
            batch = symmetrize_batch(sphere_batch(cfg["n_batch"], dims.d, rs.split(4, k)), transforms)
            cloud = step(cloud, target, eta, batch, iteration=k)

    header = ["iteration", "loss", "invariance-defect"]
    if anti:
        header.append("linearity-defect")
    b_cols = [f"b{i + 1}" for i in range(dims.d)]
    finals = [[j, cloud.a[j], *cloud.b[j]] for j in range(cloud.m)]
    return {
        "metrics.csv": (header, metrics),
        "final-state.csv": (["particle", "a", *b_cols], finals),
    }


_RUNNERS = {
    "linear-figure1": _run_linear,
    "perp-scan-figure2": _run_perp_scan,
    "reduced-figure3": _run_reduced,
    "reduction-equivalence": _run_compare,
    "invariance-suite": _run_invariance,
}


def run(config, out_dir=None) -> Path:
    """Execute one experiment and write its run directory; returns the path."""
    cfg = config if isinstance(config, ExperimentConfig) else ExperimentConfig.from_dict(config)
    out = _resolve_out_dir(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    artifacts = _RUNNERS[cfg.experiment](cfg)
    _write_json(out / "config.json", cfg.to_dict())
    _write_json(
        out / "manifest.json",
        {
            "package": "mfflow",
            "version": __version__,
            "experiment": cfg.experiment,
            "seed": cfg["seed"],
        },
    )
    for name, payload in artifacts.items():
        if name.endswith(".json"):
            _write_json(out / name, payload)
        else:
            header, rows = payload
            _write_csv(out / name, header, rows)
    _write_csv(out / "timing.csv", ["phase", "seconds"], [["total", time.perf_counter() - started]])
    return out


# ---------------------------------------------------------------- figure data


def _read_csv(path: Path) -> tuple[list[str], list[dict[str, str]]]:
    if not path.exists():
        raise SchemaError(f"missing artifact {path.name}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise SchemaError(f"{path.name} has no header row")
        return list(reader.fieldnames), list(reader)


def _need(columns: list[str], name: str, artifact: str) -> None:
    if name not in columns:
        raise SchemaError(f"{artifact} is missing required column {name!r}")


def _load_config(run_dir: Path) -> dict:
    path = run_dir / "config.json"
    if not path.exists():
        raise SchemaError("missing artifact config.json")
    with open(path) as fh:
        return json.load(fh)


def emit_figure_data(run_dir, figure_id: int) -> list[Path]:
    """Write tidy per-figure CSVs next to the run's raw artifacts."""
    run_dir = Path(run_dir)
    config = _load_config(run_dir)
    eta = float(config.get("eta", 1.0))
    written = []
    if figure_id == 1:
        columns, rows = _read_csv(run_dir / "metrics.csv")
        for col in ("run-id", "method", "iteration", "w1", "w2"):
            _need(columns, col, "metrics.csv")
        out = run_dir / "figure1_trajectories.csv"
        _write_csv(
            out,
            ["run-id", "step", "w1", "w2", "method"],
            ([r["run-id"], r["iteration"], r["w1"], r["w2"], r["method"]] for r in rows),
        )
        written.append(out)
    elif figure_id == 2:
        columns, rows = _read_csv(run_dir / "scan.csv")
        for col in ("iteration", "r", "value"):
            _need(columns, col, "scan.csv")
        out = run_dir / "figure2_scan.csv"
        _write_csv(
            out,
            ["t", "r", "value"],
            ([int(r["iteration"]) * eta, r["r"], r["value"]] for r in rows),
        )
        written.append(out)
    elif figure_id == 3:
        columns, rows = _read_csv(run_dir / "histograms.csv")
        for col in ("iteration", "side", "bin-left", "mass"):
            _need(columns, col, "histograms.csv")
        out_hist = run_dir / "figure3_hist.csv"
        _write_csv(
            out_hist,
            ["t", "side", "bin-left", "mass"],
            ([int(r["iteration"]) * eta, r["side"], r["bin-left"], r["mass"]] for r in rows),
        )
        written.append(out_hist)
        columns, rows = _read_csv(run_dir / "metrics.csv")
        for col in (
            "iteration", "w2-plus-to-0", "w2-minus-to-half-pi",
            "mass-error-plus", "mass-error-minus",
        ):
            _need(columns, col, "metrics.csv")
        out_dist = run_dir / "figure3_dist.csv"
        dist_rows = []
        for r in rows:
            t = int(r["iteration"]) * eta
            dist_rows.append([t, "plus", r["w2-plus-to-0"], r["mass-error-plus"]])
            dist_rows.append([t, "minus", r["w2-minus-to-half-pi"], r["mass-error-minus"]])
        _write_csv(out_dist, ["t", "side", "w2-distance", "mass-error"], dist_rows)
        written.append(out_dist)
    else:
        raise ConfigError(f"figure_id must be 1, 2, or 3; got {figure_id!r}")
    return written
