"""Experiment runner: config validation, scenario dispatch, persistent records.

Every scenario is a deterministic function of (config, seed).  Results go to
a CSV (one row per threshold/lambda/step) plus a JSON record that echoes the
config, so any record can be re-run and diffed bit-for-bit.  Output files are
written atomically: temp file in the target directory, then rename.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import __version__
from .errors import ConfigError
from .maps import MapSequence, covering_horizon
from .stochastic import (Observable, asclt_report, concentration_mgf,
                         conditional_expectation_mc, empirical_measure_tail,
                         initial_points, ld_tail, normal_cdf, shadowing_stat)
from .transfer import (PiecewiseFn, apply_transfer, conditional_expectation_kp,
                       decay_rate, martingale_decomposition, minoration_check)

CSV_SCHEMA_VERSION = "v1"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str
    sequence: dict
    seed: int
    params: dict = field(default_factory=dict)
    out_dir: Optional[str] = None

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        violations = []
        scenario = raw.get("scenario")
        if not isinstance(scenario, str) or scenario not in SCENARIOS:
            violations.append(f"scenario: must be one of {', '.join(SCENARIOS)}")
        seed = raw.get("seed")
        if not isinstance(seed, int) or isinstance(seed, bool):
            violations.append("seed: required integer")
        seq_cfg = raw.get("sequence")
        if not isinstance(seq_cfg, dict):
            violations.append("sequence: required table with a 'kind' entry")
        else:
            try:
                MapSequence.from_config(seq_cfg)
            except (KeyError, ValueError, TypeError) as exc:
                violations.append(f"sequence: {exc}")
        params = raw.get("params", {})
        if not isinstance(params, dict):
            violations.append("params: must be a table")
            params = {}
        if isinstance(scenario, str) and scenario in SCENARIOS:
            spec = SCENARIOS[scenario]
            merged = dict(spec.defaults)
            merged.update(params)
            for name in spec.required:
                if name not in merged:
                    violations.append(f"params.{name}: required by scenario {scenario}")
            for name, value in merged.items():
                if name.endswith(("_samples", "_max", "horizon", "orbits")) or name in ("n",):
                    if not isinstance(value, int) or value < 1:
                        violations.append(f"params.{name}: must be a count >= 1")
            params = merged
        out_dir = raw.get("out_dir")
        if out_dir is not None and not isinstance(out_dir, str):
            violations.append("out_dir: must be a path string")
        if violations:
            raise ConfigError(violations)
        return cls(scenario=scenario, sequence=dict(seq_cfg), seed=seed,
                   params=params, out_dir=out_dir)

    @classmethod
    def from_file(cls, path: str) -> "ExperimentConfig":
        with open(path, "rb") as fh:
            blob = fh.read()
        if path.endswith(".json"):
            raw = json.loads(blob.decode())
        else:
            try:
                import tomllib  # Python >= 3.11
            except ModuleNotFoundError:
                import tomli as tomllib
            raw = tomllib.loads(blob.decode())
        return cls.from_dict(raw)

    def echo(self) -> dict:
        return {"scenario": self.scenario, "sequence": dict(self.sequence),
                "seed": self.seed, "params": dict(self.params)}


@dataclass(frozen=True)
class ScenarioResult:
    columns: tuple[str, ...]
    rows: list[tuple]
    fitted: dict
    warnings: list[str]


@dataclass(frozen=True)
class ExperimentRecord:
    config: dict
    version: str
    wall_clock_s: float
    columns: tuple[str, ...]
    rows: list[tuple]
    fitted: dict
    warnings: list[str]
    csv_path: Optional[str] = None
    json_path: Optional[str] = None


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    required: tuple[str, ...]
    defaults: dict
    verifies: str
    run: Callable[[ExperimentConfig, MapSequence], ScenarioResult]


def _observable_proxy(params: dict) -> PiecewiseFn:
    kind = params.get("observable", "centered_identity")
    cells = int(params.get("proxy_cells", 1 << 10))
    if kind == "centered_identity":
        return PiecewiseFn.sawtooth_proxy(cells)
    if kind == "identity":
        return PiecewiseFn.step_proxy(lambda x: x, cells)
    if kind == "constant":
        return PiecewiseFn.constant(float(params.get("constant_value", 1.0)))
    raise ConfigError([f"params.observable: unknown observable {kind!r}"])


def _density_row(n: int, d: PiecewiseFn) -> tuple:
    return (n, d.min_value(), d.max_value(), d.variation(), d.l1(), d.bv())


def _run_decay(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n_max = int(cfg.params["n_max"])
    f0 = _observable_proxy(cfg.params)
    est = decay_rate(seq, f0, n_max)
    rows = []
    f = f0
    rows.append(_density_row(0, f))
    for n in range(1, n_max + 1):
        f = apply_transfer(seq.map_at(n), f)
        rows.append(_density_row(n, f))
    fitted = {"theta_hat": est.theta_hat, "k_hat": est.k_hat,
              "window": list(est.window)}
    warns = ["decay fit degenerate"] if est.degenerate else []
    return ScenarioResult(("n", "min", "max", "variation", "l1", "bv"),
                          rows, fitted, warns)


def _run_minoration(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    horizon = int(cfg.params["horizon"])
    report = minoration_check(seq, horizon,
                              with_predicted_delta=bool(cfg.params.get("predict", True)))
    rows = []
    d = PiecewiseFn.constant(1.0)
    rows.append(_density_row(0, d))
    for n in range(1, horizon + 1):
        d = apply_transfer(seq.map_at(n), d)
        rows.append(_density_row(n, d))
    fitted = {"delta_hat": report.delta_hat, "predicted_delta": report.predicted_delta}
    return ScenarioResult(("n", "min", "max", "variation", "l1", "bv"),
                          rows, fitted, [])


def _run_covering(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n_list = [int(v) for v in cfg.params["n_list"]]
    max_steps = int(cfg.params["max_steps"])
    rows = []
    warns = []
    for n in n_list:
        horizon = covering_horizon(seq, 0, n, max_steps)
        if horizon is None:
            warns.append(f"no covering horizon within {max_steps} steps at depth {n}")
        rows.append((n, -1 if horizon is None else horizon))
    fitted = {"max_steps": max_steps}
    return ScenarioResult(("n", "covering_steps"), rows, fitted, warns)


def _run_ld_tail(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n = int(cfg.params["n"])
    m = int(cfg.params["m_samples"])
    t_list = [float(t) for t in cfg.params["t_list"]]
    rep = ld_tail(seq, lambda x: x, 1.0, n, t_list, m, cfg.seed)
    rows = list(zip(rep.thresholds, rep.empirical_probs))
    fitted = {"c_fit": rep.bound_exponent_fit, "n": n}
    return ScenarioResult(("t", "empirical_prob"), rows, fitted, list(rep.warnings))


def _run_empirical_measure(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n_list = [int(v) for v in cfg.params["n_list"]]
    m = int(cfg.params["m_samples"])
    t_list = [float(t) for t in cfg.params["t_list"]]
    rows = []
    warns: list[str] = []
    last = None
    for n in n_list:
        rep = empirical_measure_tail(seq, n, m, t_list, cfg.seed)
        rows.append((n, rep.mean_kappa, rep.se_kappa))
        warns = list(rep.tail.warnings)
        last = rep
    fitted = {}
    if len(n_list) >= 2:
        slope = float(np.polyfit(np.log(n_list), np.log([r[1] for r in rows]), 1)[0])
        fitted["loglog_slope"] = slope
    if last is not None:
        fitted["c_fit_at_largest_n"] = last.tail.bound_exponent_fit
    return ScenarioResult(("n", "mean_kappa", "se_kappa"), rows, fitted, warns)


def _run_shadowing(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    widths = [float(w) for w in cfg.params["widths"]]
    n = int(cfg.params["n"])
    samples = int(cfg.params["x_samples"])
    density = int(cfg.params["grid_per_unit"])
    anchor = float(cfg.params.get("anchor", 0.4))
    xs = initial_points(cfg.seed, samples)
    rows = []
    for w in widths:
        a_set = [(anchor, anchor + w)]
        grid = max(4, int(round(density * w)))
        zs = [shadowing_stat(seq, a_set, n, float(x), grid) for x in xs]
        mean_z = float(np.mean(zs))
        c1 = mean_z * math.sqrt(n) / math.sqrt(abs(math.log(w)))
        rows.append((w, mean_z, c1))
    fitted = {}
    if len(rows) >= 2:
        c1s = [r[2] for r in rows]
        fitted["c1_ratio"] = max(c1s) / min(c1s)
    return ScenarioResult(("width", "mean_z", "c1"), rows, fitted, [])


def _run_asclt(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n = int(cfg.params["n"])
    orbits = int(cfg.params["orbits"])
    route = str(cfg.params.get("sigma_route", "operator"))
    f = _observable_proxy(cfg.params)
    xs = initial_points(cfg.seed, orbits)
    reports = [asclt_report(seq, f, n, float(x), sigma_route=route) for x in xs]
    ks_list = [r.ks_distance for r in reports]
    median_idx = int(np.argsort(ks_list)[len(ks_list) // 2])
    rep = reports[median_idx]
    rows = [(float(t), float(e), float(p))
            for t, e, p in zip(rep.grid, rep.empirical_cdf, normal_cdf(rep.grid))]
    warns = sorted({flag for r in reports for flag in r.flags})
    fitted = {"ks_median": float(np.median(ks_list)), "ks_per_orbit": ks_list,
              "variance_slope": rep.variance_slope}
    return ScenarioResult(("t", "empirical_cdf", "normal_cdf"), rows, fitted, warns)


def _run_concentration(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n = int(cfg.params["n"])
    m = int(cfg.params["m_samples"])
    lambdas = [float(v) for v in cfg.params["lambda_list"]]
    K = Observable.ergodic_mean(n)
    rep = concentration_mgf(seq, K, lambdas, m, cfg.seed)
    rows = list(zip(rep.lambdas, rep.log_mgf, rep.c_per_lambda, rep.effective_samples))
    fitted = {"c_hat": rep.c_hat, "n": n}
    return ScenarioResult(("lambda", "log_mgf", "c_lambda", "effective_samples"),
                          rows, fitted, list(rep.warnings))


def _run_martingale(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    n_list = [int(v) for v in cfg.params["n_list"]]
    orbits = int(cfg.params["orbits"])
    f = _observable_proxy(cfg.params)
    xs = initial_points(cfg.seed, orbits)
    rows = []
    for n in n_list:
        dec = martingale_decomposition(seq, f, n, xs)
        rows.append((n, dec.h_sup_norms[-1], float(np.max(dec.residual))))
    sups = [r[1] for r in rows]
    fitted = {"max_residual": max(r[2] for r in rows),
              "h_sup_spread": (max(sups) - min(sups)) / min(sups) if min(sups) > 0 else 0.0}
    return ScenarioResult(("n", "h_sup", "max_residual"), rows, fitted, [])


def _run_kp_check(cfg: ExperimentConfig, seq: MapSequence) -> ScenarioResult:
    p_list = [int(v) for v in cfg.params["p_list"]]
    x_p = float(cfg.params.get("x_p", 0.7))
    m = int(cfg.params["m_samples"])
    eps = float(cfg.params.get("bin_eps", 0.02))
    rows = []
    worst = 0.0
    for p in p_list:
        K = Observable.ergodic_mean(p)
        exact = conditional_expectation_kp(seq, K, p, x_p)
        mc, se, hits = conditional_expectation_mc(seq, K, p, x_p, eps, m, cfg.seed)
        z = abs(exact - mc) / se if se > 0 else float("inf")
        worst = max(worst, z)
        rows.append((p, exact, mc, se, hits, z))
    fitted = {"max_abs_z": worst, "bin_eps": eps}
    return ScenarioResult(("p", "operator_value", "mc_value", "mc_se", "mc_hits", "z"),
                          rows, fitted, [])


SCENARIOS: dict[str, ScenarioSpec] = {}


def _register(name, required, defaults, verifies, run):
    SCENARIOS[name] = ScenarioSpec(name, required, defaults, verifies, run)


_register("decay", ("n_max",), {"n_max": 20},
          "geometric BV-norm decay of zero-mean densities under composed transfer operators",
          _run_decay)
_register("minoration", ("horizon",), {"horizon": 200},
          "pushforward densities of 1 stay uniformly above a positive floor",
          _run_minoration)
_register("covering", ("n_list", "max_steps"), {"n_list": [1, 2, 3, 4, 5, 6, 7, 8], "max_steps": 64},
          "every monotonicity cell of a block composition maps onto [0,1] within a horizon",
          _run_covering)
_register("ld_tail", ("n", "m_samples", "t_list"),
          {"n": 256, "m_samples": 20000, "t_list": [0.0, 0.01, 0.02, 0.05, 0.1]},
          "Gaussian-type large-deviation tail for centered Lipschitz ergodic averages",
          _run_ld_tail)
_register("empirical_measure", ("n_list", "m_samples", "t_list"),
          {"n_list": [64, 128, 256, 512, 1024], "m_samples": 2000, "t_list": [0.5, 1.0, 2.0, 3.0]},
          "Kantorovich distance of the empirical measure to the averaged pushforward is of order 1/sqrt(n)",
          _run_empirical_measure)
_register("shadowing", ("widths", "n", "x_samples", "grid_per_unit"),
          {"widths": [2.0 ** -5, 2.0 ** -10], "n": 32, "x_samples": 512, "grid_per_unit": 4096},
          "average shadowing quality of orbits by trajectories started in a set A scales with sqrt|log m(A)|/sqrt(n)",
          _run_shadowing)
_register("asclt", ("n", "orbits"), {"n": 10000, "orbits": 5},
          "log-weighted single-orbit CDF of normalized ergodic sums approaches the standard normal",
          _run_asclt)
_register("concentration", ("n", "m_samples", "lambda_list"),
          {"n": 256, "m_samples": 20000, "lambda_list": [1.0, 2.0, 4.0, 8.0, 16.0, 32.0]},
          "exponential moment bound exp(C sum Lip_j^2) for separately Lipschitz orbit functionals",
          _run_concentration)
_register("martingale", ("n_list", "orbits"), {"n_list": [10, 20, 30, 40, 50], "orbits": 100},
          "ergodic sums split exactly into reversed-martingale increments plus a bounded coboundary",
          _run_martingale)
_register("kp_check", ("p_list", "m_samples"),
          {"p_list": [1, 2, 3, 4, 5, 6], "m_samples": 200000, "x_p": 0.7, "bin_eps": 0.02},
          "preimage-sum formula for conditional expectations given the orbit position at time p",
          _run_kp_check)


def run_scenario(config: ExperimentConfig) -> ExperimentRecord:
    """Dispatch without touching the filesystem."""
    seq = MapSequence.from_config(config.sequence)
    started = time.perf_counter()
    result = SCENARIOS[config.scenario].run(config, seq)
    elapsed = time.perf_counter() - started
    return ExperimentRecord(config=config.echo(), version=__version__,
                            wall_clock_s=elapsed, columns=result.columns,
                            rows=result.rows, fitted=result.fitted,
                            warnings=result.warnings)


def _atomic_write(path: str, payload: bytes):
    directory = os.path.dirname(path) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".seqdyn-", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv_payload(record: ExperimentRecord) -> bytes:
    buf = io.StringIO()
    scenario = record.config["scenario"]
    buf.write(f"# schema: {scenario}.{CSV_SCHEMA_VERSION}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(record.columns)
    for row in record.rows:
        writer.writerow([repr(v) if isinstance(v, float) else v for v in row])
    return buf.getvalue().encode()


def _json_payload(record: ExperimentRecord) -> bytes:
    doc = {
        "schema": f"{record.config['scenario']}.{CSV_SCHEMA_VERSION}",
        "toolkit_version": record.version,
        "config": record.config,
        "wall_clock_s": record.wall_clock_s,
        "columns": list(record.columns),
        "rows": [list(r) for r in record.rows],
        "fitted": record.fitted,
        "warnings": record.warnings,
    }
    return (json.dumps(doc, indent=2, allow_nan=True) + "\n").encode()


def run(config: ExperimentConfig, out_dir: Optional[str] = None) -> ExperimentRecord:
    """Run a validated config and persist CSV + JSON atomically."""
    record = run_scenario(config)
    target = out_dir or config.out_dir or os.environ.get("SEQDYN_OUT_DIR", "results")
    base = f"{config.scenario}_seed{config.seed}"
    csv_path = os.path.join(target, base + ".csv")
    json_path = os.path.join(target, base + ".json")
    record = ExperimentRecord(config=record.config, version=record.version,
                              wall_clock_s=record.wall_clock_s,
                              columns=record.columns, rows=record.rows,
                              fitted=record.fitted, warnings=record.warnings,
                              csv_path=csv_path, json_path=json_path)
    _atomic_write(csv_path, _csv_payload(record))
    _atomic_write(json_path, _json_payload(record))
    return record


def verify(record_path: str) -> tuple[bool, str]:
    """Re-run a record's echoed config and diff the result rows bit-for-bit."""
    with open(record_path) as fh:
        doc = json.load(fh)
    config = ExperimentConfig.from_dict(doc["config"])
    fresh = run_scenario(config)
    old_rows = [list(r) for r in doc["rows"]]
    new_rows = [list(r) for r in fresh.rows]
    if len(old_rows) != len(new_rows):
        return False, f"row count changed: {len(old_rows)} -> {len(new_rows)}"
    for i, (a, b) in enumerate(zip(old_rows, new_rows)):
        if a != b:
            return False, f"row {i} differs: {a} != {b}"
    return True, f"{len(new_rows)} rows identical"


def list_scenarios(as_json: bool = False) -> str:
    """Stable table of scenarios, their required parameters, and what each verifies."""
    if as_json:
        doc = [{"scenario": s.name, "required_params": list(s.required),
                "defaults": s.defaults, "verifies": s.verifies}
               for s in SCENARIOS.values()]
        return json.dumps(doc, indent=2)
    name_w = max(len(s.name) for s in SCENARIOS.values())
    par_w = max(len(", ".join(s.required)) for s in SCENARIOS.values())
    lines = [f"{'scenario':<{name_w}}  {'required params':<{par_w}}  verifies"]
    lines.append("-" * (name_w + par_w + 12))
    for s in SCENARIOS.values():
        lines.append(f"{s.name:<{name_w}}  {', '.join(s.required):<{par_w}}  {s.verifies}")
    return "\n".join(lines)
