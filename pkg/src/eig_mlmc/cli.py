"""Batch front-end: JSON run configuration in, CSV/JSON diagnostics out.

Two modes.  ``estimate`` runs the selected estimator once per requested
accuracy and writes ``runs.csv`` plus ``allocation.csv``; ``rate-study``
samples the level variables on a fixed grid and writes ``levels.csv`` plus
``rate_summary.json``.  All files are written to a temporary name and renamed
into place, so a failed run never leaves a partial file.  Identical config
and seed produce byte-identical files regardless of the thread count.

Exit codes: 0 success, 2 configuration error, 3 non-convergence, 4 I/O error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .adaptive import AdaptiveConfig, estimate_rates, nmc_cost_model, run_adaptive
from .bayes import BayesModel
from .errors import InsufficientDataError, NonConvergenceError
from .estimators import (
    EstimatorConfig,
    nmc_estimate,
    per_sample_cost,
    sample_level_values,
    sample_p_values,
    stats_from_values,
)
from .models import LinearGaussianSpec, PkSpec, make_linear_model, make_pk_model, sampling_schedule
from .streams import RandomStream

__all__ = ["RunConfig", "ConfigError", "parse_config", "serialize_config",
           "run_rate_study", "run_estimate", "main"]

# Samples used to estimate var(P_L) for the single-level cost report and to
# size a real nested run.
PILOT_SAMPLES = 2000

_TOP_KEYS = {
    "model", "model_params", "estimator", "eps", "seed", "omega", "L0",
    "N_star", "M0", "L_max", "is_enabled", "output_dir",
    "diagnostics_levels", "diagnostics_samples",
}
_LINEAR_KEYS = {"A", "mu_theta", "Sigma_theta", "Sigma_eps", "N_e"}
_PK_KEYS = {"scheme", "J", "dose", "noise_var", "schedule"}


class ConfigError(ValueError):
    """Invalid run configuration (syntax or semantics)."""


@dataclass(frozen=True)
class RunConfig:
    model: str
    estimator: str
    eps: tuple[float, ...]
    seed: int
    model_params: dict = field(default_factory=dict)
    omega: float = 0.25
    l0: int = 2
    n_star: int = 1000
    m0: int = 1
    l_max: int = 20
    is_enabled: bool = True
    output_dir: str = "."
    diagnostics_levels: int = 8
    diagnostics_samples: int = 20000

    def build_model(self) -> BayesModel:
        p = self.model_params
        if self.model == "linear":
            kwargs = {k: p[k] for k in ("A", "mu_theta", "Sigma_theta", "Sigma_eps") if k in p}
            if "N_e" in p:
                kwargs["n_e"] = p["N_e"]
            return make_linear_model(LinearGaussianSpec(**kwargs))
        if "schedule" in p:
            times = np.asarray(p["schedule"], dtype=float)
        else:
            times = sampling_schedule(p.get("scheme", "beta"), p.get("J", 15))
        kwargs = {}
        if "dose" in p:
            kwargs["dose"] = float(p["dose"])
        if "noise_var" in p:
            kwargs["noise_var"] = float(p["noise_var"])
        return make_pk_model(PkSpec(schedule=times, **kwargs))

    def estimator_config(self) -> EstimatorConfig:
        return EstimatorConfig(m0=self.m0, use_is=self.is_enabled)


def parse_config(text: str) -> RunConfig:
    """Parse and validate a JSON run configuration, applying defaults."""
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config syntax error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config key: {sorted(unknown)[0]!r}")

    def fail(key, why):
        raise ConfigError(f"invalid value for {key!r}: {why}")

    model = raw.get("model")
    if model not in ("linear", "pk"):
        fail("model", "must be 'linear' or 'pk'")
    estimator = raw.get("estimator", "mlmc")
    if estimator not in ("mlmc", "nmc"):
        fail("estimator", "must be 'mlmc' or 'nmc'")
    eps = raw.get("eps")
    if not isinstance(eps, list) or not eps or not all(
        isinstance(e, (int, float)) and e > 0 for e in eps
    ):
        fail("eps", "must be a non-empty list of positive numbers")
    eps = tuple(sorted((float(e) for e in eps), reverse=True))
    seed = raw.get("seed")
    if not isinstance(seed, int) or seed < 0:
        fail("seed", "must be a non-negative integer")
    params = raw.get("model_params", {})
    if not isinstance(params, dict):
        fail("model_params", "must be an object")
    allowed = _LINEAR_KEYS if model == "linear" else _PK_KEYS
    bad = set(params) - allowed
    if bad:
        fail("model_params", f"unknown key {sorted(bad)[0]!r} for model {model!r}")
    if model == "pk" and "scheme" in params and params["scheme"] not in ("beta", "even", "geometric"):
        fail("model_params", "scheme must be 'beta', 'even' or 'geometric'")

    omega = float(raw.get("omega", 0.25))
    if not 0.0 < omega < 1.0:
        fail("omega", "must lie in (0, 1)")
    l0 = int(raw.get("L0", 2))
    if l0 < 1:
        fail("L0", "must be >= 1")
    n_star = int(raw.get("N_star", 1000))
    if n_star < 1:
        fail("N_star", "must be >= 1")
    m0 = int(raw.get("M0", 1))
    if m0 < 1:
        fail("M0", "must be >= 1")
    l_max = int(raw.get("L_max", 20))
    if l_max < l0:
        fail("L_max", "must be >= L0")
    is_enabled = raw.get("is_enabled", True)
    if not isinstance(is_enabled, bool):
        fail("is_enabled", "must be a boolean")
    diagnostics_levels = int(raw.get("diagnostics_levels", 8))
    if diagnostics_levels < 1:
        fail("diagnostics_levels", "must be >= 1")
    diagnostics_samples = int(raw.get("diagnostics_samples", 20000))
    if diagnostics_samples < 2:
        fail("diagnostics_samples", "must be >= 2")

    return RunConfig(
        model=model,
        estimator=estimator,
        eps=eps,
        seed=seed,
        model_params=params,
        omega=omega,
        l0=l0,
        n_star=n_star,
        m0=m0,
        l_max=l_max,
        is_enabled=is_enabled,
        output_dir=str(raw.get("output_dir", ".")),
        diagnostics_levels=diagnostics_levels,
        diagnostics_samples=diagnostics_samples,
    )


def serialize_config(config: RunConfig) -> str:
    """Canonical JSON for a config; parse_config inverts it exactly."""
    out = {
        "model": config.model,
        "model_params": config.model_params,
        "estimator": config.estimator,
        "eps": list(config.eps),
        "seed": config.seed,
        "omega": config.omega,
        "L0": config.l0,
        "N_star": config.n_star,
        "M0": config.m0,
        "L_max": config.l_max,
        "is_enabled": config.is_enabled,
        "output_dir": config.output_dir,
        "diagnostics_levels": config.diagnostics_levels,
        "diagnostics_samples": config.diagnostics_samples,
    }
    return json.dumps(out, sort_keys=True)


def _write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _csv(rows: list[tuple], header: str) -> str:
    lines = [header]
    lines.extend(",".join(_fmt(v) for v in row) for row in rows)
    return "\n".join(lines) + "\n"


def run_rate_study(config: RunConfig, threads: int = 1) -> list[Path]:
    """Sample P_l and Z_l on levels 0..diagnostics_levels and write
    ``levels.csv`` and ``rate_summary.json``."""
    model = config.build_model()
    est = config.estimator_config()
    stream = RandomStream(config.seed)
    n = config.diagnostics_samples
    out = Path(config.output_dir)

    rows = []
    corr_means, corr_vars = [], []
    for level in range(config.diagnostics_levels + 1):
        m = est.inner_count(level)
        pv = sample_p_values(model, m, 0, n, stream, use_is=config.is_enabled, threads=threads)
        zv = sample_level_values(model, est, level, 0, n, stream, threads=threads)
        cost = per_sample_cost(model, m, config.is_enabled)
        zs = stats_from_values(zv, cost, level)
        rows.append((
            level,
            float(np.mean(pv)), float(np.var(pv, ddof=1)),
            zs.mean, zs.variance, zs.kurtosis, cost,
        ))
        if level >= 1:
            corr_means.append(zs.mean)
            corr_vars.append(zs.variance)

    try:
        alpha_hat, beta_hat = estimate_rates(corr_means, corr_vars)
    except InsufficientDataError:
        alpha_hat = beta_hat = math.nan

    levels_path = out / "levels.csv"
    _write_atomic(levels_path, _csv(rows, "level,mean_P,var_P,mean_Z,var_Z,kurt_Z,cost"))
    summary = {
        "alpha_hat": alpha_hat,
        "beta_hat": beta_hat,
        "model": config.model,
        "levels": config.diagnostics_levels,
        "samples": n,
        "is_enabled": config.is_enabled,
    }
    summary_path = out / "rate_summary.json"
    _write_atomic(summary_path, json.dumps(summary, sort_keys=True) + "\n")
    return [levels_path, summary_path]


def _pilot_nmc_plan(model, est, config, eps, stream, threads):
    """Choose (L, N) for a real nested run: L from the extrapolated bias of
    pilot corrections, N from a pilot variance of P_L."""
    n_pilot = PILOT_SAMPLES
    means, variances = [], []
    for level in range(1, 5):
        zv = sample_level_values(model, est, level, 0, n_pilot, stream,
                                 use_is=config.is_enabled, threads=threads)
        means.append(float(np.mean(zv)))
        variances.append(float(np.var(zv, ddof=1)))
    alpha_hat, _ = estimate_rates(means, variances)
    target = math.sqrt(config.omega) * eps * (2.0 ** alpha_hat - 1.0)
    top = 4
    level = top
    predicted = abs(means[-1])
    while predicted > target and level < config.l_max:
        level += 1
        predicted = abs(means[-1]) * 2.0 ** (-alpha_hat * (level - top))
    m = est.inner_count(level)
    pv = sample_p_values(model, m, 0, n_pilot, stream, use_is=config.is_enabled, threads=threads)
    var_pl = float(np.var(pv, ddof=1))
    n = max(2, math.ceil(var_pl / ((1.0 - config.omega) * eps * eps)))
    return level, n, var_pl, alpha_hat


def run_estimate(config: RunConfig, threads: int = 1) -> list[Path]:
    """Run the configured estimator once per eps value; write ``runs.csv``
    (one row per eps) and ``allocation.csv`` (one row per eps and level)."""
    model = config.build_model()
    est = config.estimator_config()
    out = Path(config.output_dir)
    run_rows = []
    alloc_rows = []

    for i, eps in enumerate(config.eps):
        if config.estimator == "mlmc":
            adapt = AdaptiveConfig(
                eps=eps, omega=config.omega, l0=config.l0,
                n_star=config.n_star, l_max=config.l_max, seed=config.seed,
            )
            res = run_adaptive(model, est, adapt, threads=threads)
            top = res.max_level
            m_top = est.inner_count(top)
            pilot_stream = RandomStream(config.seed).child(3, i)
            pv = sample_p_values(model, m_top, 0, PILOT_SAMPLES, pilot_stream,
                                 use_is=config.is_enabled, threads=threads)
            nmc_cost = nmc_cost_model(
                float(np.var(pv, ddof=1)),
                per_sample_cost(model, m_top, config.is_enabled),
                eps, config.omega,
            )
            run_rows.append((eps, res.estimate, res.total_cost, top,
                             res.alpha_hat, res.beta_hat, nmc_cost))
            for rec in res.levels:
                alloc_rows.append((eps, rec.level, rec.n_samples, rec.variance, rec.cost_per_sample))
        else:
            stream = RandomStream(config.seed).child(4, i)
            level, n, var_pl, alpha_hat = _pilot_nmc_plan(model, est, config, eps, stream, threads)
            m = est.inner_count(level)
            estimate, _, cost = nmc_estimate(model, n, m, stream,
                                             use_is=config.is_enabled, threads=threads)
            nmc_cost = nmc_cost_model(var_pl, per_sample_cost(model, m, config.is_enabled),
                                      eps, config.omega)
            run_rows.append((eps, estimate, cost, level, alpha_hat, math.nan, nmc_cost))
            alloc_rows.append((eps, level, n, var_pl, per_sample_cost(model, m, config.is_enabled)))

    runs_path = out / "runs.csv"
    alloc_path = out / "allocation.csv"
    _write_atomic(runs_path, _csv(run_rows, "eps,estimate,total_cost,L,alpha_hat,beta_hat,nmc_model_cost"))
    _write_atomic(alloc_path, _csv(alloc_rows, "eps,level,N_level,var_level,cost_level"))
    return [runs_path, alloc_path]


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="eig-mlmc",
        description="Estimate expected information gain by nested or multilevel Monte Carlo.",
    )
    parser.add_argument("--config", required=True, help="path to a JSON run configuration")
    parser.add_argument("--mode", choices=["estimate", "rate-study"], default="estimate")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--output-dir", default=None, help="override the config output directory")
    parser.add_argument("--threads", type=int, default=0,
                        help="worker threads (0 = auto); never affects results")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
    except OSError as exc:
        print(f"error: cannot read config {args.config}: {exc}", file=sys.stderr)
        return 4
    try:
        config = parse_config(text)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    if args.seed is not None:
        config = dataclasses.replace(config, seed=args.seed)
    if args.output_dir is not None:
        config = dataclasses.replace(config, output_dir=args.output_dir)
    threads = args.threads if args.threads > 0 else (os.cpu_count() or 1)

    try:
        if args.mode == "rate-study":
            paths = run_rate_study(config, threads=threads)
        else:
            paths = run_estimate(config, threads=threads)
    except NonConvergenceError as exc:
        trace_path = Path(config.output_dir) / "trace.json"
        try:
            _write_atomic(trace_path, json.dumps(
                [rec.__dict__ for rec in exc.trace], sort_keys=True, default=repr) + "\n")
        except OSError as io_exc:
            print(f"error: cannot write {trace_path}: {io_exc}", file=sys.stderr)
            return 4
        print(f"error: {exc} (trace written to {trace_path})", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"error: I/O failure: {exc}", file=sys.stderr)
        return 4

    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    sys.exit(main())
