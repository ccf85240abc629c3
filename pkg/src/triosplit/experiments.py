"""Experiment drivers: configuration, presets, trial loops, result tables.

A run is deterministic in the base seed: trial t derives its stream from
(seed + t) plus the grid cell indices, instances are generated once per
trial and shared by every method, and rows are emitted in a fixed order
(trials first, then per-method aggregates), so rewriting the same
experiment yields byte-identical output.
"""

from __future__ import annotations

import configparser
import json
from dataclasses import dataclass, field, fields
from typing import Optional

import numpy as np

from . import cs as cs_mod
from . import matcomp as mc_mod
from .datagen import DctSpec, add_noise, gen_dct_matrix, gen_low_rank, gen_sparse_signal, observe, sample_omega
from .linalg import masked_relative_residual
from .matcomp import CompletionInstance, default_masked_rule, rmse
from .ratings import load_ratings, split_observations
from .splitting import (CONVERGED, DIVERGED, StoppingRule, lambda_threshold,
                        max_step_size)

TASKS = ("matcomp_synth", "matcomp_ratings", "cs_recovery", "cs_noise", "diagnose")
MATCOMP_METHODS = ("dys", "drs", "svp", "svt")
CS_METHODS = ("dys", "dca", "admm")
_CS_ALIASES = {"dys_l12": "dys", "dca_l12": "dca", "admm_lasso": "admm"}


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    task: str = "matcomp_synth"
    methods: tuple = ()
    trials: int = 5
    seed: int = 0
    # completion grids
    n: int = 300
    r: int = 10
    p: float = 0.3
    lam: Optional[float] = None
    ratings_path: Optional[str] = None
    ranks: tuple = (5, 10)
    test_fraction: float = 0.2
    # sensing grids
    m: int = 100
    sparsity_levels: tuple = (5,)
    refinement: int = 10
    min_sep: Optional[int] = None
    sigmas: tuple = (0.0,)
    # solver overrides
    k_init: Optional[float] = None
    max_iter: Optional[int] = None
    beta: float = 1.0
    # diagnose inputs
    L: float = 1.0
    l: float = 0.0
    # output
    out: Optional[str] = None
    fmt: str = "csv"

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.fmt not in ("csv", "json"):
            raise ConfigError(f"unknown format {self.fmt!r}")
        object.__setattr__(self, "methods", _normalize_methods(self.task, self.methods))
        if self.task == "matcomp_ratings" and not self.ratings_path:
            raise ConfigError("matcomp_ratings needs a ratings file path")


def _normalize_methods(task, methods):
    if task == "diagnose":
        return ()
    if isinstance(methods, str):
        methods = tuple(s.strip() for s in methods.split(",") if s.strip())
    methods = tuple(str(m).lower() for m in methods)
    methods = tuple(_CS_ALIASES.get(m, m) for m in methods)
    known = MATCOMP_METHODS if task.startswith("matcomp") else CS_METHODS
    if not methods:
        if task == "matcomp_ratings":
            return ("svp", "drs", "dys")
        return known
    for m in methods:
        if m not in known:
            raise ConfigError(f"unknown method {m!r} for task {task}; expected from {known}")
    return methods


PRESETS = {
    # five-seed synthetic completion table at desk scale
    "table1-desk": dict(task="matcomp_synth", methods=("dys", "drs", "svp", "svt"),
                        trials=5, n=300, r=10, p=0.3, lam=1.5e-6),
    # noiseless sparse recovery across sparsity levels
    "cs-noiseless-desk": dict(task="cs_recovery", methods=("admm", "dca", "dys"),
                              trials=10, m=100, n=1500, refinement=10,
                              sparsity_levels=(5, 9, 15, 17, 20), sigmas=(0.0,)),
    # noisy sparse recovery at one sparsity level
    "cs-noise-desk": dict(task="cs_noise", methods=("admm", "dca", "dys"),
                          trials=10, m=100, n=1500, refinement=10,
                          sparsity_levels=(5,), sigmas=(0.01, 0.005, 0.001, 0.0005)),
    # held-out ratings evaluation over a small rank sweep
    "ratings-desk": dict(task="matcomp_ratings", methods=("svp", "drs", "dys"),
                         trials=1, ranks=(5, 10), test_fraction=0.2, lam=1e-3),
    # long-running, full-size counterparts; hours of compute, not part of
    # the acceptance gate
    "table1-full": dict(task="matcomp_synth", methods=("dys", "drs", "svp", "svt"),
                        trials=5, n=3000, r=10, p=0.08, lam=1.5e-6,
                        max_iter=5000),
    "cs-noiseless-full": dict(task="cs_recovery", methods=("admm", "dca", "dys"),
                              trials=100, m=100, n=2000, refinement=10,
                              sparsity_levels=(5, 9, 15, 17, 20), sigmas=(0.0,)),
    "cs-noise-full": dict(task="cs_noise", methods=("admm", "dca", "dys"),
                          trials=100, m=100, n=2000, refinement=10,
                          sparsity_levels=(5, 9, 15, 17, 20),
                          sigmas=(0.01, 0.005, 0.001, 0.0005)),
}

_FIELD_NAMES = {f.name for f in fields(ExperimentConfig)}
_TUPLE_INT_FIELDS = {"sparsity_levels", "ranks"}
_TUPLE_FLOAT_FIELDS = {"sigmas"}
_CONFIG_KEY_ALIASES = {"s": "sparsity_levels", "f": "refinement", "sigma": "sigmas",
                       "k": "k_init", "rank": "r", "lambda": "lam", "format": "fmt"}


def build_config(preset=None, config_path=None, overrides=None, base=None):
    """Merge base defaults, preset, config file, and explicit overrides
    (later sources win)."""
    merged = dict(base or {})
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        merged.update(PRESETS[preset])
    if config_path is not None:
        merged.update(_read_config_file(config_path))
    for key, value in (overrides or {}).items():
        if value is not None:
            merged[key] = value
    merged = {k: _coerce(k, v) for k, v in ((_CONFIG_KEY_ALIASES.get(k, k), v) for k, v in merged.items())}
    unknown = set(merged) - _FIELD_NAMES
    if unknown:
        raise ConfigError(f"unknown configuration keys {sorted(unknown)}")
    try:
        return ExperimentConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _coerce(key, value):
    if key in _TUPLE_INT_FIELDS:
        return _as_tuple(value, int)
    if key in _TUPLE_FLOAT_FIELDS:
        return _as_tuple(value, float)
    if key == "methods" and isinstance(value, str):
        return tuple(s.strip() for s in value.split(",") if s.strip())
    if isinstance(value, str):
        hints = {"trials": int, "seed": int, "n": int, "r": int, "m": int,
                 "refinement": int, "min_sep": int, "max_iter": int,
                 "p": float, "lam": float, "test_fraction": float,
                 "k_init": float, "beta": float, "L": float, "l": float}
        caster = hints.get(key)
        if caster is int:
            return int(float(value))
        if caster is float:
            return float(value)
    return value


def _as_tuple(value, caster):
    if isinstance(value, str):
        value = value.replace(",", " ").split()
    try:
        items = tuple(caster(float(v)) if caster is int else caster(v) for v in np.atleast_1d(value))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"cannot parse list value {value!r}") from exc
    return items


def _read_config_file(path):
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read config file {path}")
    merged = {}
    for section in parser.sections():
        if section not in ("experiment", "instance", "solver", "output"):
            raise ConfigError(f"{path}: unknown section [{section}]")
        for key, value in parser.items(section):
            merged[key] = value
    return merged


# ---------------------------------------------------------------------------
# result tables

@dataclass
class ResultTable:
    schema: str
    columns: tuple
    rows: list = field(default_factory=list)

    def add(self, **kv):
        unknown = set(kv) - set(self.columns)
        if unknown:
            raise KeyError(f"columns {sorted(unknown)} not in schema {self.schema}")
        self.rows.append({c: kv.get(c, "") for c in self.columns})

    @property
    def any_diverged(self):
        return any(row.get("status") == DIVERGED for row in self.rows)

    def select(self, **match):
        return [r for r in self.rows if all(r.get(k) == v for k, v in match.items())]

    def to_csv(self, f):
        if hasattr(f, "write"):
            self._write_csv(f)
        else:
            with open(f, "w") as handle:
                self._write_csv(handle)

    def _write_csv(self, handle):
        handle.write(f"#schema={self.schema}\n")
        handle.write(",".join(self.columns) + "\n")
        for row in self.rows:
            handle.write(",".join(_cell(row[c]) for c in self.columns) + "\n")

    def to_json(self, f):
        payload = {"schema": self.schema, "columns": list(self.columns), "rows": self.rows}
        text = json.dumps(payload, indent=2, allow_nan=True) + "\n"
        if hasattr(f, "write"):
            f.write(text)
        else:
            with open(f, "w") as handle:
                handle.write(text)

    def write(self, f, fmt="csv"):
        if fmt == "csv":
            self.to_csv(f)
        else:
            self.to_json(f)


def _cell(value):
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _mean_std(values):
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    return float(np.mean(arr)), float(np.std(arr))


# ---------------------------------------------------------------------------
# task drivers

MATCOMP_COLUMNS = ("record", "method", "seed", "n", "r", "p", "lambda",
                   "iterations", "rel_error", "err_std", "success_rate", "status")
RATINGS_COLUMNS = ("record", "method", "seed", "rank", "users", "items",
                   "train_count", "test_count", "lambda", "iterations", "rmse",
                   "test_residual", "rmse_std", "success_rate", "status")
CS_COLUMNS = ("record", "method", "seed", "m", "n", "s", "F", "sigma", "success",
              "rel_error", "sparsity", "iterations", "err_std", "sparsity_std",
              "success_rate", "status")
DIAGNOSE_COLUMNS = ("record", "gamma", "lambda_value")


def run_experiment(config):
    """Execute a configured experiment and return its result table."""
    driver = {
        "matcomp_synth": _run_matcomp_synth,
        "matcomp_ratings": _run_matcomp_ratings,
        "cs_recovery": _run_cs,
        "cs_noise": _run_cs,
        "diagnose": _run_diagnose,
    }[config.task]
    return driver(config)


def _matcomp_rule(config):
    max_iter = config.max_iter if config.max_iter is not None else 2000
    return default_masked_rule(max_iter=max_iter)


def _run_matcomp_completion(method, inst, M_true, config, k_default):
    k = config.k_init if config.k_init is not None else k_default
    rule = _matcomp_rule(config)
    if method == "dys":
        return mc_mod.dys_complete(inst, rule=rule, beta=config.beta, k=k, M_true=M_true)
    if method == "drs":
        return mc_mod.drs_complete(inst, rule=rule, k=k, M_true=M_true)
    if method == "svp":
        return mc_mod.svp_complete(inst, rule=rule, M_true=M_true)
    if method == "svt":
        return mc_mod.svt_complete(inst, rule=rule, M_true=M_true)
    raise ConfigError(f"unknown completion method {method!r}")


def _run_matcomp_synth(config):
    table = ResultTable("matcomp_synth.v1", MATCOMP_COLUMNS)
    lam = config.lam if config.lam is not None else mc_mod.DEFAULT_LAMBDA
    n, r, p = config.n, config.r, config.p
    m_count = int(round(p * n * n))
    per_method = {m: [] for m in config.methods}
    for trial in range(config.trials):
        seed = config.seed + trial
        rng = np.random.default_rng(seed)
        M, _ = gen_low_rank(n, r, rng)
        ridx, cidx = sample_omega(n, n, m_count, rng)
        inst = CompletionInstance(observe(M, ridx, cidx), (n, n), r, lam)
        for method in config.methods:
            res = _run_matcomp_completion(method, inst, M, config, k_default=1e6)
            per_method[method].append(res)
            table.add(record="trial", method=method, seed=seed, n=n, r=r, p=p,
                      iterations=res.iterations, rel_error=res.relative_error,
                      status=res.status, **{"lambda": lam})
    for method in config.methods:
        results = per_method[method]
        err_mean, err_std = _mean_std([res.relative_error for res in results])
        iters_mean, _ = _mean_std([res.iterations for res in results])
        rate = float(np.mean([res.status == CONVERGED for res in results]))
        table.add(record="aggregate", method=method, n=n, r=r, p=p,
                  iterations=iters_mean, rel_error=err_mean, err_std=err_std,
                  success_rate=rate, **{"lambda": lam})
    return table


def _run_matcomp_ratings(config):
    table = ResultTable("matcomp_ratings.v1", RATINGS_COLUMNS)
    lam = config.lam if config.lam is not None else 1e-3
    dataset = load_ratings(config.ratings_path)
    shape = (dataset.n_users, dataset.n_items)
    per_cell = {}
    for trial in range(config.trials):
        seed = config.seed + trial
        train, test = split_observations(dataset, seed, config.test_fraction)
        for rank in config.ranks:
            inst = CompletionInstance(train, shape, rank, lam)
            for method in config.methods:
                res = _run_matcomp_completion(method, inst, None, config, k_default=100.0)
                score = rmse(res.X_opt, test) if len(test) else float("nan")
                resid = (masked_relative_residual(res.X_opt, test)
                         if len(test) and np.linalg.norm(test.values) > 0 else float("nan"))
                per_cell.setdefault((method, rank), []).append((score, res))
                table.add(record="trial", method=method, seed=seed, rank=rank,
                          users=shape[0], items=shape[1], train_count=len(train),
                          test_count=len(test), iterations=res.iterations,
                          rmse=score, test_residual=resid, status=res.status,
                          **{"lambda": lam})
    for rank in config.ranks:
        for method in config.methods:
            cell = per_cell.get((method, rank), [])
            rmse_mean, rmse_std = _mean_std([s for s, _ in cell])
            iters_mean, _ = _mean_std([res.iterations for _, res in cell])
            rate = float(np.mean([res.status == CONVERGED for _, res in cell]))
            table.add(record="aggregate", method=method, rank=rank, users=shape[0],
                      items=shape[1], iterations=iters_mean, rmse=rmse_mean,
                      rmse_std=rmse_std, success_rate=rate, **{"lambda": lam})
    return table


def _cs_rule(config, max_iter_default):
    max_iter = config.max_iter if config.max_iter is not None else max_iter_default
    return StoppingRule(eps_abs=1e-7, eps_rel=1e-5, max_iter=max_iter)


def _run_cs_method(method, inst, config):
    if method == "admm":
        return cs_mod.admm_lasso(inst, rule=_cs_rule(config, 50000), lam=config.lam)
    if method == "dca":
        return cs_mod.dca_l12(inst, inner_rule=_cs_rule(config, 5000), lam=config.lam)
    if method == "dys":
        k = config.k_init if config.k_init is not None else cs_mod.DEFAULT_K
        return cs_mod.dys_l12(inst, rule=_cs_rule(config, 50000), lam=config.lam, k=k)
    raise ConfigError(f"unknown sensing method {method!r}")


def _run_cs(config):
    schema = "cs_noise.v1" if config.task == "cs_noise" else "cs_recovery.v1"
    table = ResultTable(schema, CS_COLUMNS)
    m, n, F = config.m, config.n, config.refinement
    sep = config.min_sep if config.min_sep is not None else 2 * F
    per_cell = {}
    for s_idx, s in enumerate(config.sparsity_levels):
        for g_idx, sigma in enumerate(config.sigmas):
            for trial in range(config.trials):
                seed = config.seed + trial
                rng = np.random.default_rng((seed, s_idx, g_idx))
                A = gen_dct_matrix(DctSpec(m, n, F), rng)
                x_true = gen_sparse_signal(n, s, sep, rng)
                b = A @ x_true
                if sigma > 0:
                    b = add_noise(b, sigma, rng)
                inst = cs_mod.SensingInstance(A, b, x_true=x_true)
                for method in config.methods:
                    rep = _run_cs_method(method, inst, config)
                    per_cell.setdefault((method, s, sigma), []).append(rep)
                    table.add(record="trial", method=method, seed=seed, m=m, n=n, s=s,
                              F=F, sigma=sigma, success=rep.success,
                              rel_error=rep.relative_error, sparsity=rep.sparsity,
                              iterations=rep.iterations, status=rep.status)
    over_successes = config.task == "cs_recovery"
    for s in config.sparsity_levels:
        for sigma in config.sigmas:
            for method in config.methods:
                reps = per_cell.get((method, s, sigma), [])
                pool = [r for r in reps if r.success] if over_successes else reps
                err_mean, err_std = _mean_std([r.relative_error for r in pool])
                sp_mean, sp_std = _mean_std([r.sparsity for r in reps])
                iters_mean, _ = _mean_std([r.iterations for r in reps])
                rate = float(np.mean([bool(r.success) for r in reps]))
                table.add(record="aggregate", method=method, m=m, n=n, s=s, F=F,
                          sigma=sigma, rel_error=err_mean, err_std=err_std,
                          sparsity=sp_mean, sparsity_std=sp_std,
                          iterations=iters_mean, success_rate=rate)
    return table


@dataclass(frozen=True)
class GammaReport:
    gamma0: float
    recommended: float
    grid: tuple
    constants: tuple = (1.0, 0.0, 1.0)

    def to_table(self):
        table = ResultTable("diagnose.v1", DIAGNOSE_COLUMNS)
        table.add(record="root", gamma=self.gamma0,
                  lambda_value=float(lambda_threshold(self.gamma0, *self.constants)))
        table.add(record="recommended", gamma=self.recommended,
                  lambda_value=float(lambda_threshold(self.recommended, *self.constants)))
        for g, val in self.grid:
            table.add(record="grid", gamma=float(g), lambda_value=float(val))
        return table


def diagnose_gamma(L, l, beta, grid_points=25):
    """Step-size report: threshold root, recommended fixed step, and a
    descent-coefficient table over a log grid around the root."""
    gamma0 = max_step_size(L, l, beta)
    grid_gammas = np.geomspace(gamma0 * 1e-3, gamma0 * 10.0, grid_points)
    grid = tuple((float(g), float(lambda_threshold(g, L, l, beta))) for g in grid_gammas)
    return GammaReport(gamma0=gamma0, recommended=0.99 * gamma0, grid=grid,
                       constants=(L, l, beta))


def _run_diagnose(config):
    return diagnose_gamma(config.L, config.l, config.beta).to_table()
