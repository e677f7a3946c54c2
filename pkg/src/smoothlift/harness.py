"""Seeded experiment driver: configuration, per-trial rows, checks and reports.

Random streams
    Trial ``t`` of experiment ``e`` draws from ``trial_stream(seed, code(e), t)``
    where ``code(e)`` is the experiment's fixed position in ``EXPERIMENTS``.
    Rows therefore do not depend on worker count or execution order.

Outputs
    ``format="csv"`` writes the per-trial rows to ``out`` and the record
    (without rows) to ``<out>.summary.json``.  ``format="json"`` writes the
    whole record, rows included, to ``out``.  Every file is written to a
    temporary sibling first and moved into place with ``os.replace``.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import lru_cache
from importlib import resources
from typing import Callable

import numpy as np

from . import __version__
from .boolfn import coordinates, fourier, majority, random_balanced_tables, random_function
from .junta import (
    alpha_correlated_error, alpha_correlated_variance, derandomized_rounding,
    dictator_advantage, junta_complexity, maj_best_halfjunta_agreement,
    random_density_distribution, rounding_expected_error, soft_junta_upper,
    SoftJuntaSearch,
)
from .lift import (
    all_block_inputs, clopper_pearson, concentration_trial, exact_lift_distance,
    random_lift,
)
from .smoothdist import Uniform, anti_block_distribution, random_smooth_explicit
from .streams import trial_stream
from .weaklearn import (
    LabeledSample, draw_sample, hypothesis_family, memorizing_weak_learner,
    threshold_bound, train_tables, uniform_convergence_size, weak_learn,
)

SCHEMA_VERSION = 1
CONSTANTS_ENV = "SMOOTHLIFT_CONSTANTS"
FIXED_KEY = 1 << 32  # stream key for per-run (not per-trial) draws

EXPERIMENTS = (
    "junta-maj", "soft-sandwich", "rounding", "concentration", "covering",
    "weak-learn-uniform", "weak-learn-adversarial", "memorize-baseline",
    "dictator-identity", "spectral", "corr-variance", "uniform-convergence",
)

CRITERIA = {
    1: "spectral correctness",
    2: "junta tightness",
    3: "dictator identity",
    4: "correlated-variance sandwich",
    5: "rounding",
    6: "soft/hard sandwich",
    7: "concentration",
    8: "covering",
    9: "weak learner, uniform",
    10: "weak learner, anti-block",
    11: "memorizing baseline",
    12: "uniform convergence",
    13: "reproducibility",
}


class ConfigError(ValueError):
    """Invalid configuration; the message names the violated precondition."""


class VersionMismatch(ValueError):
    pass


def load_constants(path: str | None = None) -> dict:
    path = path or os.environ.get(CONSTANTS_ENV)
    if path:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    return json.loads(resources.files("smoothlift").joinpath("constants.json").read_text("utf-8"))


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    k: int | None = None
    n: int | None = None
    m: int | None = None
    kappa: float | None = None
    trials: int | None = None
    delta: float | None = None
    grid: int | None = None
    u_override: int | None = None
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    fix_inner: bool = False
    tie_rule: str = "random"
    workers: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {', '.join(EXPERIMENTS)}")
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if self.tie_rule not in ("random", "+1", "-1"):
            raise ConfigError("tie rule must be random, +1 or -1")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        for name in ("k", "n", "m", "trials", "grid", "u_override"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ConfigError(f"{name} must be nonnegative")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config fields: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class Check:
    criterion: int
    name: str
    observed: object
    threshold: str
    passed: bool


@dataclass
class RunRecord:
    config: dict
    started: str
    finished: str
    columns: list
    rows: list
    summary: dict
    checks: list
    version: str
    schema: int = SCHEMA_VERSION

    @property
    def passed(self) -> bool | None:
        if not self.checks:
            return None
        return all(c.passed for c in self.checks)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows(self.rows)
        return buf.getvalue()

    def rows_digest(self) -> str:
        return hashlib.sha256(self.rows_csv().encode()).hexdigest()

    def to_dict(self, with_rows: bool = True) -> dict:
        out = {
            "schema": self.schema,
            "version": self.version,
            "config": self.config,
            "started": self.started,
            "finished": self.finished,
            "columns": self.columns,
            "summary": self.summary,
            "checks": [dataclasses.asdict(c) for c in self.checks],
            "passed": self.passed,
            "rows_sha256": self.rows_digest(),
        }
        if with_rows:
            out["rows"] = self.rows
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "RunRecord":
        return cls(data["config"], data["started"], data["finished"], data["columns"],
                   [list(r) for r in data.get("rows", [])], data["summary"],
                   [Check(**c) for c in data["checks"]], data["version"], data.get("schema", SCHEMA_VERSION))


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return int(v)
    return v


# -- experiment definitions ---------------------------------------------------
# Each trial function is module-level so worker processes can pickle it.  It
# takes the resolved parameters, the seed and a unit id and returns rows.


@dataclass(frozen=True)
class Experiment:
    name: str
    columns: tuple
    defaults: dict
    trial: Callable
    summarize: Callable
    validate: Callable = lambda p: None
    units: Callable = lambda p: range(p["trials"])

    @property
    def code(self) -> int:
        return EXPERIMENTS.index(self.name)


def _rng(p, seed, *keys):
    return trial_stream(seed, EXPERIMENTS.index(p["experiment"]), *keys)


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _col(rows, columns, name):
    i = columns.index(name)
    return np.array([float(r[i]) for r in rows])


# spectral

def _spectral_trial(p, seed, t):
    rng = _rng(p, seed, t)
    rows = []
    for k in range(1, p["k"] + 1):
        g = random_function(k, rng)
        spectrum = fourier(g)
        roundtrip = float(np.max(np.abs(spectrum.inverse() - g.values)))
        parseval = abs(spectrum.parseval() - 1.0)
        rows.append([k, t, roundtrip, parseval])
    return rows


def _direct_spectrum(g):
    chi = np.prod(np.where(
        ((np.arange(g.size)[:, None] >> np.arange(g.n)) & 1).astype(bool)[None, :, :],
        coordinates(g.n)[:, None, :], 1), axis=2)
    # chi[x, S] = prod_{i in S} x_i
    return chi.T @ g.values.astype(np.float64) / g.size


def _spectral_summary(p, cols, rows, c):
    tol = c["spectral"]["tolerance"]
    maj = majority(3)
    direct = _direct_spectrum(maj)
    fast = fourier(maj).coeffs
    expected = np.array([0, 0.5, 0.5, 0, 0.5, 0, 0, -0.5])
    worst_rt = float(_col(rows, cols, "roundtrip_error").max())
    worst_p = float(_col(rows, cols, "parseval_error").max())
    summary = {"max_roundtrip_error": worst_rt, "max_parseval_error": worst_p,
               "maj3_spectrum": fast.tolist()}
    checks = [
        Check(1, "roundtrip", worst_rt, f"<= {tol}", worst_rt <= tol),
        Check(1, "parseval", worst_p, f"<= {tol}", worst_p <= tol),
        Check(1, "maj3 spectrum exact", fast.tolist(), "== direct enumeration == +-0.5 pattern",
              bool(np.array_equal(fast, direct) and np.array_equal(fast, expected))),
    ]
    return summary, checks


# junta-maj

def _junta_validate(p):
    _require(p["k"] % 2 == 0, f"junta-maj needs even k (got k={p['k']})")
    _require(4 <= p["k"] <= 16, f"junta-maj needs 4 <= k <= 16 (got k={p['k']})")


def _junta_trial(p, seed, k):
    return [[k, maj_best_halfjunta_agreement(k)]]


def _junta_summary(p, cols, rows, c):
    g = majority(3)
    j25 = junta_complexity(g, 0.25)[0]
    j24 = junta_complexity(g, 0.24)[0]
    agree = {int(r[0]): float(r[1]) for r in rows}
    seq = [agree[k] for k in sorted(agree)]
    monotone = all(b <= a for a, b in zip(seq, seq[1:])) and all(v >= 0.75 for v in seq)
    summary = {"J_maj3_0.25": j25, "J_maj3_0.24": j24,
               "best_agreement": {str(k): v for k, v in agree.items()}}
    checks = [
        Check(2, "J(MAJ3, 0.25)", j25, "== 1", j25 == 1),
        Check(2, "J(MAJ3, 0.24)", j24, "== 3", j24 == 3),
        Check(2, "non-increasing toward 3/4", seq, "a(4) >= a(6) >= ... >= 0.75", monotone),
    ]
    if 6 in agree:
        want = c["junta_maj"]["half_junta_agreement_k6"]
        checks.insert(2, Check(2, "agreement(6)", agree[6], f"== {want}", agree[6] == want))
    return summary, checks


# dictator-identity

def _dictator_validate(p):
    _require(p["k"] % 2 == 1 and p["k"] >= 3, f"dictator-identity needs odd k >= 3 (got k={p['k']})")


def _dictator_trial(p, seed, t):
    rows = []
    for k in range(3, p["k"] + 1, 2):
        rng = _rng(p, seed, t, k)
        c = float(rng.uniform(0.1, 1.0))
        H = random_density_distribution(k, c, rng)
        d = dictator_advantage(H)
        rows.append([k, t, c, d.avg, d.mean_per_coordinate, abs(d.avg - d.mean_per_coordinate),
                     d.max_i, d.argmax])
    return rows


def _dictator_summary(p, cols, rows, c):
    const = c["dictator"]["constant"]
    tol = c["dictator"]["identity_tolerance"]
    gap = float(_col(rows, cols, "identity_gap").max())
    k = _col(rows, cols, "k")
    cc = _col(rows, cols, "c")
    ratio = _col(rows, cols, "max_advantage") / (cc * np.sqrt(k))
    avg_ratio = _col(rows, cols, "abs_sum_over_k") / (cc * np.sqrt(k))
    summary = {"max_identity_gap": gap, "min_max_advantage_over_c_sqrt_k": float(ratio.min()),
               "min_avg_advantage_over_c_sqrt_k": float(avg_ratio.min()), "constant": const}
    checks = [
        Check(3, "identity gap", gap, f"<= {tol}", gap <= tol),
        Check(3, "max dictator advantage / (c sqrt k)", float(ratio.min()), f">= {const}",
              bool(ratio.min() >= const)),
        Check(3, "avg dictator advantage / (c sqrt k)", float(avg_ratio.min()), f">= {const}",
              bool(avg_ratio.min() >= const)),
    ]
    return summary, checks


# corr-variance

def _random_instance(p, seed, t):
    rng = _rng(p, seed, t)
    k = int(rng.integers(1, p["k"] + 1))
    g = random_function(k, rng)
    alpha = rng.uniform(-1.0, 1.0, k)
    return k, g, alpha


def _corrvar_trial(p, seed, t):
    k, g, alpha = _random_instance(p, seed, t)
    direct, spectral = alpha_correlated_variance(g, alpha, tol=math.inf)
    err = alpha_correlated_error(g, alpha)
    return [[t, k, g.to_hex(), direct, spectral, abs(direct - spectral), err]]


def _corrvar_summary(p, cols, rows, c):
    tol = c["corr_variance"]["tolerance"]
    gap = float(_col(rows, cols, "gap").max())
    var = _col(rows, cols, "variance_direct")
    err = _col(rows, cols, "error")
    bad = int(np.count_nonzero((var < 2 * err - 1e-12) | (var > 4 * err + 1e-12)))
    summary = {"max_gap": gap, "sandwich_violations": bad}
    checks = [
        Check(4, "spectral vs direct variance", gap, f"<= {tol}", gap <= tol),
        Check(4, "2 error <= variance <= 4 error", bad, "== 0 violations", bad == 0),
    ]
    return summary, checks


# rounding

def _rounding_trial(p, seed, t):
    k, g, alpha = _random_instance(p, seed, t)
    rounded = rounding_expected_error(g, alpha)
    err = alpha_correlated_error(g, alpha)
    return [[t, k, g.to_hex(), rounded, err, int(rounded > 2 * err + 1e-12)]]


def _rounding_summary(p, cols, rows, c):
    bad = int(_col(rows, cols, "violation").sum())
    ratio = _col(rows, cols, "rounded_error") / np.maximum(_col(rows, cols, "alpha_error"), 1e-300)
    summary = {"violations": bad, "max_ratio": float(ratio.max())}
    return summary, [Check(5, "E_z[z-error] <= 2 alpha-error", bad, "== 0 violations", bad == 0)]


# soft-sandwich

def _sandwich_trial(p, seed, t):
    rng = _rng(p, seed, t)
    k = int(rng.integers(1, p["k"] + 1))
    g = random_function(k, rng)
    deltas = [p["delta"]] if p["delta"] is not None else [0.05, 0.1, 0.2]
    search = SoftJuntaSearch(grid=p["grid"], seed=int(rng.integers(1 << 31)))
    rows = []
    for delta in deltas:
        soft, alpha = soft_junta_upper(g, delta, search)
        J = junta_complexity(g, delta)[0]
        z = derandomized_rounding(g, alpha.alpha, delta)
        J4 = junta_complexity(g, min(1.0, 4 * delta))[0]
        size = -1 if z is None else int(z).bit_count()
        ok = soft <= J + 1e-9 and z is not None and J4 <= size <= 2 * soft + 1e-9
        rows.append([t, k, g.to_hex(), delta, soft, J, -1 if z is None else z, size, J4, int(not ok)])
    return rows


def _sandwich_summary(p, cols, rows, c):
    bad = int(_col(rows, cols, "violation").sum())
    soft = _col(rows, cols, "soft_upper")
    J = _col(rows, cols, "J")
    summary = {"violations": bad, "mean_soft_over_J": float(np.mean(soft[J > 0] / J[J > 0])) if (J > 0).any() else None}
    return summary, [Check(6, "soft <= J(delta) and J(4 delta) <= 2 soft via rounding", bad,
                           "== 0 violations", bad == 0)]


# concentration

@lru_cache(maxsize=4)
def _fixed_inner(seed, code, n, k):
    return random_balanced_tables(n, k, trial_stream(seed, code, FIXED_KEY))


def _concentration_trial(p, seed, t):
    fixed = _fixed_inner(seed, EXPERIMENTS.index(p["experiment"]), p["n"], p["k"]) if p["fix_inner"] else None
    total, pre, flipped, excess = concentration_trial(p["n"], p["k"], _rng(p, seed, t), fixed)
    return [[t, total, float(np.sum(pre**2)), int(flipped.sum()), int(np.abs(excess).sum())]]


def _concentration_summary(p, cols, rows, c):
    cc = c["concentration"]
    s = _col(rows, cols, "sum_alpha_sq")
    expected = p["k"] / ((1 << p["n"]) - 1)
    stderr = float(s.std(ddof=1) / math.sqrt(s.size)) if s.size > 1 else math.inf
    z = abs(float(s.mean()) - expected) / stderr if stderr > 0 else math.inf
    t = cc["tail_multiple"] * p["k"] / (1 << p["n"])
    tail = float(np.mean(s >= t))
    summary = {"mean": float(s.mean()), "expected": expected, "stderr": stderr, "z": z,
               "tail_threshold": t, "tail": tail}
    checks = [
        Check(7, "mean within sigmas", z, f"<= {cc['sigmas']}", z <= cc["sigmas"]),
        Check(7, f"Pr[sum >= {cc['tail_multiple']}k/2^n]", tail, f"<= {cc['tail_max']}", tail <= cc["tail_max"]),
    ]
    return summary, checks


# covering

@lru_cache(maxsize=4)
def _fixed_member(seed, code, n, k):
    return random_lift(majority(k), n, trial_stream(seed, code, FIXED_KEY))


def _covering_trial(p, seed, t):
    h = _fixed_member(seed, EXPERIMENTS.index(p["experiment"]), p["n"], p["k"])
    F = random_lift(h.outer, p["n"], _rng(p, seed, t))
    d = exact_lift_distance(h, F)
    return [[t, d, int(d <= p["delta"])]]


def _covering_summary(p, cols, rows, c):
    cc = c["covering"]
    d = _col(rows, cols, "distance")
    hits = int(_col(rows, cols, "within_radius").sum())
    upper = clopper_pearson(hits, d.size)[1]
    mean = float(d.mean())
    summary = {"hits": hits, "radius": p["delta"], "clopper_pearson_upper": upper, "mean_distance": mean}
    checks = [
        Check(8, f"members within {p['delta']}", hits, "== 0", hits == 0),
        Check(8, "mean distance", mean, f"within {cc['mean_center']} +- {cc['mean_tolerance']}",
              abs(mean - cc["mean_center"]) <= cc["mean_tolerance"]),
    ]
    return summary, checks


# weak learner

def _weak_trial(p, seed, t):
    rng = _rng(p, seed, t)
    F = random_lift(majority(p["k"]), p["n"], rng)
    if p["experiment"] == "weak-learn-adversarial":
        D = anti_block_distribution(F, rng)
    else:
        D = Uniform(p["n"], p["k"])
    r = weak_learn(F, D, p["m"], rng, kappa=p["kappa"], u=p["u_override"], eval_samples=p["eval_samples"])
    d = r.diagnostics
    return [[t, D.kappa, d["u"], d["tau"], d["constant"] or "", d["validation_advantage"], d["advantage"],
             d["advantage_stderr"], d["g_correlation"], d["tail"], d["per_block_correlations"][0],
             float(np.mean(d["per_block_correlations"])), d["label_bias"]]]


def _weak_validate(p):
    _require(p["k"] % 2 == 1, f"weak learning runs on MAJ_k with odd k (got k={p['k']})")
    _require(p["n"] >= 1, "inner functions need n >= 1")


def _weak_uniform_summary(p, cols, rows, c):
    cc = c["weak_learn_uniform"]
    adv = _col(rows, cols, "advantage")
    tail = _col(rows, cols, "tail")
    gc = _col(rows, cols, "g_correlation")
    scale = adv.size / 100
    pos = int(np.count_nonzero(adv > 0))
    tails = int(np.count_nonzero(tail <= 1 / p["k"] ** 2))
    summary = {"runs": adv.size, "positive": pos, "mean_advantage": float(adv.mean()),
               "mean_g_correlation": float(gc.mean()), "tail_ok": tails,
               "pilot_seed": c["pilot"]["seed"]}
    checks = [
        Check(9, "positive advantage runs", pos, f">= {cc['positive_runs_min']}%", pos >= cc["positive_runs_min"] * scale),
        Check(9, "mean advantage", float(adv.mean()), f">= {cc['mean_advantage_min']} (pilot-frozen)",
              adv.mean() >= cc["mean_advantage_min"]),
        Check(9, "mean g correlation", float(gc.mean()), f">= {cc['g_correlation_mean_min']}",
              gc.mean() >= cc["g_correlation_mean_min"]),
        Check(9, "tail <= 1/k^2 runs", tails, f">= {cc['tail_runs_min']}%", tails >= cc["tail_runs_min"] * scale),
    ]
    return summary, checks


def _weak_adv_summary(p, cols, rows, c):
    cc = c["weak_learn_adversarial"]
    adv = _col(rows, cols, "advantage")
    b1 = _col(rows, cols, "block1_correlation")
    kappa = float(_col(rows, cols, "kappa").max())
    sep = int(np.count_nonzero((b1 < 0) & (adv > 0)))
    summary = {"runs": adv.size, "kappa": kappa, "separated": sep, "mean_advantage": float(adv.mean()),
               "mean_block1_correlation": float(b1.mean())}
    checks = [
        Check(10, "anti-block kappa", kappa, f"<= {cc['kappa_max']}", kappa <= cc["kappa_max"]),
        Check(10, "block-1 corr < 0 and advantage > 0 runs", sep, f">= {cc['separation_runs_min']}%",
              sep >= cc["separation_runs_min"] * adv.size / 100),
    ]
    return summary, checks


# memorize-baseline

def _memorize_trial(p, seed, t):
    rng = _rng(p, seed, t)
    n, k = p["n"], p["k"]
    D = random_smooth_explicit(n, k, p["kappa"], rng)
    F = random_lift(majority(k), n, rng)
    X = all_block_inputs(n, k)
    target = F(X).astype(np.float64)
    pmf = D.pmf()
    idx = rng.choice(pmf.size, size=p["m"], p=pmf)
    tie = p["tie_rule"] if p["tie_rule"] == "random" else int(p["tie_rule"])
    h = memorizing_weak_learner(idx, target[idx].astype(np.int8), pmf.size, tie)
    exact = h.expected_advantage(pmf, target)
    seen = np.zeros(pmf.size, dtype=bool)
    seen[idx] = True
    oracle = math.fsum(pmf[seen])
    if tie != "random":
        oracle += math.fsum(tie * pmf[~seen] * target[~seen])
    reps = p["mc_reps"]
    draws = np.array([float(np.dot(pmf, h.predict(np.arange(pmf.size), rng) * target)) for _ in range(reps)])
    sd = float(draws.std(ddof=1)) if reps > 1 else 0.0
    se = sd / math.sqrt(reps)
    return [[t, int(seen.sum()), oracle, exact, abs(exact - oracle), float(draws.mean()), se]]


def _memorize_summary(p, cols, rows, c):
    cc = c["memorize"]
    gap = float(_col(rows, cols, "identity_gap").max())
    diff = _col(rows, cols, "mc_mean") - _col(rows, cols, "exact_advantage")
    se = _col(rows, cols, "mc_stderr")
    # one pooled test; a max over per-instance z would inflate the false-alarm rate
    pooled_se = math.sqrt(float(np.sum(se**2)))
    total = float(np.sum(diff))
    if pooled_se > 0:
        z = abs(total) / pooled_se
    else:
        z = 0.0 if abs(total) <= cc["exact_tolerance"] else math.inf
    per = np.divide(np.abs(diff), se, out=np.zeros_like(se), where=se > 0)
    summary = {"max_identity_gap": gap, "pooled_z": z, "max_instance_z": float(per.max())}
    checks = [
        Check(11, "exact expected advantage vs mass of S", gap, f"<= {cc['exact_tolerance']}", gap <= cc["exact_tolerance"]),
        Check(11, "Monte Carlo over ties (pooled z)", z, f"<= {cc['sigmas']} sigma", z <= cc["sigmas"]),
    ]
    return summary, checks


# uniform-convergence

def _uc_trial(p, seed, t):
    cc = p["uc"]
    rng = _rng(p, seed, t)
    n, k = p["n"], p["k"]
    F = random_lift(majority(k), n, rng)
    D = random_smooth_explicit(n, k, p["kappa"], rng) if p["kappa"] > 1 else Uniform(n, k)
    u = p["u_override"] if p["u_override"] is not None else threshold_bound(k, D.kappa)
    tables = train_tables(draw_sample(F, D, p["m"], rng), n, k)
    family = hypothesis_family(tables, u)
    size = uniform_convergence_size(len(family), cc["eps"], cc["delta"])
    X = all_block_inputs(n, k)
    pmf = D.pmf()
    y = F(X).astype(np.int64)
    fresh = draw_sample(F, D, size, rng)
    fy = fresh.labels.astype(np.int64)
    worst = 0.0
    for h in family:
        true_err = float(np.dot(pmf, np.asarray(h(X), dtype=np.int64) != y))
        emp_err = float(np.mean(np.asarray(h(fresh.points), dtype=np.int64) != fy))
        worst = max(worst, abs(true_err - emp_err))
    return [[t, len(family), size, worst, int(worst <= cc["eps"])]]


def _uc_summary(p, cols, rows, c):
    cc = c["uniform_convergence"]
    ok = _col(rows, cols, "within_eps")
    frac = float(ok.mean())
    summary = {"sample_size": int(rows[0][2]), "fraction_within_eps": frac,
               "max_deviation": float(_col(rows, cols, "max_deviation").max())}
    return summary, [Check(12, f"simultaneous eps={cc['eps']} envelope", frac, f">= {cc['fraction_min']}",
                           frac >= cc["fraction_min"])]


_WEAK_COLUMNS = ("trial", "kappa", "u", "tau", "constant", "validation_advantage", "advantage",
                 "advantage_stderr", "g_correlation", "tail", "block1_correlation",
                 "mean_block_correlation", "label_bias")

REGISTRY = {e.name: e for e in (
    Experiment("spectral", ("k", "trial", "roundtrip_error", "parseval_error"),
               {"k": 10, "trials": 200}, _spectral_trial, _spectral_summary,
               validate=lambda p: _require(1 <= p["k"] <= 20, "spectral needs 1 <= k <= 20")),
    Experiment("junta-maj", ("k", "best_agreement"), {"k": 10, "trials": 1},
               _junta_trial, _junta_summary, _junta_validate,
               units=lambda p: range(4, p["k"] + 1, 2) if p["trials"] else range(0)),
    Experiment("dictator-identity", ("k", "trial", "c", "abs_sum_over_k", "mean_dictator_advantage",
                                     "identity_gap", "max_advantage", "argmax"),
               {"k": 7, "trials": 100}, _dictator_trial, _dictator_summary, _dictator_validate),
    Experiment("corr-variance", ("trial", "k", "g_hex", "variance_direct", "variance_spectral", "gap", "error"),
               {"k": 6, "trials": 100}, _corrvar_trial, _corrvar_summary,
               validate=lambda p: _require(1 <= p["k"] <= 12, "corr-variance needs 1 <= k <= 12")),
    Experiment("rounding", ("trial", "k", "g_hex", "rounded_error", "alpha_error", "violation"),
               {"k": 8, "trials": 200}, _rounding_trial, _rounding_summary,
               validate=lambda p: _require(1 <= p["k"] <= 12, "rounding needs 1 <= k <= 12")),
    Experiment("soft-sandwich", ("trial", "k", "g_hex", "delta", "soft_upper", "J", "rounded_mask",
                                 "rounded_size", "J_4delta", "violation"),
               {"k": 4, "trials": 50, "grid": 32}, _sandwich_trial, _sandwich_summary,
               validate=lambda p: _require(1 <= p["k"] <= 8, "soft-sandwich needs 1 <= k <= 8")),
    Experiment("concentration", ("trial", "sum_alpha_sq", "sum_alpha_sq_unbalanced", "flipped", "abs_excess"),
               {"n": 8, "k": 16, "trials": 10_000}, _concentration_trial, _concentration_summary,
               validate=lambda p: _require(p["n"] >= 1 and p["k"] >= 1, "concentration needs n, k >= 1")),
    Experiment("covering", ("trial", "distance", "within_radius"),
               {"n": 8, "k": 15, "trials": 1000, "delta": 0.01}, _covering_trial, _covering_summary,
               validate=lambda p: _require(p["k"] % 2 == 1 and p["n"] >= 1, "covering needs odd k and n >= 1")),
    Experiment("weak-learn-uniform", _WEAK_COLUMNS,
               {"n": 10, "k": 21, "m": 1024, "trials": 100}, _weak_trial, _weak_uniform_summary, _weak_validate),
    Experiment("weak-learn-adversarial", _WEAK_COLUMNS,
               {"n": 10, "k": 21, "m": 1024, "trials": 100}, _weak_trial, _weak_adv_summary, _weak_validate),
    Experiment("memorize-baseline", ("trial", "distinct_points", "mass_of_sample", "exact_advantage",
                                     "identity_gap", "mc_mean", "mc_stderr"),
               {"n": 3, "k": 3, "m": 64, "kappa": 2.0, "trials": 50}, _memorize_trial, _memorize_summary,
               validate=lambda p: _require(p["n"] * p["k"] <= 16 and p["k"] % 2 == 1,
                                           "memorize-baseline needs odd k and n*k <= 16")),
    Experiment("uniform-convergence", ("trial", "family_size", "sample_size", "max_deviation", "within_eps"),
               {"n": 2, "k": 5, "m": 64, "kappa": 1.0, "trials": 1000}, _uc_trial, _uc_summary,
               validate=lambda p: _require(p["n"] * p["k"] <= 16 and p["k"] % 2 == 1,
                                           "uniform-convergence needs odd k and n*k <= 16")),
)}


def resolve(config: ExperimentConfig, constants: dict | None = None) -> dict:
    """Parameters after defaults, validated."""
    constants = constants or load_constants()
    exp = REGISTRY[config.experiment]
    p = {"experiment": config.experiment, "k": None, "n": None, "m": None, "kappa": None,
         "trials": None, "delta": None, "grid": None}
    p.update(exp.defaults)
    for name in ("k", "n", "m", "kappa", "trials", "delta", "grid"):
        v = getattr(config, name)
        if v is not None:
            p[name] = v
    p.update(u_override=config.u_override, fix_inner=config.fix_inner, tie_rule=config.tie_rule,
             eval_samples=constants.get("eval_samples", 100_000), mc_reps=1000,
             uc=constants["uniform_convergence"])
    exp.validate(p)
    return p


def _write_atomic(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _trial_rows(args):
    fn, p, seed, unit = args
    return fn(p, seed, unit)


def run(config: ExperimentConfig, constants: dict | None = None) -> RunRecord:
    """Run an experiment, write its outputs (if ``config.out``) and return the record."""
    constants = constants or load_constants()
    exp = REGISTRY[config.experiment]
    p = resolve(config, constants)
    started = _now()
    units = list(exp.units(p))
    jobs = [(exp.trial, p, config.seed, u) for u in units]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            chunks = list(pool.map(_trial_rows, jobs, chunksize=max(1, len(jobs) // (4 * config.workers))))
    else:
        chunks = [_trial_rows(j) for j in jobs]
    rows = [[_fmt(v) for v in row] for chunk in chunks for row in chunk]
    if rows:
        summary, checks = exp.summarize(p, list(exp.columns), rows, constants)
        summary = {"status": "ok", **summary}
    else:
        summary, checks = {"status": "no data"}, []
    public = {k: v for k, v in p.items() if k not in ("uc",)}
    summary["parameters"] = public
    record = RunRecord(config.to_dict(), started, _now(), list(exp.columns), rows,
                       _jsonable(summary), checks, f"{__version__}+constants{constants.get('schema', 0)}")
    record.checks = [dataclasses.replace(c, observed=_jsonable(c.observed), passed=bool(c.passed)) for c in checks]
    if config.out:
        write(record, config.out, config.format)
    return record


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    return obj


def write(record: RunRecord, out: str, fmt: str = "csv") -> list[str]:
    if fmt == "json":
        _write_atomic(out, json.dumps(record.to_dict(), indent=2) + "\n")
        return [out]
    summary_path = out + ".summary.json"
    _write_atomic(out, record.rows_csv())
    _write_atomic(summary_path, json.dumps(record.to_dict(with_rows=False), indent=2) + "\n")
    return [out, summary_path]


# -- report ----------------------------------------------------------------------


@dataclass(frozen=True)
class ReportRow:
    criterion: int
    title: str
    status: str  # pass | fail | not run
    observed: str
    threshold: str


def _identity(record: RunRecord) -> str:
    cfg = dict(record.config)
    for key in ("out", "format", "workers"):
        cfg.pop(key, None)
    return json.dumps(cfg, sort_keys=True)


def report(records) -> list[ReportRow]:
    """One row per criterion; criterion 13 compares records that share a config."""
    records = list(records)
    versions = sorted({r.version for r in records})
    if len(versions) > 1:
        raise VersionMismatch(f"records come from different versions: {' vs '.join(versions)}")
    by_criterion: dict[int, list[Check]] = {}
    for r in records:
        for c in r.checks:
            by_criterion.setdefault(c.criterion, []).append(c)
    groups: dict[str, set] = {}
    for r in records:
        groups.setdefault(_identity(r), set()).add(r.rows_digest())
    repeated = {k: v for k, v in groups.items()
                if sum(_identity(r) == k for r in records) > 1}
    rows = []
    for num, title in CRITERIA.items():
        if num == 13:
            if not repeated:
                rows.append(ReportRow(13, title, "not run", "", "identical rows on rerun"))
                continue
            same = sum(len(v) == 1 for v in repeated.values())
            rows.append(ReportRow(13, title, "pass" if same == len(repeated) else "fail",
                                  f"{same}/{len(repeated)} configs identical", "all identical"))
            continue
        checks = by_criterion.get(num)
        if not checks:
            rows.append(ReportRow(num, title, "not run", "", ""))
            continue
        status = "pass" if all(c.passed for c in checks) else "fail"
        observed = "; ".join(f"{c.name}={_short(c.observed)}" for c in checks)
        threshold = "; ".join(c.threshold for c in checks)
        rows.append(ReportRow(num, title, status, observed, threshold))
    return rows


def _short(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    if isinstance(v, list):
        return "[" + ", ".join(_short(x) for x in v) + "]"
    return str(v)


def format_report(rows) -> str:
    lines = [f"{'#':>2}  {'criterion':<30} {'status':<8} observed | threshold"]
    for r in rows:
        lines.append(f"{r.criterion:>2}  {r.title:<30} {r.status:<8} {r.observed} | {r.threshold}")
    return "\n".join(lines)
