"""The lifted class Lift_n(g) = {g(f_1, ..., f_k) : f_i balanced on n bits}.

Block inputs are stored as integer arrays of shape ``(..., k)`` holding the
n-bit value of each block.  As a single n*k-bit integer, block ``i``
occupies bits ``[i*n, (i+1)*n)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .boolfn import (
    BooleanFunction,
    correlation,
    random_balanced_tables,
    rebalance_tables,
)
from .junta import DensityDistribution, channel_apply
from .streams import trial_stream


def blocks_from_index(index, n: int, k: int) -> np.ndarray:
    """Split n*k-bit integers (scalar or array, n*k <= 62) into block values."""
    idx = np.asarray(index, dtype=np.int64)
    shifts = np.arange(k, dtype=np.int64) * n
    return (idx[..., None] >> shifts) & ((1 << n) - 1)


def index_from_blocks(blocks, n: int) -> np.ndarray:
    b = np.asarray(blocks, dtype=np.int64)
    shifts = np.arange(b.shape[-1], dtype=np.int64) * n
    return np.sum(b << shifts, axis=-1)


def blocks_to_hex(blocks, n: int) -> str:
    """Hex of one block input as an n*k-bit integer (arbitrary size)."""
    value = 0
    for i, b in enumerate(np.asarray(blocks).tolist()):
        value |= int(b) << (i * n)
    width = max(1, (n * len(blocks) + 3) // 4)
    return format(value, f"0{width}x")


def blocks_from_hex(text: str, n: int, k: int) -> np.ndarray:
    value = int(text, 16)
    mask = (1 << n) - 1
    return np.array([(value >> (i * n)) & mask for i in range(k)], dtype=np.int64)


def all_block_inputs(n: int, k: int) -> np.ndarray:
    """Every block input of the n*k-bit domain, in index order."""
    if n * k > 24:
        raise ValueError("exhaustive enumeration is limited to 24 input bits")
    return blocks_from_index(np.arange(1 << (n * k), dtype=np.int64), n, k)


class UnbalancedInnerError(ValueError):
    def __init__(self, index: int):
        super().__init__(f"inner function {index} is not balanced")
        self.index = index


@dataclass(frozen=True)
class LiftedFunction:
    outer: BooleanFunction
    inner: tuple[BooleanFunction, ...]

    @property
    def k(self) -> int:
        return self.outer.n

    @property
    def n(self) -> int:
        return self.inner[0].n

    @property
    def domain_bits(self) -> int:
        return self.n * self.k

    def inner_table(self) -> np.ndarray:
        """(k, 2^n) int8 array of inner values."""
        return np.stack([f.values for f in self.inner])

    def inner_votes(self, blocks) -> np.ndarray:
        b = np.asarray(blocks, dtype=np.int64)
        table = self.inner_table()
        return table[np.arange(self.k), b]

    def __call__(self, blocks) -> np.ndarray:
        return evaluate_lift(self, blocks)

    def __neg__(self) -> "LiftedFunction":
        return LiftedFunction(-self.outer, self.inner)

    def negate_inner(self) -> "LiftedFunction":
        return LiftedFunction(self.outer, tuple(-f for f in self.inner))


def make_lift(outer: BooleanFunction, inner) -> LiftedFunction:
    inner = tuple(inner)
    if len(inner) != outer.n:
        raise ValueError(f"outer arity {outer.n} needs {outer.n} inner functions, got {len(inner)}")
    if len({f.n for f in inner}) != 1:
        raise ValueError("inner functions must share one arity")
    for i, f in enumerate(inner):
        if not f.is_balanced():
            raise UnbalancedInnerError(i)
    return LiftedFunction(outer, inner)


def random_lift(outer: BooleanFunction, n: int, rng: np.random.Generator) -> LiftedFunction:
    tables = random_balanced_tables(n, outer.n, rng)
    return LiftedFunction(outer, tuple(BooleanFunction.from_values(t) for t in tables))


def evaluate_lift(F: LiftedFunction, blocks) -> np.ndarray:
    """outer(f_1(X^(1)), ..., f_k(X^(k))) for one block input or a batch."""
    b = np.asarray(blocks, dtype=np.int64)
    if b.shape[-1] != F.k:
        raise ValueError(f"block input has {b.shape[-1]} blocks, expected {F.k}")
    if np.any(b < 0) or np.any(b >= 1 << F.n):
        raise ValueError("block value out of range")
    votes = F.inner_votes(b)
    outer_index = np.sum((votes > 0).astype(np.int64) << np.arange(F.k), axis=-1)
    out = F.outer.values[outer_index]
    return int(out) if out.ndim == 0 else out


def _check_shapes(F: LiftedFunction, G: LiftedFunction) -> None:
    if (F.n, F.k) != (G.n, G.k):
        raise ValueError(f"shape mismatch: (n, k) = {(F.n, F.k)} vs {(G.n, G.k)}")


def inner_correlations(F: LiftedFunction, G: LiftedFunction) -> np.ndarray:
    """alpha_i = E_x[f_i(x) f'_i(x)] for each block, exact."""
    _check_shapes(F, G)
    return np.array([correlation(f, g) for f, g in zip(F.inner, G.inner)])


def joint_cell_counts(f: BooleanFunction, g: BooleanFunction) -> np.ndarray:
    """2x2 counts of (f(x), g(x)); row/column 0 is -1, 1 is +1."""
    a = (f.values > 0).astype(np.int64)
    b = (g.values > 0).astype(np.int64)
    return np.bincount(2 * a + b, minlength=4).reshape(2, 2)


def exact_lift_distance(F: LiftedFunction, G: LiftedFunction) -> float:
    """dist(F, G) without enumerating the n*k-bit domain.

    Per block the pair (f_i(X), g_i(X)) has the joint law given by its 2x2
    cell counts, and blocks are independent, so the distance reduces to a
    sum over the 2^k outer votes of one side.
    """
    _check_shapes(F, G)
    if F.outer != G.outer:
        raise ValueError("exact lift distance needs equal outer functions")
    size = 1 << F.n
    marginals = []
    channels = []
    for f, g in zip(F.inner, G.inner):
        counts = joint_cell_counts(f, g)
        row = counts.sum(axis=1)
        marginals.append(row / size)
        with np.errstate(invalid="ignore", divide="ignore"):
            channels.append(np.where(row[:, None] > 0, counts / np.maximum(row, 1)[:, None], 0.5))
    # E[G outer(votes') | votes] for every vote pattern of F
    cond = channel_apply(G.outer.values.astype(np.float64), channels)
    weights = np.ones(1)
    for m in marginals:
        weights = np.concatenate([weights * m[0], weights * m[1]])
    agreement = np.sum(weights * F.outer.values * cond)
    return float((1 - agreement) / 2)


def enumerated_lift_distance(F: LiftedFunction, G: LiftedFunction) -> float:
    """dist(F, G) by enumerating every input; n*k <= 24."""
    _check_shapes(F, G)
    X = all_block_inputs(F.n, F.k)
    return float(np.mean(F(X) != G(X)))


def monte_carlo_distance(h, F: LiftedFunction, samples: int, rng: np.random.Generator) -> tuple[float, float]:
    """Uniform-input estimate of Pr[h(X) != F(X)] and its standard error."""
    X = rng.integers(0, 1 << F.n, size=(samples, F.k))
    disagree = np.asarray(h(X)) != F(X)
    est = float(disagree.mean())
    return est, float(np.sqrt(est * (1 - est) / samples))


def induced_distribution(H: DensityDistribution, inner) -> DensityDistribution:
    """Law of (f_1(X^(1)), ..., f_k(X^(k))) for X ~ H over n*k bits.

    If every f_i is balanced the output keeps H's density.
    """
    inner = tuple(inner)
    k = len(inner)
    n = inner[0].n
    if H.k != n * k:
        raise ValueError(f"distribution over {H.k} bits, expected n*k = {n * k}")
    if H.k > 20:
        raise ValueError("explicit induced distributions are limited to 20 input bits")
    X = blocks_from_index(np.arange(1 << H.k), n, k)
    table = np.stack([f.values for f in inner])
    votes = table[np.arange(k), X]
    index = np.sum((votes > 0).astype(np.int64) << np.arange(k), axis=-1)
    pmf = np.bincount(index, weights=H.pmf, minlength=1 << k)
    pmf = pmf / pmf.sum()
    if all(f.is_balanced() for f in inner):
        # raises if the density guarantee fails
        return DensityDistribution(k, pmf, H.c)
    return DensityDistribution(k, pmf, min(1.0, 1.0 / (pmf.max() * pmf.shape[0])))


@dataclass
class ConcentrationResult:
    n: int
    k: int
    samples: np.ndarray
    unbalanced_corr: np.ndarray
    flipped: np.ndarray
    excess: np.ndarray
    tail: dict

    @property
    def expected_mean(self) -> float:
        return self.k / ((1 << self.n) - 1)

    def mean(self) -> float:
        return float(self.samples.mean())

    def stderr(self) -> float:
        return float(self.samples.std(ddof=1) / np.sqrt(self.samples.size))


def hypergeometric_second_moment(n: int) -> float:
    """E[alpha^2] for a fixed balanced f and uniform balanced f' on n bits."""
    return 1.0 / ((1 << n) - 1)


def concentration_trial(n: int, k: int, rng: np.random.Generator, fixed_inner=None):
    """One draw of sum_i alpha_i^2 with the coupled balanced sampler diagnostics."""
    size = 1 << n
    f = fixed_inner if fixed_inner is not None else random_balanced_tables(n, k, rng)
    u = (2 * rng.integers(0, 2, (k, size)) - 1).astype(np.int8)
    w, flipped = rebalance_tables(u, rng)
    f64 = f.astype(np.int64)
    alpha = (f64 * w).sum(axis=1) / size
    pre = (f64 * u).sum(axis=1) / size
    excess = u.sum(axis=1, dtype=np.int64)
    return float(np.sum(alpha**2)), pre, flipped, excess


def concentration_experiment(
    n: int,
    k: int,
    trials: int,
    seed: int,
    t_grid=None,
    fix_inner: bool = False,
) -> ConcentrationResult:
    """Samples of sum_i alpha_i^2 between fixed and random balanced inner functions.

    Trial ``t`` uses the stream ``(seed, t)``.  By default the first-side
    functions are refreshed each trial; ``fix_inner`` draws them once.
    """
    fixed = random_balanced_tables(n, k, trial_stream(seed, 1 << 30)) if fix_inner else None
    samples = np.zeros(trials)
    pre = np.zeros((trials, k))
    flipped = np.zeros((trials, k), dtype=np.int64)
    excess = np.zeros((trials, k), dtype=np.int64)
    for t in range(trials):
        samples[t], pre[t], flipped[t], excess[t] = concentration_trial(n, k, trial_stream(seed, t), fixed)
    if t_grid is None:
        t_grid = [c * k / (1 << n) for c in (1, 2, 3, 4)]
    tail = {float(t): float(np.mean(samples >= t)) if trials else float("nan") for t in t_grid}
    return ConcentrationResult(n, k, samples, pre, flipped, excess, tail)


def clopper_pearson(hits: int, trials: int, confidence: float = 0.95) -> tuple[float, float]:
    """Two-sided Clopper-Pearson interval for a binomial proportion."""
    if trials == 0:
        return 0.0, 1.0
    a = 1 - confidence
    lo = 0.0 if hits == 0 else float(stats.beta.ppf(a / 2, hits, trials - hits + 1))
    hi = 1.0 if hits == trials else float(stats.beta.ppf(1 - a / 2, hits + 1, trials - hits))
    return lo, hi


@dataclass
class CoveringReport:
    trials: int
    radius: float
    distances: np.ndarray
    hits: int
    upper_bound: float
    method: str

    @property
    def fraction(self) -> float | None:
        return self.hits / self.trials if self.trials else None

    def mean_distance(self) -> float | None:
        return float(self.distances.mean()) if self.trials else None


def covering_statistic(
    outer: BooleanFunction,
    n: int,
    h,
    trials: int,
    seed: int,
    radius: float = 0.01,
    mc_samples: int = 10_000,
    confidence: float = 0.95,
) -> CoveringReport:
    """Fraction of random members F of Lift_n(outer) with dist(h, F) <= radius.

    ``h`` is any callable on block inputs.  Distances are exact when ``h`` is
    a lift member with the same outer function (via the per-block channel) or
    when n*k <= 20 (enumeration), and Monte Carlo otherwise.
    """
    k = outer.n
    if isinstance(h, LiftedFunction) and h.outer == outer:
        method = "channel"
    elif n * k <= 20:
        method = "enumeration"
    else:
        method = "monte-carlo"
    distances = np.zeros(trials)
    for t in range(trials):
        rng = trial_stream(seed, t)
        F = random_lift(outer, n, rng)
        if method == "channel":
            distances[t] = exact_lift_distance(h, F)
        elif method == "enumeration":
            X = all_block_inputs(n, k)
            distances[t] = float(np.mean(np.asarray(h(X)) != F(X)))
        else:
            distances[t] = monte_carlo_distance(h, F, mc_samples, rng)[0]
    hits = int(np.count_nonzero(distances <= radius))
    return CoveringReport(trials, radius, distances, hits, clopper_pearson(hits, trials, confidence)[1], method)


def balanced_functions(n: int) -> list[BooleanFunction]:
    """Every balanced function on n bits (n <= 3)."""
    if not 1 <= n <= 3:
        raise ValueError("enumeration of balanced functions is limited to n <= 3")
    from itertools import combinations

    size = 1 << n
    out = []
    for plus in combinations(range(size), size // 2):
        v = -np.ones(size, dtype=np.int8)
        v[list(plus)] = 1
        out.append(BooleanFunction.from_values(v))
    return out


def exact_covering_probability(outer: BooleanFunction, n: int, h, radius: float = 0.01) -> float:
    """Pr over uniform F in Lift_n(outer) of dist(h, F) <= radius, by enumeration."""
    from itertools import product

    fs = balanced_functions(n)
    X = all_block_inputs(n, outer.n)
    hv = np.asarray(h(X))
    hits = total = 0
    for inner in product(fs, repeat=outer.n):
        F = LiftedFunction(outer, inner)
        total += 1
        hits += float(np.mean(hv != F(X))) <= radius
    return hits / total
