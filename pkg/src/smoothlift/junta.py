"""Junta complexity, alpha-correlated quantities and soft junta complexity.

The alpha-correlated channel draws ``x`` uniformly and sets each ``y_i`` to
``x_i`` with probability ``(1 + alpha_i)/2``.  Its conditional mean
``E[g(y) | x]`` is the noise operator applied to ``g``; all quantities here
are computed from it exactly, by Fourier transform.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from .boolfn import (
    BooleanFunction,
    coordinates,
    fourier,
    fwht,
    majority,
    popcounts,
    sign,
)

TOL = 1e-9
# slack on "<= delta" comparisons against floating point errors
FEASIBILITY_SLACK = 1e-12


def _pairwise_sum(a) -> float:
    return math.fsum(np.asarray(a, dtype=np.float64).ravel())


@dataclass(frozen=True)
class CorrelationVector:
    alpha: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        if a.ndim != 1:
            raise ValueError("alpha must be one-dimensional")
        if np.any(np.abs(a) > 1 + 1e-12):
            raise ValueError("alpha entries must lie in [-1, 1]")
        object.__setattr__(self, "alpha", np.clip(a, -1.0, 1.0))

    @property
    def k(self) -> int:
        return self.alpha.shape[0]

    def squared_norm(self) -> float:
        return float(np.sum(self.alpha**2))

    def to_json(self) -> str:
        return json.dumps({"k": self.k, "alpha": [float(a) for a in self.alpha]})

    @classmethod
    def from_json(cls, text: str) -> "CorrelationVector":
        obj = json.loads(text)
        vec = cls(np.array(obj["alpha"], dtype=np.float64))
        if vec.k != obj["k"]:
            raise ValueError("k does not match the length of alpha")
        return vec


def _as_alpha(alpha) -> np.ndarray:
    if isinstance(alpha, CorrelationVector):
        return alpha.alpha
    return CorrelationVector(np.asarray(alpha, dtype=np.float64)).alpha


@dataclass(frozen=True)
class DensityDistribution:
    """An explicit pmf over ``{-1,1}^k`` with density ``c``.

    Density ``c`` means no point has mass above ``1/(c 2^k)``.
    """

    k: int
    pmf: np.ndarray
    c: float

    def __post_init__(self):
        p = np.asarray(self.pmf, dtype=np.float64)
        if p.shape != (1 << self.k,):
            raise ValueError(f"pmf must have 2^{self.k} entries")
        if np.any(p < 0):
            raise ValueError("pmf has negative entries")
        if abs(_pairwise_sum(p) - 1.0) > 1e-12:
            raise ValueError("pmf does not sum to 1")
        if not 0 < self.c <= 1:
            raise ValueError("density must lie in (0, 1]")
        if p.max() > 1.0 / (self.c * p.shape[0]) + 1e-12:
            raise ValueError(f"pmf violates density {self.c}: max entry {p.max()}")
        object.__setattr__(self, "pmf", p)

    @classmethod
    def uniform(cls, k: int) -> "DensityDistribution":
        return cls(k, np.full(1 << k, 1.0 / (1 << k)), 1.0)

    @classmethod
    def uniform_on(cls, k: int, support) -> "DensityDistribution":
        """Uniform on a set of indices; density is ``|support| / 2^k``."""
        idx = np.unique(np.asarray(support, dtype=np.int64))
        pmf = np.zeros(1 << k)
        pmf[idx] = 1.0 / idx.size
        return cls(k, pmf, idx.size / (1 << k))

    def observed_density(self) -> float:
        return 1.0 / (self.pmf.max() * self.pmf.shape[0])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["index", "probability"])
        for i, p in enumerate(self.pmf):
            writer.writerow([i, repr(float(p))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, c: float) -> "DensityDistribution":
        rows = list(csv.DictReader(io.StringIO(text)))
        k = len(rows).bit_length() - 1
        if len(rows) != 1 << k:
            raise ValueError("pmf CSV must have 2^k rows")
        pmf = np.zeros(len(rows))
        for row in rows:
            pmf[int(row["index"])] = float(row["probability"])
        return cls(k, pmf, c)


def random_density_distribution(k: int, c: float, rng: np.random.Generator) -> DensityDistribution:
    """A random pmf of density ``c``: random weights water-filled under the cap."""
    size = 1 << k
    cap = 1.0 / (c * size)
    w = rng.exponential(size=size) * (rng.random(size) < rng.uniform(c, 1.0))
    if w.sum() == 0:
        w[rng.integers(size)] = 1.0
    # water-fill: scale up, clip at cap, repeat until mass is 1
    p = np.zeros(size)
    free = w > 0
    remaining = 1.0
    while remaining > 1e-15:
        if not free.any():
            free = p < cap
            w = np.where(free, 1.0, 0.0)
        scale = remaining / w[free].sum()
        trial = p + np.where(free, w * scale, 0.0)
        over = trial > cap
        p = np.minimum(trial, cap)
        remaining = 1.0 - p.sum()
        free = free & ~over
    p /= p.sum()
    return DensityDistribution(k, p, c)


@dataclass(frozen=True)
class JuntaCertificate:
    support: int
    inner: BooleanFunction
    achieved_distance: float

    @property
    def size(self) -> int:
        return bin(self.support).count("1")

    def positions(self) -> list[int]:
        return [i for i in range(self.support.bit_length()) if self.support >> i & 1]

    def as_function(self, k: int) -> BooleanFunction:
        """The junta x -> inner(x_S) as a function on k bits."""
        return BooleanFunction.from_values(self.inner.values[project(k, self.support)])

    def to_json(self) -> str:
        return json.dumps(
            {
                "support": self.support,
                "inner_arity": self.inner.n,
                "inner_hex": self.inner.to_hex(),
                "achieved_distance": self.achieved_distance,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "JuntaCertificate":
        obj = json.loads(text)
        inner = BooleanFunction.from_hex(obj["inner_arity"], obj["inner_hex"])
        return cls(obj["support"], inner, obj["achieved_distance"])


def project(k: int, mask: int) -> np.ndarray:
    """For every x in {0..2^k-1}, the compressed index of x restricted to ``mask``."""
    x = np.arange(1 << k, dtype=np.int64)
    y = np.zeros_like(x)
    j = 0
    for i in range(k):
        if mask >> i & 1:
            y |= ((x >> i) & 1) << j
            j += 1
    return y


def _weights(g: BooleanFunction, H: DensityDistribution | None) -> np.ndarray | None:
    if H is None:
        return None
    if H.k != g.n:
        raise ValueError(f"distribution arity {H.k} does not match function arity {g.n}")
    return H.pmf


def best_junta_on(g: BooleanFunction, support: int, H: DensityDistribution | None = None) -> JuntaCertificate:
    """Optimal function of the coordinates in ``support``.

    The inner function is the sign of the conditional mean of ``g`` on each
    cell; empty cells get +1.
    """
    k = g.n
    if support >> k:
        raise ValueError(f"support {support:#x} not a subset of [{k}]")
    y = project(k, support)
    r = bin(support).count("1")
    w = _weights(g, H)
    if w is None:
        cell = np.bincount(y, weights=g.values, minlength=1 << r).astype(np.int64)
        inner = sign(cell)
        wrong = int(np.count_nonzero(inner[y] != g.values))
        dist = wrong / g.size
    else:
        cell = np.bincount(y, weights=w * g.values, minlength=1 << r)
        inner = sign(cell)
        dist = _pairwise_sum(w[inner[y] != g.values])
    return JuntaCertificate(support, BooleanFunction.from_values(inner), dist)


def masks_of_size(k: int, r: int) -> list[int]:
    """All subsets of [k] with r elements, as masks in ascending order."""
    return sorted(sum(1 << i for i in c) for c in combinations(range(k), r))


def junta_complexity(g: BooleanFunction, delta: float, H: DensityDistribution | None = None):
    """Smallest junta size reaching distance <= delta, with the first witness.

    Sizes are searched ascending and subsets in ascending mask order.
    """
    if not 0 <= delta <= 1:
        raise ValueError("delta must lie in [0, 1]")
    if g.n > 20:
        raise ValueError("exhaustive subset search is limited to arity 20")
    for r in range(g.n + 1):
        for mask in masks_of_size(g.n, r):
            cert = best_junta_on(g, mask, H)
            if cert.achieved_distance <= delta + FEASIBILITY_SLACK:
                return r, cert
    raise AssertionError("full support always achieves distance 0")


def maj_best_halfjunta_agreement(k: int) -> float:
    """Best agreement of any k/2-junta with MAJ_k under the uniform distribution."""
    if k % 2 or not 2 <= k <= 16:
        raise ValueError("k must be even and at most 16")
    g = majority(k)
    best = 0.0
    for mask in masks_of_size(k, k // 2):
        best = max(best, 1.0 - best_junta_on(g, mask).achieved_distance)
    return best


@dataclass(frozen=True)
class DictatorAdvantage:
    avg: float
    max_i: float
    argmax: int
    per_coordinate: np.ndarray = field(repr=False)

    @property
    def mean_per_coordinate(self) -> float:
        return _pairwise_sum(self.per_coordinate) / self.per_coordinate.shape[0]


def dictator_advantage(H: DensityDistribution, k: int | None = None) -> DictatorAdvantage:
    """Average and best advantage of dictators for MAJ_k under ``H``.

    ``avg`` is computed as (1/k) E_H|sum x_i|; ``per_coordinate`` holds
    E_H[MAJ_k(x) x_i] computed directly, and their mean must equal ``avg``.
    """
    k = H.k if k is None else k
    if k != H.k:
        raise ValueError("k must match the distribution arity")
    if k % 2 == 0:
        raise ValueError("k must be odd")
    coords = coordinates(k).astype(np.float64)
    maj = majority(k).values.astype(np.float64)
    per = np.array([_pairwise_sum(H.pmf * maj * coords[:, i]) for i in range(k)])
    abs_sum = _pairwise_sum(H.pmf * np.abs(coords.sum(axis=1))) / k
    i = int(np.argmax(per))
    return DictatorAdvantage(abs_sum, float(per[i]), i, per)


def noise_weights(alpha) -> np.ndarray:
    """prod_{i in S} alpha_i for every mask S."""
    a = _as_alpha(alpha)
    w = np.ones(1 << a.shape[0])
    for i, ai in enumerate(a):
        w.reshape(-1, 2, 1 << i)[:, 1, :] *= ai
    return w


def conditional_means(g: BooleanFunction, alpha) -> np.ndarray:
    """E[g(y) | x] for every x, from the spectrum: sum_S ghat(S) prod_{i in S} x_i alpha_i."""
    a = _as_alpha(alpha)
    if a.shape[0] != g.n:
        raise ValueError("alpha length must equal the arity of g")
    spectrum = fourier(g)
    smoothed = type(spectrum)(spectrum.k, spectrum.coeffs * noise_weights(a))
    return smoothed.inverse()


def conditional_mean(g: BooleanFunction, alpha, x: int) -> float:
    return float(conditional_means(g, alpha)[x])


def conditional_means_direct(g: BooleanFunction, alpha) -> np.ndarray:
    """Same as :func:`conditional_means` by applying the 2x2 channel per coordinate."""
    a = _as_alpha(alpha)
    return channel_apply(g.values.astype(np.float64), [_flip_channel(ai) for ai in a])


def _flip_channel(a: float) -> np.ndarray:
    # rows: x_i in (-1, +1); columns: y_i in (-1, +1)
    stay, flip = (1 + a) / 2, (1 - a) / 2
    return np.array([[stay, flip], [flip, stay]])


def channel_apply(values: np.ndarray, matrices) -> np.ndarray:
    """Out(x) = sum_y prod_i M_i[x_i, y_i] values(y), coordinatewise contraction.

    ``values`` is indexed by the input index; bit ``i`` of the index selects
    row/column 1 of ``M_i``.
    """
    k = len(matrices)
    out = np.asarray(values, dtype=np.float64).reshape((2,) * k)
    # axis j of the C-order reshape is coordinate k-1-j
    for i, m in enumerate(matrices):
        axis = k - 1 - i
        out = np.moveaxis(np.tensordot(m, out, axes=([1], [axis])), 0, axis)
    return out.reshape(-1)


def alpha_correlated_distance(g: BooleanFunction, h: BooleanFunction, alpha) -> float:
    """Pr[g(y) != h(x)] under the alpha-correlated channel."""
    t = conditional_means(g, alpha)
    return float(np.mean((1 - h.values * t) / 2))


def alpha_correlated_error(g: BooleanFunction, alpha) -> float:
    """min_h Pr[g(y) != h(x)] = E_x[(1 - |E[g(y)|x]|)/2]."""
    t = conditional_means(g, alpha)
    return float(np.mean((1 - np.abs(t)) / 2))


class ConsistencyError(ArithmeticError):
    """Two independent evaluations of the same quantity disagree."""


def alpha_correlated_variance(g: BooleanFunction, alpha, tol: float = TOL) -> tuple[float, float]:
    """E_x[Var(g(y) | x)], evaluated directly and from the spectrum.

    Returns ``(direct, spectral)`` and raises :class:`ConsistencyError` if they
    differ by more than ``tol``.
    """
    a = _as_alpha(alpha)
    t = conditional_means(g, a)
    direct = float(np.mean(1 - t**2))
    spectral = 1.0 - _pairwise_sum(fourier(g).coeffs ** 2 * noise_weights(a**2))
    if abs(direct - spectral) > tol:
        raise ConsistencyError(f"variance mismatch: direct {direct!r} vs spectral {spectral!r}")
    return direct, spectral


def rounding_distribution(alpha) -> tuple[np.ndarray, np.ndarray]:
    """All z in {0,1}^k (as masks) with probabilities prod Ber(alpha_i^2)."""
    a2 = _as_alpha(alpha) ** 2
    k = a2.shape[0]
    probs = np.ones(1 << k)
    for i, p in enumerate(a2):
        view = probs.reshape(-1, 2, 1 << i)
        view[:, 0, :] *= 1 - p
        view[:, 1, :] *= p
    return np.arange(1 << k), probs


def mask_to_alpha(k: int, mask: int) -> np.ndarray:
    return ((mask >> np.arange(k)) & 1).astype(np.float64)


def mask_errors(g: BooleanFunction) -> np.ndarray:
    """z-correlated error of g for every z in {0,1}^k (indexed by mask)."""
    return np.array([alpha_correlated_error(g, mask_to_alpha(g.n, z)) for z in range(g.size)])


def rounding_expected_error(g: BooleanFunction, alpha) -> float:
    """Exact E_z[error_z(g)] with z_i ~ Ber(alpha_i^2) independently."""
    if g.n > 12:
        raise ValueError("exact rounding enumeration is limited to arity 12")
    _, probs = rounding_distribution(alpha)
    return _pairwise_sum(probs * mask_errors(g))


def derandomized_rounding(g: BooleanFunction, alpha, delta: float) -> int | None:
    """A mask z with |z| <= 2 sum alpha_i^2 and error_z(g) <= 4 delta, if one exists.

    Among qualifying masks the one with smallest (|z|, mask) is returned.
    """
    budget = 2 * float(np.sum(_as_alpha(alpha) ** 2))
    errs = mask_errors(g)
    sizes = popcounts(g.size)
    ok = np.flatnonzero((sizes <= budget + FEASIBILITY_SLACK) & (errs <= 4 * delta + FEASIBILITY_SLACK))
    if ok.size == 0:
        return None
    return int(ok[np.lexsort((ok, sizes[ok]))][0])


@dataclass(frozen=True)
class SoftJuntaSearch:
    """Search settings: grid resolution on alpha_i^2, random restarts, seed."""

    grid: int = 32
    restarts: int = 16
    seed: int = 0
    bisection_iters: int = 30


class _ErrorOracle:
    """error as a function of the squared correlations, spectrum cached."""

    def __init__(self, g: BooleanFunction, delta: float):
        self.k = g.n
        self.signed = fourier(g).coeffs * np.where(popcounts(g.size) % 2 == 0, 1.0, -1.0)
        self.delta = delta

    def error(self, a2) -> float:
        t = fwht(self.signed * noise_weights(np.sqrt(np.clip(a2, 0.0, 1.0))))
        return float(np.mean((1 - np.abs(t)) / 2))

    def feasible(self, a2) -> bool:
        return self.error(a2) <= self.delta + FEASIBILITY_SLACK

    def lowest(self, a2, i, hi, iters) -> float:
        """Smallest a2[i] in [0, hi] keeping feasibility; error is monotone in it."""
        trial = np.array(a2, dtype=np.float64)
        trial[i] = 0.0
        if self.feasible(trial):
            return 0.0
        lo = 0.0
        for _ in range(iters):
            mid = (lo + hi) / 2
            trial[i] = mid
            if self.feasible(trial):
                hi = mid
            else:
                lo = mid
        return hi

    def scale(self, direction, iters=60):
        """Smallest multiple t * direction (t in [0, 1]) that is feasible."""
        if not self.feasible(direction):
            return None
        lo, hi = 0.0, 1.0
        for _ in range(iters):
            mid = (lo + hi) / 2
            if self.feasible(mid * direction):
                hi = mid
            else:
                lo = mid
        return hi * direction


def _grid_descent(oracle: _ErrorOracle, a2, grid):
    levels = np.arange(grid + 1) / grid
    improved = True
    while improved:
        improved = False
        for i in range(a2.shape[0]):
            cur = int(round(a2[i] * grid))
            lo, hi = -1, cur
            while hi - lo > 1:
                mid = (lo + hi) // 2
                trial = a2.copy()
                trial[i] = levels[mid]
                if oracle.feasible(trial):
                    hi = mid
                else:
                    lo = mid
            if hi < cur:
                a2[i] = levels[hi]
                improved = True
    return a2


def _pair_refine(oracle: _ErrorOracle, a2, iters):
    """Move squared mass between coordinate pairs while the total drops."""
    k = a2.shape[0]
    for _ in range(3):
        changed = False
        for i in range(k):
            for j in range(k):
                if i == j or a2[i] == 0:
                    continue
                total = a2[i] + a2[j]
                best = (total, a2[i], a2[j])
                for frac in (0.0, 0.5, 0.9):
                    trial = a2.copy()
                    trial[i] = a2[i] * frac
                    trial[j] = 1.0
                    if not oracle.feasible(trial):
                        continue
                    aj = oracle.lowest(trial, j, 1.0, iters)
                    if trial[i] + aj < best[0] - 1e-12:
                        best = (trial[i] + aj, trial[i], aj)
                if best[0] < total - 1e-12:
                    a2[i], a2[j] = best[1], best[2]
                    changed = True
        for i in range(k):
            if a2[i] > 0:
                a2[i] = oracle.lowest(a2, i, a2[i], iters)
        if not changed:
            break
    return a2


def soft_junta_upper(g: BooleanFunction, delta: float, search: SoftJuntaSearch = SoftJuntaSearch()):
    """Feasible correlation vector with small squared norm.

    Returns ``(value, alpha)`` with ``alpha_correlated_error(g, alpha) <= delta``
    and ``value = sum alpha_i^2``.  The best 0/1 junta witness is one of the
    starting points, so ``value <= junta_complexity(g, delta)[0]``.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    k = g.n
    oracle = _ErrorOracle(g, delta)
    rng = np.random.default_rng(search.seed)
    J, cert = junta_complexity(g, min(delta, 1.0))
    witness = mask_to_alpha(k, cert.support)

    starts = [witness.copy(), np.ones(k)]
    for direction in (witness, np.ones(k)):
        scaled = oracle.scale(direction)
        if scaled is not None:
            starts.append(scaled)
    for _ in range(search.restarts):
        direction = rng.integers(1, search.grid + 1, k) / search.grid
        scaled = oracle.scale(direction)
        if scaled is not None:
            # round up onto the grid; feasibility survives since error is monotone
            starts.append(np.minimum(1.0, np.ceil(scaled * search.grid - 1e-9) / search.grid))

    best_val, best = float(J), witness
    for start in starts:
        a2 = start.copy()
        if not oracle.feasible(a2):
            continue
        if np.allclose(a2 * search.grid, np.round(a2 * search.grid)):
            a2 = _grid_descent(oracle, a2, search.grid)
        if a2.sum() < best_val:
            best_val, best = float(a2.sum()), a2
    refined = _pair_refine(oracle, best.copy(), search.bisection_iters)
    if refined.sum() < best_val and oracle.feasible(refined):
        best = refined
    alpha = CorrelationVector(np.sqrt(best))
    return alpha.squared_norm(), alpha


def relevant_coordinates(g: BooleanFunction) -> int:
    """Mask of coordinates g depends on."""
    mask = 0
    x = np.arange(g.size)
    for i in range(g.n):
        if np.any(g.values[x] != g.values[x ^ (1 << i)]):
            mask |= 1 << i
    return mask


def permute_inputs(g: BooleanFunction, perm) -> BooleanFunction:
    """h(x) with h's coordinate perm[i] equal to g's coordinate i."""
    k = g.n
    x = np.arange(g.size, dtype=np.int64)
    src = np.zeros_like(x)
    for i, p in enumerate(perm):
        src |= ((x >> p) & 1) << i
    return BooleanFunction.from_values(g.values[src])


def least_spread_density_distribution(k: int, c: float) -> DensityDistribution:
    """Density-c pmf minimizing E|sum x_i|: fill the cap on the smallest |sum| first.

    E|sum x_i| is linear in the pmf, so this greedy fill is the exact minimizer.
    """
    size = 1 << k
    cap = 1.0 / (c * size)
    spread = np.abs(2 * popcounts(size) - k)
    order = np.lexsort((np.arange(size), spread))
    pmf = np.zeros(size)
    remaining = 1.0
    for x in order:
        take = min(cap, remaining)
        pmf[x] = take
        remaining -= take
        if remaining <= 0:
            break
    pmf /= pmf.sum()
    return DensityDistribution(k, pmf, c)
