"""Smooth distributions over block inputs.

A distribution on ``{-1,1}^(n k)`` is kappa-smooth when no point has mass
above ``kappa / 2^(n k)``.  Three representations are supported: uniform,
an explicit pmf (small domains only) and uniform conditioned on a named
predicate, sampled by rejection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from statsmodels.stats.proportion import proportion_confint

from .boolfn import majority
from .lift import LiftedFunction, all_block_inputs, blocks_from_index

EXACT_BITS = 20
MIN_ACCEPTANCE = 1e-4
REJECTION_CAP = 1_000_000
CERTIFY_SAMPLES = 200_000


class RejectionBudgetExceeded(RuntimeError):
    pass


class DegeneratePredicate(ValueError):
    pass


@dataclass(frozen=True)
class Predicate:
    """A named vectorized event over batches of block inputs."""

    name: str
    fn: Callable[[np.ndarray], np.ndarray] = field(compare=False)

    def __call__(self, blocks) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(blocks, dtype=np.int64)), dtype=bool)


@dataclass(frozen=True)
class Certificate:
    """Acceptance probability of a predicate, exact or estimated."""

    p: float
    mode: str
    low: float
    high: float
    samples: int = 0

    @property
    def exact(self) -> bool:
        return self.mode in ("enumeration", "analytic")


class SmoothDistribution:
    n: int
    k: int
    kappa: float

    @property
    def domain_bits(self) -> int:
        return self.n * self.k

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def pmf(self) -> np.ndarray:
        """Exact pmf indexed by the n*k-bit integer, when available."""
        raise NotImplementedError

    @property
    def has_exact_pmf(self) -> bool:
        return False


@dataclass(frozen=True)
class Uniform(SmoothDistribution):
    n: int
    k: int

    @property
    def kappa(self) -> float:
        return 1.0

    def sample(self, size, rng):
        return rng.integers(0, 1 << self.n, size=(size, self.k))

    @property
    def has_exact_pmf(self) -> bool:
        return self.domain_bits <= EXACT_BITS

    def pmf(self):
        if not self.has_exact_pmf:
            raise ValueError("domain too large for an explicit pmf")
        size = 1 << self.domain_bits
        return np.full(size, 1.0 / size)


@dataclass(frozen=True, eq=False)
class Explicit(SmoothDistribution):
    n: int
    k: int
    table: np.ndarray
    kappa: float

    def __post_init__(self):
        p = np.asarray(self.table, dtype=np.float64)
        if self.domain_bits > EXACT_BITS:
            raise ValueError(f"explicit pmfs are limited to {EXACT_BITS} bits")
        if p.shape != (1 << self.domain_bits,):
            raise ValueError("pmf length must be 2^(n k)")
        if np.any(p < 0) or abs(math.fsum(p) - 1) > 1e-12:
            raise ValueError("pmf must be nonnegative and sum to 1")
        if p.max() * p.shape[0] > self.kappa + 1e-12:
            raise ValueError(f"pmf is not {self.kappa}-smooth (max mass x 2^(nk) = {p.max() * p.shape[0]})")
        object.__setattr__(self, "table", p)

    @classmethod
    def point_mass(cls, n: int, k: int, index: int) -> "Explicit":
        p = np.zeros(1 << (n * k))
        p[index] = 1.0
        return cls(n, k, p, float(p.shape[0]))

    @property
    def has_exact_pmf(self) -> bool:
        return True

    def pmf(self):
        return self.table

    def sample(self, size, rng):
        idx = rng.choice(self.table.shape[0], size=size, p=self.table)
        return blocks_from_index(idx, self.n, self.k)

    def to_csv(self) -> str:
        lines = ["index,probability"]
        lines += [f"{i},{float(p)!r}" for i, p in enumerate(self.table)]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, text: str, n: int, k: int, kappa: float) -> "Explicit":
        rows = [line.split(",") for line in text.strip().splitlines()[1:]]
        p = np.zeros(1 << (n * k))
        for i, prob in rows:
            p[int(i)] = float(prob)
        return cls(n, k, p, kappa)


def certify(pred: Predicate, n: int, k: int, rng: np.random.Generator | None = None,
            samples: int = CERTIFY_SAMPLES, confidence: float = 0.99) -> Certificate:
    """Acceptance probability of ``pred`` under the uniform distribution.

    Exact by enumeration up to 20 bits, otherwise a Monte Carlo estimate with
    a Wilson interval.
    """
    if n * k <= EXACT_BITS:
        X = all_block_inputs(n, k)
        p = float(np.mean(pred(X)))
        return Certificate(p, "enumeration", p, p)
    if rng is None:
        raise ValueError("a random stream is needed to certify a large domain")
    hits = 0
    done = 0
    while done < samples:
        batch = min(50_000, samples - done)
        hits += int(np.count_nonzero(pred(rng.integers(0, 1 << n, size=(batch, k)))))
        done += batch
    low, high = proportion_confint(hits, samples, alpha=1 - confidence, method="wilson")
    return Certificate(hits / samples, "monte-carlo", float(low), float(high), samples)


@dataclass(frozen=True, eq=False)
class Filtered(SmoothDistribution):
    """Uniform conditioned on ``predicate``; kappa = 1/p.

    For estimated acceptance probabilities ``kappa`` is taken from the
    interval's low end of p, i.e. the conservative (largest) smoothness.
    """

    n: int
    k: int
    predicate: Predicate
    certificate: Certificate

    def __post_init__(self):
        if self.certificate.high < MIN_ACCEPTANCE or self.certificate.p <= 0:
            raise DegeneratePredicate(
                f"predicate {self.predicate.name!r} accepts with probability {self.certificate.p:.3g}"
                f" < {MIN_ACCEPTANCE}"
            )

    @classmethod
    def build(cls, n, k, predicate: Predicate, rng=None, samples=CERTIFY_SAMPLES) -> "Filtered":
        return cls(n, k, predicate, certify(predicate, n, k, rng, samples))

    @property
    def kappa(self) -> float:
        return 1.0 / self.certificate.low if self.certificate.low > 0 else math.inf

    @property
    def kappa_estimate(self) -> float:
        return 1.0 / self.certificate.p

    @property
    def has_exact_pmf(self) -> bool:
        return self.domain_bits <= EXACT_BITS and self.certificate.exact

    def pmf(self):
        if not self.has_exact_pmf:
            raise ValueError("pmf is only exact for certified small domains")
        accept = self.predicate(all_block_inputs(self.n, self.k))
        return accept / accept.sum()

    def sample(self, size, rng):
        out = np.empty((size, self.k), dtype=np.int64)
        filled = 0
        since_accept = 0
        while filled < size:
            need = size - filled
            batch = int(min(REJECTION_CAP, max(64, 1.2 * need / max(self.certificate.p, MIN_ACCEPTANCE))))
            X = rng.integers(0, 1 << self.n, size=(batch, self.k))
            acc = X[self.predicate(X)]
            if acc.shape[0] == 0:
                since_accept += batch
                if since_accept >= REJECTION_CAP:
                    raise RejectionBudgetExceeded(
                        f"predicate {self.predicate.name!r}: no acceptance in {since_accept} proposals"
                    )
                continue
            since_accept = 0
            take = min(need, acc.shape[0])
            out[filled:filled + take] = acc[:take]
            filled += take
        return out


def sample(D: SmoothDistribution, size: int, rng: np.random.Generator) -> np.ndarray:
    return D.sample(size, rng)


def anti_block_predicate(F: LiftedFunction) -> Predicate:
    """Event F(X) != f_1(X^(1))."""
    f1 = F.inner[0]
    return Predicate("anti-block", lambda X: F(X) != f1.values[X[..., 0]])


def anti_block_distribution(F: LiftedFunction, rng=None, samples=CERTIFY_SAMPLES) -> Filtered:
    """Uniform over inputs where F disagrees with its first block's vote.

    With an odd majority outer function the block votes are i.i.d. uniform,
    so the acceptance probability has a closed form and is certified exactly.
    """
    pred = anti_block_predicate(F)
    if F.k % 2 == 1 and F.outer == majority(F.k) and F.domain_bits > EXACT_BITS:
        p = 1.0 / anti_block_kappa(F.k)
        return Filtered(F.n, F.k, pred, Certificate(p, "analytic", p, p))
    return Filtered.build(F.n, F.k, pred, rng, samples)


def majority_tilt_predicate(F: LiftedFunction, value: int = 1) -> Predicate:
    """Event F(X) = value."""
    return Predicate(f"majority-tilt{value:+d}", lambda X: F(X) == value)


def mask_predicate(n: int, k: int, mask: int, value: int) -> Predicate:
    """Event (X & mask) == value on the n*k-bit integer; needs n*k <= 62."""
    if n * k > 62:
        raise ValueError("mask conditioning is limited to 62 bits")
    shifts = np.arange(k, dtype=np.int64) * n

    def fn(X):
        idx = np.sum(X.astype(np.int64) << shifts, axis=-1)
        return (idx & mask) == (value & mask)

    return Predicate(f"mask:{mask:x}={value & mask:x}", fn)


def block_marginal(D: SmoothDistribution, i: int, rng=None, samples: int = 200_000):
    """D_i(x) = Pr[X^(i) = x] for every x in the block domain.

    Exact for uniform and exact-pmf distributions; otherwise returns an
    estimate together with the raw counts as ``(estimate, counts)``.
    """
    if not 0 <= i < D.k:
        raise IndexError(f"block {i} out of range for k={D.k}")
    size = 1 << D.n
    if isinstance(D, Uniform):
        return np.full(size, 1.0 / size)
    if D.has_exact_pmf:
        X = all_block_inputs(D.n, D.k)
        return np.bincount(X[:, i], weights=D.pmf(), minlength=size)
    if rng is None:
        raise ValueError("a random stream is needed for an estimated marginal")
    counts = np.bincount(D.sample(samples, rng)[:, i], minlength=size)
    return counts / samples, counts


def marginal_deviation_fraction(D: SmoothDistribution, v: float) -> float:
    """Fraction of (i, x) with 2^n D_i(x) outside [1 - v, 1 + v]; exact pmf only."""
    size = 1 << D.n
    bad = 0
    for i in range(D.k):
        scaled = size * block_marginal(D, i)
        bad += int(np.count_nonzero((scaled < 1 - v - 1e-12) | (scaled > 1 + v + 1e-12)))
    return bad / (D.k * size)


@dataclass(frozen=True)
class SmoothnessCheck:
    kappa_observed: float | None
    passed: bool | None
    interval: tuple[float, float] | None = None


def smoothness_check(D: SmoothDistribution) -> SmoothnessCheck:
    """Observed max mass x 2^(nk) against the declared kappa."""
    if isinstance(D, Filtered) and not D.certificate.exact:
        c = D.certificate
        return SmoothnessCheck(None, None, (1.0 / c.high, 1.0 / c.low if c.low > 0 else math.inf))
    if isinstance(D, Uniform):
        return SmoothnessCheck(1.0, True)
    observed = float(D.pmf().max() * (1 << D.domain_bits))
    return SmoothnessCheck(observed, observed <= D.kappa + 1e-12)


def random_smooth_explicit(n: int, k: int, kappa: float, rng: np.random.Generator) -> Explicit:
    """Uniform over a random set of ceil(2^(nk)/kappa) points."""
    size = 1 << (n * k)
    support = rng.choice(size, size=max(1, math.ceil(size / kappa)), replace=False)
    p = np.zeros(size)
    p[support] = 1.0 / support.size
    return Explicit(n, k, p, size / support.size)


def anti_block_kappa(k: int) -> float:
    """Exact 1/Pr[MAJ_k(f) != f_1] for balanced inner functions and odd k."""
    if k % 2 == 0:
        raise ValueError("k must be odd")
    corr = math.comb(k - 1, (k - 1) // 2) / 2 ** (k - 1)
    return 2.0 / (1.0 - corr)

