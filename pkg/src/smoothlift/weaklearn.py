"""Block-table weak learner for Lift_n(MAJ_k) and a memorizing baseline.

The learner writes each training label into one table per block (later
points overwrite earlier ones), sums the k table lookups into an integer
score ``G(X)`` and thresholds it.  The threshold, or a constant, is chosen by
empirical advantage on a held-out validation sample.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .lift import LiftedFunction, all_block_inputs, blocks_from_hex, blocks_to_hex
from .smoothdist import SmoothDistribution


@dataclass
class LabeledSample:
    n: int
    points: np.ndarray
    labels: np.ndarray
    source: str = ""
    seed: int | None = None

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int8)
        pts = np.asarray(self.points, dtype=np.int64)
        self.points = pts if pts.ndim == 2 else pts.reshape(len(self.labels), -1)
        if self.points.shape[0] != len(self.labels):
            raise ValueError("points and labels differ in length")

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def k(self) -> int:
        return self.points.shape[1]

    def split(self, m: int) -> tuple["LabeledSample", "LabeledSample"]:
        """First ``m`` points and the rest."""
        a = LabeledSample(self.n, self.points[:m], self.labels[:m], self.source, self.seed)
        b = LabeledSample(self.n, self.points[m:], self.labels[m:], self.source, self.seed)
        return a, b

    def consistent_with(self, F: LiftedFunction) -> bool:
        return len(self) == 0 or bool(np.all(F(self.points) == self.labels))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["X", "y"])
        for X, y in zip(self.points, self.labels):
            w.writerow([blocks_to_hex(X, self.n), int(y)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, n: int, k: int, source: str = "", seed=None) -> "LabeledSample":
        rows = list(csv.DictReader(io.StringIO(text)))
        pts = np.array([blocks_from_hex(r["X"], n, k) for r in rows], dtype=np.int64).reshape(len(rows), k)
        return cls(n, pts, np.array([int(r["y"]) for r in rows], dtype=np.int8), source, seed)


def draw_sample(F: LiftedFunction, D: SmoothDistribution, m: int, rng: np.random.Generator,
                source: str = "", seed=None) -> LabeledSample:
    X = D.sample(m, rng) if m else np.zeros((0, F.k), dtype=np.int64)
    y = F(X) if m else np.zeros(0, dtype=np.int8)
    return LabeledSample(F.n, X, y, source, seed)


@dataclass
class BlockTables:
    """Per-block tables with values in {-1, 0, +1}; 0 means never written."""

    tables: np.ndarray
    writes: np.ndarray

    @property
    def k(self) -> int:
        return self.tables.shape[0]

    @property
    def n(self) -> int:
        return self.tables.shape[1].bit_length() - 1

    def score(self, blocks) -> np.ndarray:
        """G(X) = sum_i g_i(X^(i))."""
        b = np.asarray(blocks, dtype=np.int64)
        return self.tables[np.arange(self.k), b].sum(axis=-1, dtype=np.int64)

    def written_blocks(self, blocks) -> np.ndarray:
        b = np.asarray(blocks, dtype=np.int64)
        return (self.writes[np.arange(self.k), b] > 0).sum(axis=-1)


def train_tables(sample: LabeledSample, n: int, k: int) -> BlockTables:
    """One pass over the training points in order; the last write wins."""
    if len(sample) and (sample.k != k or sample.n != n):
        raise ValueError(f"sample shape (n={sample.n}, k={sample.k}) does not match (n={n}, k={k})")
    size = 1 << n
    tables = np.zeros((k, size), dtype=np.int8)
    writes = np.zeros((k, size), dtype=np.int64)
    if len(sample):
        rev_y = sample.labels[::-1]
        for i in range(k):
            rev = sample.points[::-1, i]
            values, last = np.unique(rev, return_index=True)
            tables[i, values] = rev_y[last]
            writes[i] = np.bincount(sample.points[:, i], minlength=size)
    return BlockTables(tables, writes)


@dataclass(frozen=True)
class ThresholdHypothesis:
    """X -> +1 iff G(X) >= tau, or a constant when ``constant`` is set."""

    tables: BlockTables = field(repr=False, compare=False)
    tau: int | None
    u: int
    constant: int | None = None

    def __call__(self, blocks) -> np.ndarray:
        b = np.asarray(blocks, dtype=np.int64)
        if self.constant is not None:
            return np.full(b.shape[:-1], self.constant, dtype=np.int8)
        return np.where(self.tables.score(b) >= self.tau, 1, -1).astype(np.int8)

    @property
    def label(self) -> str:
        return f"const{self.constant:+d}" if self.constant is not None else f"tau={self.tau}"


def threshold_predictions(tables: BlockTables, blocks, tau: float) -> np.ndarray:
    """sign[G(X) >= tau] for a real threshold."""
    return np.where(tables.score(blocks) >= tau, 1, -1).astype(np.int8)


def hypothesis_family(tables: BlockTables, u: int) -> list[ThresholdHypothesis]:
    """Constants +1 and -1, then thresholds -u..u ascending (the tie-break order)."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    family = [ThresholdHypothesis(tables, None, u, 1), ThresholdHypothesis(tables, None, u, -1)]
    family += [ThresholdHypothesis(tables, tau, u) for tau in range(-u, u + 1)]
    return family


def threshold_bound(k: int, kappa: float) -> int:
    """u = ceil(sqrt(k ln(2 k^2 kappa)) + sqrt(kappa k))."""
    return math.ceil(math.sqrt(k * math.log(2 * k * k * kappa)) + math.sqrt(kappa * k))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float = 0.0
    exact: bool = True


def _expectation(values_fn, D: SmoothDistribution, k: int, mode: str, samples: int, rng) -> Estimate:
    """E_D[values_fn(X)], exactly over the domain or by Monte Carlo."""
    if mode == "exact":
        if not D.has_exact_pmf:
            raise ValueError("exact mode needs a distribution with an exact pmf (n*k <= 20)")
        X = all_block_inputs(D.n, D.k)
        p = D.pmf()
        v = np.asarray(values_fn(X), dtype=np.float64)
        return Estimate(math.fsum(p * v))
    if mode != "monte-carlo":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("monte-carlo mode needs a random stream")
    X = D.sample(samples, rng)
    v = np.asarray(values_fn(X), dtype=np.float64)
    return Estimate(float(v.mean()), float(v.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf, False)


def advantage(h, F: LiftedFunction, D: SmoothDistribution, mode: str = "exact",
              samples: int = 100_000, rng=None) -> Estimate:
    """E_D[h(X) F(X)]."""
    return _expectation(lambda X: np.asarray(h(X), dtype=np.int64) * F(X), D, F.k, mode, samples, rng)


def accuracy(adv: float) -> float:
    return 0.5 + adv / 2


def g_correlation(tables: BlockTables, F: LiftedFunction, D: SmoothDistribution, mode: str = "exact",
                  samples: int = 100_000, rng=None) -> Estimate:
    """E_D[F(X) G(X)]."""
    return _expectation(lambda X: tables.score(X) * F(X), D, F.k, mode, samples, rng)


def g_tail(tables: BlockTables, D: SmoothDistribution, u: float, mode: str = "exact",
           samples: int = 100_000, rng=None) -> Estimate:
    """Pr_D[|G(X)| > u]."""
    return _expectation(lambda X: np.abs(tables.score(X)) > u, D, tables.k, mode, samples, rng)


def empirical_advantages(hypotheses, sample: LabeledSample) -> np.ndarray:
    if len(sample) == 0:
        return np.zeros(len(hypotheses))
    y = sample.labels.astype(np.int64)
    return np.array([float(np.mean(np.asarray(h(sample.points), dtype=np.int64) * y)) for h in hypotheses])


def select(hypotheses, validation: LabeledSample):
    """Hypothesis with the largest empirical advantage; first in family order on ties.

    Returns ``(hypothesis, empirical_advantages)``.
    """
    if not hypotheses:
        raise ValueError("empty hypothesis family")
    adv = empirical_advantages(hypotheses, validation)
    return hypotheses[int(np.argmax(adv))], adv


def threshold_smoothing_value(y: float, a: float) -> float:
    """E_{tau ~ U[-a, a]}[sign(y >= tau)] = clamp(y/a, -1, 1)."""
    if a <= 0:
        raise ValueError("a must be positive")
    return float(min(1.0, max(-1.0, y / a)))


def uniform_convergence_size(family_size: int, eps: float, delta: float) -> int:
    """ceil(ln(2|H|/delta) / (2 eps^2)) samples for simultaneous eps-accuracy of 0/1 losses."""
    return math.ceil(math.log(2 * family_size / delta) / (2 * eps * eps))


@dataclass
class WeakLearnResult:
    hypothesis: ThresholdHypothesis
    tables: BlockTables
    u: int
    validation_advantages: np.ndarray
    diagnostics: dict


def weak_learn(
    F: LiftedFunction,
    D: SmoothDistribution,
    m: int,
    rng: np.random.Generator,
    kappa: float | None = None,
    u: int | None = None,
    evaluate: bool = True,
    eval_samples: int = 100_000,
    eval_rng: np.random.Generator | None = None,
) -> WeakLearnResult:
    """Draw 2m labeled points from D, train on the first m, select on the last m.

    With ``evaluate`` the result carries diagnostics (true advantage,
    E[F G], tail mass of |G| above u, per-block table correlations), exact
    when D has an exact pmf and Monte Carlo otherwise.
    """
    if m < 0:
        raise ValueError("m must be nonnegative")
    kappa = D.kappa if kappa is None else kappa
    if u is None:
        u = threshold_bound(F.k, kappa)
    sample = draw_sample(F, D, 2 * m, rng)
    train, val = sample.split(m)
    tables = train_tables(train, F.n, F.k)
    family = hypothesis_family(tables, u)
    h, val_adv = select(family, val)
    diagnostics = {"tau": h.tau, "constant": h.constant, "u": u, "kappa": kappa, "m": m,
                   "validation_advantage": float(val_adv.max())}
    if evaluate:
        diagnostics.update(evaluate_learner(h, tables, F, D, u, eval_samples, eval_rng or rng))
    return WeakLearnResult(h, tables, u, val_adv, diagnostics)


def evaluate_learner(h, tables: BlockTables, F: LiftedFunction, D: SmoothDistribution, u: int,
                     samples: int, rng) -> dict:
    """Advantage, E[F G], tail mass and per-block correlations on one evaluation set."""
    if D.has_exact_pmf:
        X = all_block_inputs(D.n, D.k)
        w = D.pmf()
        stderr = 0.0
    else:
        X = D.sample(samples, rng)
        w = np.full(samples, 1.0 / samples)
    y = F(X).astype(np.int64)
    hv = np.asarray(h(X), dtype=np.int64)
    G = tables.score(X)
    adv_terms = hv * y
    adv = float(np.dot(w, adv_terms))
    if not D.has_exact_pmf:
        stderr = float(adv_terms.std(ddof=1) / math.sqrt(samples))
    inner = F.inner_table()
    per_block = []
    for i in range(F.k):
        fi = inner[i, X[:, i]].astype(np.int64)
        gi = tables.tables[i, X[:, i]].astype(np.int64)
        per_block.append(float(np.dot(w, fi * gi)))
    return {
        "advantage": adv,
        "advantage_stderr": stderr,
        "g_correlation": float(np.dot(w, G * y)),
        "tail": float(np.dot(w, np.abs(G) > u)),
        "per_block_correlations": per_block,
        "label_bias": float(np.dot(w, y)),
    }


def expected_tables_exact(F: LiftedFunction, support, probs, m: int) -> np.ndarray:
    """E_S[g_i(x)] over all m-point samples from a pmf on ``support`` (block inputs)."""
    from itertools import product

    support = np.asarray(support, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    labels = F(support)
    out = np.zeros((F.k, 1 << F.n))
    for combo in product(range(len(support)), repeat=m):
        idx = list(combo)
        weight = float(np.prod(probs[idx]))
        S = LabeledSample(F.n, support[idx], labels[idx])
        out += weight * train_tables(S, F.n, F.k).tables
    return out


def expected_tables_formula(F: LiftedFunction, support, probs, m: int) -> np.ndarray:
    """q_i(x) mu_i(x) with q_i(x) = 1 - (1 - D_i(x))^m and mu_i(x) = E[F | X^(i) = x]."""
    support = np.asarray(support, dtype=np.int64)
    probs = np.asarray(probs, dtype=np.float64)
    labels = F(support).astype(np.float64)
    size = 1 << F.n
    out = np.zeros((F.k, size))
    for i in range(F.k):
        Di = np.bincount(support[:, i], weights=probs, minlength=size)
        num = np.bincount(support[:, i], weights=probs * labels, minlength=size)
        mu = np.divide(num, Di, out=np.zeros(size), where=Di > 0)
        out[i] = (1 - (1 - Di) ** m) * mu
    return out


@dataclass
class MemorizingHypothesis:
    """Predicts memorized labels on seen points; the tie rule elsewhere.

    ``tie`` is +1 or -1 for a fixed answer, or ``"random"`` for a fresh fair
    coin per unseen point.
    """

    domain_size: int
    memory: dict
    tie: int | str

    def predict(self, x: np.ndarray, rng=None) -> np.ndarray:
        x = np.asarray(x, dtype=np.int64)
        out = np.zeros(x.shape, dtype=np.int8)
        seen = np.array([v in self.memory for v in x.tolist()], dtype=bool)
        out[seen] = [self.memory[v] for v in x[seen].tolist()]
        if self.tie == "random":
            if rng is None:
                raise ValueError("a random stream is needed for randomized ties")
            out[~seen] = 2 * rng.integers(0, 2, int((~seen).sum())) - 1
        else:
            out[~seen] = self.tie
        return out

    def expected_advantage(self, pmf, target) -> float:
        """E over the tie randomness of E_{x~pmf}[h(x) target(x)], exact."""
        pmf = np.asarray(pmf, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        seen = np.zeros(self.domain_size, dtype=bool)
        seen[list(self.memory)] = True
        mem = np.zeros(self.domain_size)
        for x, v in self.memory.items():
            mem[x] = v
        total = math.fsum(pmf[seen] * mem[seen] * target[seen])
        if self.tie != "random":
            total += math.fsum(self.tie * pmf[~seen] * target[~seen])
        return total


def memorizing_weak_learner(points, labels, domain_size: int, tie: int | str = "random") -> MemorizingHypothesis:
    if tie not in (1, -1, "random"):
        raise ValueError("tie must be +1, -1 or 'random'")
    memory = {}
    for x, y in zip(np.asarray(points, dtype=np.int64).tolist(), np.asarray(labels).tolist()):
        if not 0 <= x < domain_size:
            raise ValueError(f"point {x} outside the domain")
        memory[x] = int(y)
    return MemorizingHypothesis(domain_size, memory, tie)
