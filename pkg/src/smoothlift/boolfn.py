"""Bit-packed Boolean functions and their Fourier spectra.

Conventions used across the package:

* values are +1/-1;
* the input index ``x`` is an unsigned integer whose bit ``i`` is coordinate
  ``x_i``, with a set bit meaning ``x_i = +1`` and a clear bit ``x_i = -1``;
* ``sign(0) = +1``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from functools import cached_property

import numpy as np

MAX_ARITY = 22


def sign(t):
    """Elementwise sign with ``sign(0) = +1``; returns int8 +1/-1."""
    return np.where(np.asarray(t) >= 0, 1, -1).astype(np.int8)


def popcounts(size: int) -> np.ndarray:
    """Popcount of every integer in ``range(size)``."""
    return np.bitwise_count(np.arange(size, dtype=np.uint32)).astype(np.int64)


def coordinates(k: int) -> np.ndarray:
    """The (2^k, k) matrix of +1/-1 coordinates of every input index."""
    x = np.arange(1 << k, dtype=np.int64)
    bits = (x[:, None] >> np.arange(k)) & 1
    return (2 * bits - 1).astype(np.int8)


def _check_arity(n: int) -> None:
    if not 0 <= n <= MAX_ARITY:
        raise ValueError(f"arity {n} outside [0, {MAX_ARITY}]")


@dataclass(frozen=True)
class BooleanFunction:
    """A +1/-1 valued truth table on ``n`` input bits.

    ``packed`` holds ``2**n`` bits in little-endian bit order (entry ``x`` is
    bit ``x % 8`` of byte ``x // 8``); a set bit encodes +1.  Arity 0 is
    allowed and denotes a constant.
    """

    n: int
    packed: bytes

    def __post_init__(self):
        _check_arity(self.n)
        need = ((1 << self.n) + 7) // 8
        if len(self.packed) != need:
            raise ValueError(f"packed table has {len(self.packed)} bytes, expected {need}")

    @classmethod
    def from_values(cls, values) -> "BooleanFunction":
        v = np.asarray(values)
        size = v.shape[0]
        n = size.bit_length() - 1
        if v.ndim != 1 or size != 1 << n:
            raise ValueError("table length must be a power of two")
        if not np.all((v == 1) | (v == -1)):
            raise ValueError("table entries must be +1 or -1")
        return cls(n, np.packbits(v > 0, bitorder="little").tobytes())

    @classmethod
    def from_hex(cls, n: int, text: str) -> "BooleanFunction":
        _check_arity(n)
        size = 1 << n
        value = int(text, 16)
        if value >> size:
            raise ValueError("hex string has bits beyond the table length")
        return cls(n, value.to_bytes((size + 7) // 8, "little"))

    def to_hex(self) -> str:
        """Lowercase hex of the packed table, most significant index first."""
        width = max(1, ((1 << self.n) + 3) // 4)
        return format(int.from_bytes(self.packed, "little"), f"0{width}x")

    @cached_property
    def values(self) -> np.ndarray:
        size = 1 << self.n
        bits = np.unpackbits(np.frombuffer(self.packed, dtype=np.uint8), bitorder="little")
        out = bits[:size].astype(np.int8) * 2 - 1
        out.flags.writeable = False
        return out

    @property
    def size(self) -> int:
        return 1 << self.n

    def __call__(self, x):
        return evaluate(self, x)

    def __neg__(self) -> "BooleanFunction":
        return BooleanFunction.from_values(-self.values)

    def weight(self) -> int:
        """Number of inputs mapped to +1."""
        return int(np.count_nonzero(self.values > 0))

    def is_balanced(self) -> bool:
        return self.n >= 1 and 2 * self.weight() == self.size

    def bias(self) -> float:
        return (2 * self.weight() - self.size) / self.size


def evaluate(f: BooleanFunction, x):
    """Value of ``f`` at index ``x`` (scalar or integer array)."""
    idx = np.asarray(x)
    if np.any(idx < 0) or np.any(idx >= f.size):
        raise IndexError(f"input index out of range for arity {f.n}")
    out = f.values[idx]
    return int(out) if out.ndim == 0 else out


def constant(n: int, value: int = 1) -> BooleanFunction:
    _check_arity(n)
    return BooleanFunction.from_values(np.full(1 << n, 1 if value > 0 else -1, dtype=np.int8))


def dictator(n: int, i: int) -> BooleanFunction:
    """x -> x_i (zero-based coordinate)."""
    if not 0 <= i < n:
        raise ValueError(f"coordinate {i} out of range for arity {n}")
    return BooleanFunction.from_values(coordinates(n)[:, i])


def parity(n: int, mask: int | None = None) -> BooleanFunction:
    """Character chi_S for the coordinate set encoded by ``mask`` (default: all)."""
    _check_arity(n)
    if mask is None:
        mask = (1 << n) - 1
    x = np.arange(1 << n, dtype=np.int64)
    zeros = popcounts(1 << n)[(~x) & mask]
    return BooleanFunction.from_values(np.where(zeros % 2 == 0, 1, -1).astype(np.int8))


def majority(k: int) -> BooleanFunction:
    """MAJ_k(x) = sign(sum x_i) with sign(0) = +1."""
    if not 1 <= k <= MAX_ARITY:
        raise ValueError(f"majority arity {k} outside [1, {MAX_ARITY}]")
    total = 2 * popcounts(1 << k) - k
    return BooleanFunction.from_values(sign(total))


def _check_same_arity(f: BooleanFunction, g: BooleanFunction) -> None:
    if f.n != g.n:
        raise ValueError(f"arity mismatch: {f.n} vs {g.n}")


def agreements(f: BooleanFunction, g: BooleanFunction) -> int:
    _check_same_arity(f, g)
    return int(np.count_nonzero(f.values == g.values))


def correlation(f: BooleanFunction, g: BooleanFunction) -> float:
    """E_x[f(x) g(x)] under the uniform distribution.

    Counted in integers; the result is a multiple of 2^(1-n) and therefore
    exact as a float.
    """
    return (2 * agreements(f, g) - f.size) / f.size


def distance(f: BooleanFunction, g: BooleanFunction) -> float:
    """Pr_x[f(x) != g(x)] under the uniform distribution (exact)."""
    return (f.size - agreements(f, g)) / f.size


def fwht(a) -> np.ndarray:
    """Unnormalized Walsh-Hadamard transform, sum_x a[x] (-1)^popcount(x & s)."""
    out = np.array(a, dtype=np.float64)
    size = out.shape[0]
    h = 1
    while h < size:
        view = out.reshape(-1, 2, h)
        lo = view[:, 0, :].copy()
        view[:, 0, :] += view[:, 1, :]
        view[:, 1, :] = lo - view[:, 1, :]
        h *= 2
    return out


def _subset_signs(k: int) -> np.ndarray:
    # chi_S(x) = (-1)^(|S| - popcount(x & S)) under the +1 <-> set-bit encoding
    return np.where(popcounts(1 << k) % 2 == 0, 1.0, -1.0)


@dataclass(frozen=True)
class FourierSpectrum:
    """Coefficients ghat(S), indexed by the bitmask of S."""

    k: int
    coeffs: np.ndarray

    def __getitem__(self, mask: int) -> float:
        return float(self.coeffs[mask])

    def parseval(self) -> float:
        return float(np.sum(self.coeffs**2))

    def inverse(self) -> np.ndarray:
        """Real-valued reconstruction sum_S ghat(S) chi_S(x) for every x."""
        return fwht(self.coeffs * _subset_signs(self.k))

    def to_function(self) -> BooleanFunction:
        return BooleanFunction.from_values(sign(self.inverse()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["mask", "coefficient"])
        for mask, c in enumerate(self.coeffs):
            writer.writerow([mask, repr(float(c))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "FourierSpectrum":
        rows = list(csv.DictReader(io.StringIO(text)))
        k = len(rows).bit_length() - 1
        coeffs = np.zeros(len(rows))
        for row in rows:
            coeffs[int(row["mask"])] = float(row["coefficient"])
        return cls(k, coeffs)


def fourier(f: BooleanFunction) -> FourierSpectrum:
    """Fourier spectrum via the fast Walsh-Hadamard transform."""
    coeffs = fwht(f.values) * _subset_signs(f.n) / f.size
    return FourierSpectrum(f.n, coeffs)


def is_balanced(f: BooleanFunction) -> bool:
    return f.is_balanced()


def random_function(n: int, rng: np.random.Generator) -> BooleanFunction:
    _check_arity(n)
    return BooleanFunction.from_values((2 * rng.integers(0, 2, 1 << n) - 1).astype(np.int8))


def random_balanced_tables(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` independent uniform balanced tables as a (count, 2^n) int8 array."""
    if n < 1:
        raise ValueError("balanced functions need n >= 1")
    size = 1 << n
    keys = rng.random((count, size))
    plus = np.argpartition(keys, size // 2, axis=1)[:, : size // 2]
    out = np.full((count, size), -1, dtype=np.int8)
    np.put_along_axis(out, plus, 1, axis=1)
    return out


def random_balanced(n: int, rng: np.random.Generator) -> BooleanFunction:
    """Uniform sample among the C(2^n, 2^(n-1)) balanced functions on n bits."""
    return BooleanFunction.from_values(random_balanced_tables(n, 1, rng)[0])


def rebalance_tables(unbalanced: np.ndarray, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Second stage of the coupled balanced sampler, row by row.

    For a row with sum ``l``, flips ``|l|/2`` entries of sign ``sign(l)``
    chosen uniformly at random.  Returns ``(balanced, flipped_counts)``.
    """
    u = np.asarray(unbalanced, dtype=np.int8)
    if u.ndim == 1:
        b, c = rebalance_tables(u[None, :], rng)
        return b[0], c
    excess = u.sum(axis=1, dtype=np.int64)
    need = np.abs(excess) // 2
    eligible = u == np.where(excess > 0, 1, -1)[:, None]
    keys = np.where(eligible, rng.random(u.shape), 2.0)
    ranks = np.argsort(np.argsort(keys, axis=1), axis=1)
    flip = eligible & (ranks < need[:, None])
    out = np.where(flip, -u, u).astype(np.int8)
    return out, flip.sum(axis=1)


def random_balanced_coupled(n: int, rng: np.random.Generator) -> tuple[BooleanFunction, BooleanFunction, int]:
    """Uniform table, then rebalance it by flipping a random excess half.

    Returns ``(unbalanced, balanced, flipped)``; the balanced output is
    uniform over balanced tables.
    """
    if n < 1:
        raise ValueError("balanced functions need n >= 1")
    u = (2 * rng.integers(0, 2, 1 << n) - 1).astype(np.int8)
    w, flipped = rebalance_tables(u, rng)
    return BooleanFunction.from_values(u), BooleanFunction.from_values(w), int(flipped[0])
