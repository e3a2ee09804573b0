"""Alphabets, words, cylinders, Bernoulli vectors and seeded random streams.

Letters are dense integer indices ``0..size-1``.  Words wrap a read-only
``int64`` array so they can be fed to numpy and numba kernels directly.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import AlphabetMismatchError, InsufficientDataError, ValidationError

PROB_TOL = 1e-12


@dataclass(frozen=True)
class Alphabet:
    size: int

    def __post_init__(self):
        if int(self.size) < 1:
            raise ValidationError(f"alphabet size must be >= 1, got {self.size}")
        object.__setattr__(self, "size", int(self.size))

    def to_json(self) -> dict:
        return {"size": self.size}

    @classmethod
    def from_json(cls, obj: dict) -> "Alphabet":
        return cls(int(obj["size"]))


def _as_array(symbols) -> np.ndarray:
    if isinstance(symbols, Word):
        return symbols.symbols
    arr = np.asarray(symbols, dtype=np.int64)
    if arr.ndim != 1:
        arr = arr.reshape(-1)
    return arr


class Word:
    """Finite word over an alphabet."""

    __slots__ = ("alphabet", "symbols")

    def __init__(self, symbols: Iterable[int] | np.ndarray, alphabet: Alphabet | int | None = None):
        arr = np.array(_as_array(symbols), dtype=np.int64, copy=True)
        if alphabet is None:
            alphabet = Alphabet(int(arr.max()) + 1 if arr.size else 1)
        elif not isinstance(alphabet, Alphabet):
            alphabet = Alphabet(int(alphabet))
        if arr.size and (arr.min() < 0 or arr.max() >= alphabet.size):
            raise AlphabetMismatchError(
                f"symbols outside alphabet of size {alphabet.size}")
        arr.setflags(write=False)
        self.alphabet = alphabet
        self.symbols = arr

    @property
    def length(self) -> int:
        return int(self.symbols.size)

    def __len__(self) -> int:
        return int(self.symbols.size)

    def __iter__(self):
        return iter(self.symbols.tolist())

    def __getitem__(self, item):
        if isinstance(item, slice):
            return Word(self.symbols[item], self.alphabet)
        return int(self.symbols[item])

    def __eq__(self, other) -> bool:
        if isinstance(other, Word):
            return self.alphabet == other.alphabet and np.array_equal(self.symbols, other.symbols)
        try:
            return np.array_equal(self.symbols, np.asarray(other))
        except Exception:
            return False

    def __hash__(self):
        return hash((self.alphabet.size, self.symbols.tobytes()))

    def __add__(self, other: "Word") -> "Word":
        if self.alphabet != other.alphabet:
            raise AlphabetMismatchError("cannot concatenate words over different alphabets")
        return Word(np.concatenate([self.symbols, other.symbols]), self.alphabet)

    def __repr__(self) -> str:
        return f"Word({self.symbols.tolist()}, size={self.alphabet.size})"

    def to_tuple(self) -> tuple:
        return tuple(self.symbols.tolist())

    def to_json(self) -> list:
        return self.symbols.tolist()


def as_word(w, alphabet: Alphabet | int | None = None) -> Word:
    if isinstance(w, Word):
        if alphabet is not None:
            size = alphabet.size if isinstance(alphabet, Alphabet) else int(alphabet)
            if w.alphabet.size != size:
                raise AlphabetMismatchError(
                    f"word over alphabet {w.alphabet.size}, expected {size}")
        return w
    return Word(w, alphabet)


@dataclass(frozen=True)
class CylinderSpec:
    """Cylinder anchored at coordinate 0."""

    word: Word

    def contains(self, seq) -> bool:
        s = _as_array(seq)
        n = len(self.word)
        return s.size >= n and bool(np.array_equal(s[:n], self.word.symbols))


def cylinder(symbols, alphabet: Alphabet | int | None = None) -> CylinderSpec:
    return CylinderSpec(as_word(symbols, alphabet))


class BernoulliVector:
    """Probability vector on a finite alphabet (also read as the product measure)."""

    __slots__ = ("alphabet", "probs", "_cdf")

    def __init__(self, probs: Sequence[float] | np.ndarray, alphabet: Alphabet | None = None):
        p = np.array(probs, dtype=float, copy=True).reshape(-1)
        if p.size == 0:
            raise ValidationError("empty probability vector")
        if alphabet is None:
            alphabet = Alphabet(p.size)
        if alphabet.size != p.size:
            raise AlphabetMismatchError(
                f"{p.size} probabilities for alphabet of size {alphabet.size}")
        if not np.all(np.isfinite(p)) or np.any(p < 0):
            raise ValidationError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > PROB_TOL:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, not 1")
        p.setflags(write=False)
        self.alphabet = alphabet
        self.probs = p
        cdf = np.cumsum(p)
        cdf /= cdf[-1]
        # letters after the last positive one must never be drawn
        last = int(np.flatnonzero(p > 0)[-1])
        cdf[last:] = 1.0
        cdf.setflags(write=False)
        self._cdf = cdf

    @classmethod
    def normalized(cls, weights, alphabet: Alphabet | None = None) -> "BernoulliVector":
        w = np.asarray(weights, dtype=float)
        if np.any(w < 0) or w.sum() <= 0:
            raise ValidationError("weights must be nonnegative with positive sum")
        return cls(w / w.sum(), alphabet)

    @classmethod
    def uniform(cls, size: int) -> "BernoulliVector":
        return cls(np.full(size, 1.0 / size))

    @property
    def size(self) -> int:
        return self.alphabet.size

    @property
    def cdf(self) -> np.ndarray:
        return self._cdf

    def __len__(self) -> int:
        return self.alphabet.size

    def __getitem__(self, a: int) -> float:
        return float(self.probs[a])

    def __eq__(self, other) -> bool:
        return isinstance(other, BernoulliVector) and np.array_equal(self.probs, other.probs)

    def __repr__(self) -> str:
        return f"BernoulliVector({self.probs.tolist()})"

    def entropy(self) -> float:
        """Shannon entropy, natural log, with 0 log 0 = 0."""
        p = self.probs[self.probs > 0]
        return float(-np.sum(p * np.log(p)))

    def is_degenerate(self) -> bool:
        return int(np.count_nonzero(self.probs)) == 1

    def to_json(self) -> list:
        return self.probs.tolist()


def city_metric(p: BernoulliVector, q: BernoulliVector) -> float:
    """``D(p, q) = sum_a |p_a - q_a|``."""
    _check_same(p, q)
    return float(np.abs(p.probs - q.probs).sum())


def _check_same(p: BernoulliVector, q: BernoulliVector) -> None:
    if p.alphabet != q.alphabet:
        raise AlphabetMismatchError(
            f"alphabet sizes differ: {p.alphabet.size} vs {q.alphabet.size}")


class RngStream:
    """Counter-based random stream keyed by ``(seed, stream, path)``.

    Two instances built from the same key produce identical draws.  ``spawn``
    derives independent child streams, so parallel work stays reproducible.
    """

    def __init__(self, seed: int, stream: int = 0, path: tuple[int, ...] = ()):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.stream = int(stream)
        self.path = tuple(int(x) for x in path)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream,) + self.path)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def spawn(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path + (int(i),))

    def fresh(self) -> "RngStream":
        return RngStream(self.seed, self.stream, self.path)

    def random(self, size=None):
        return self.generator.random(size)

    def integers(self, low, high=None, size=None):
        return self.generator.integers(low, high, size=size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream={self.stream}, path={self.path})"


def as_rng(rng) -> RngStream:
    if isinstance(rng, RngStream):
        return rng
    if rng is None:
        return RngStream(0)
    return RngStream(int(rng))


def draw_letters(cdf: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF lookup; ``u`` uniform on [0, 1)."""
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


def sample_letters(p: BernoulliVector, size, rng: RngStream) -> np.ndarray:
    return draw_letters(p.cdf, rng.random(size))


def sample_word(p: BernoulliVector, n: int, rng: RngStream) -> Word:
    """i.i.d. word of length ``n`` drawn from ``p``."""
    if n < 0:
        raise ValidationError("word length must be >= 0")
    return Word(sample_letters(p, int(n), as_rng(rng)), p.alphabet)


def block_distribution(w, k: int) -> dict[tuple, float]:
    """Empirical frequencies of the ``len(w) - k + 1`` sliding k-blocks."""
    s = _as_array(w)
    if k < 1:
        raise ValidationError("block length must be >= 1")
    if s.size < k:
        raise InsufficientDataError(f"word of length {s.size} has no {k}-blocks")
    windows = np.lib.stride_tricks.sliding_window_view(s, k)
    blocks, counts = np.unique(windows, axis=0, return_counts=True)
    total = counts.sum()
    return {tuple(b.tolist()): c / total for b, c in zip(blocks, counts)}


def block_counts(w, k: int) -> dict[tuple, int]:
    s = _as_array(w)
    if s.size < k:
        raise InsufficientDataError(f"word of length {s.size} has no {k}-blocks")
    windows = np.lib.stride_tricks.sliding_window_view(s, k)
    blocks, counts = np.unique(windows, axis=0, return_counts=True)
    return {tuple(b.tolist()): int(c) for b, c in zip(blocks, counts)}


def cylinder_prob_bernoulli(p: BernoulliVector, c: CylinderSpec | Word | Sequence[int]) -> float:
    """Product measure of a cylinder anchored at 0."""
    if not isinstance(c, CylinderSpec):
        c = CylinderSpec(as_word(c, p.alphabet))
    if c.word.alphabet != p.alphabet:
        raise AlphabetMismatchError("cylinder word and vector use different alphabets")
    if len(c.word) == 0:
        return 1.0
    return float(np.prod(p.probs[c.word.symbols]))


def bernoulli_block_law(p: BernoulliVector, n: int) -> dict[tuple, float]:
    """All ``n``-words with their product probabilities (zero-mass words dropped)."""
    if n < 1:
        raise ValidationError("block length must be >= 1")
    support = np.flatnonzero(p.probs > 0)
    grids = np.array(np.meshgrid(*([support] * n), indexing="ij")).reshape(n, -1).T
    probs = np.prod(p.probs[grids], axis=1)
    return {tuple(w.tolist()): float(pr) for w, pr in zip(grids, probs)}
