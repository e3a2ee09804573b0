"""Repeat-and-tail substitution cascades.

Level ``n`` letters are blocks of ``N_n = m_1 ... m_n`` base letters.  They are
represented by their digit word (the respelling down to level 0) and never
enumerated.  The image of a level-``n`` letter is the concatenation of the
images of its ``m_n`` children followed by a tail, so

    |rho_n(a)| = sum_i |rho_{n-1}(a_i)| + |t_n(a)|.

Every tail is checked against the budget
``|t_n(a)| <= K 2^-n sum_i |rho_{n-1}(a_i)|`` in exact rational arithmetic.

The measure ``nu_n(p)`` is the projection of the suspension over the
i.i.d. law ``p_n`` with roof ``|rho_n|``: images of i.i.d. level-``n``
letters read from a stationary random phase.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import stats

from .errors import LevelError, TailBudgetError, ValidationError
from .substitution import SubstitutionMap
from .symdyn import BernoulliVector, RngStream, Word, _as_array, as_rng, draw_letters

ENUM_CAP = 4096


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, float):
        return Fraction(repr(x))
    return Fraction(x)


@dataclass(frozen=True, eq=False)
class LetterPath:
    """A level-``n`` letter, identified by its ``N_n`` base digits."""

    level: int
    digits: np.ndarray

    @property
    def key(self) -> tuple:
        return (self.level, self.digits.tobytes())

    def __eq__(self, other) -> bool:
        return (isinstance(other, LetterPath) and self.level == other.level
                and np.array_equal(self.digits, other.digits))

    def __hash__(self):
        return hash(self.key)

    def __repr__(self) -> str:
        return f"LetterPath(level={self.level}, digits={self.digits.tolist()})"


# tails

class TailProvider:
    """Supplies the tail word of each letter of level ``>= 1``."""

    name = "abstract"
    enum_cap = ENUM_CAP  # largest level that may be enumerated for exact roof statistics

    def content(self, cascade: "Cascade", letter: LetterPath) -> np.ndarray:
        raise NotImplementedError

    def length(self, cascade: "Cascade", letter: LetterPath) -> int:
        return int(self.content(cascade, letter).size)

    def expected_length(self, cascade: "Cascade", p: BernoulliVector, n: int) -> float | None:
        return None

    def extreme_letters(self, cascade: "Cascade", n: int):
        """``(longest, shortest)`` letters of level ``n`` when known."""
        return None

    def to_json(self) -> dict:
        return {"mode": self.name}


class ZeroTails(TailProvider):
    name = "zero"

    def content(self, cascade, letter):
        return np.empty(0, dtype=np.int64)

    def length(self, cascade, letter):
        return 0

    def expected_length(self, cascade, p, n):
        return 0.0

    def extreme_letters(self, cascade, n):
        z = np.zeros(cascade.N[n], dtype=np.int64)
        return LetterPath(n, z), LetterPath(n, z)


def hash_symbols(key: bytes, data: bytes, length: int, size: int) -> np.ndarray:
    """Deterministic pseudo-random word of ``length`` symbols below ``size``."""
    out = bytearray()
    counter = 0
    while len(out) < length:
        h = hashlib.blake2b(data + counter.to_bytes(4, "little"), key=key[:64], digest_size=64)
        out.extend(h.digest())
        counter += 1
    return np.frombuffer(bytes(out[:length]), dtype=np.uint8).astype(np.int64) % size


class SyntheticTails(TailProvider):
    """Deterministic tails with hashed content.

    ``mode="constant"``: every level-``n`` letter gets the same length
    ``floor(K 2^-n m_n min|rho_{n-1}|)``.  All roofs of a level are then equal.

    ``mode="digit"`` (default): the length is
    ``floor(K 2^-n N_n |rho_0| z(a))`` where ``z(a)`` is the fraction of base
    digits equal to ``marker``.  Roof lengths then genuinely vary inside a
    level while expected lengths stay exact (binomial sums).
    """

    def __init__(self, mode: str = "digit", key: bytes | str = b"tails", marker: int = 0):
        if mode not in ("digit", "constant"):
            raise ValidationError(f"unknown synthetic tail mode {mode!r}")
        self.mode = mode
        self.key = key.encode() if isinstance(key, str) else bytes(key)
        self.marker = int(marker)
        self.name = f"synthetic-{mode}"

    def _digit_len(self, cascade, n: int, zeros: int) -> int:
        K = cascade.Kfrac
        return (K.numerator * cascade.base_len * zeros) // (K.denominator * 2**n)

    def length(self, cascade, letter):
        n = letter.level
        K = cascade.Kfrac
        if self.mode == "constant":
            return (K.numerator * cascade.ms[n - 1] * cascade.min_roof(n - 1)) // (K.denominator * 2**n)
        zeros = int(np.count_nonzero(letter.digits == self.marker))
        return self._digit_len(cascade, n, zeros)

    def batch_lengths(self, cascade, n: int, digits: np.ndarray) -> np.ndarray:
        """Tail lengths for a batch of level-``n`` digit rows."""
        K = cascade.Kfrac
        if self.mode == "constant":
            L = (K.numerator * cascade.ms[n - 1] * cascade.min_roof(n - 1)) // (K.denominator * 2**n)
            return np.full(digits.shape[0], L, dtype=np.int64)
        zeros = np.count_nonzero(digits == self.marker, axis=1).astype(np.int64)
        return (K.numerator * cascade.base_len * zeros) // (K.denominator * 2**n)

    def content(self, cascade, letter):
        L = self.length(cascade, letter)
        data = letter.level.to_bytes(2, "little") + letter.digits.astype(np.int64).tobytes()
        return hash_symbols(self.key, data, L, cascade.target_size)

    def expected_length(self, cascade, p, n):
        if self.mode == "constant":
            return float(self.length(cascade, LetterPath(n, np.zeros(cascade.N[n], dtype=np.int64))))
        N = cascade.N[n]
        q = float(p.probs[self.marker]) if self.marker < p.size else 0.0
        z = np.arange(N + 1)
        lens = np.array([self._digit_len(cascade, n, int(k)) for k in z], dtype=float)
        return float(np.dot(stats.binom.pmf(z, N, q), lens))

    def extreme_letters(self, cascade, n):
        N = cascade.N[n]
        hi = np.full(N, self.marker, dtype=np.int64)
        other = 1 if self.marker == 0 else 0
        lo = np.full(N, other if cascade.base_size > 1 else self.marker, dtype=np.int64)
        if self.mode == "constant":
            return LetterPath(n, hi), LetterPath(n, hi)
        return LetterPath(n, hi), LetterPath(n, lo)

    def to_json(self):
        return {"mode": self.name, "key": self.key.decode("latin-1"), "marker": self.marker}


class CallableTails(TailProvider):
    """Tails from a user function ``letter -> word`` (cached)."""

    name = "callable"

    def __init__(self, fn: Callable[[LetterPath], Sequence[int]], label: str = "callable"):
        self.fn = fn
        self.name = label
        self._cache: dict = {}

    def content(self, cascade, letter):
        hit = self._cache.get(letter.key)
        if hit is None:
            hit = np.array(_as_array(self.fn(letter)), dtype=np.int64)
            hit.setflags(write=False)
            self._cache[letter.key] = hit
        return hit


class TableTails(TailProvider):
    """Explicit tails for every letter of level 1 (small alphabets)."""

    name = "table"

    def __init__(self, table: dict[tuple, Sequence[int]]):
        self.table = {tuple(k): np.array(v, dtype=np.int64) for k, v in table.items()}

    def content(self, cascade, letter):
        if letter.level != 1:
            raise LevelError("table tails are only defined on level 1")
        return self.table[tuple(letter.digits.tolist())]

    def to_json(self):
        return {"mode": "table", "tails": [[list(k), v.tolist()] for k, v in self.table.items()]}


# cascade

class Cascade:
    """Cascade ``rho_0, rho_1, ..., rho_depth`` of repeat-and-tail substitutions."""

    def __init__(self, rho0: SubstitutionMap, ms: Sequence[int], K, tails: TailProvider | None = None,
                 check_budget: bool = True):
        if not rho0.is_constant_length():
            raise ValidationError("base substitution must have images of equal length")
        ms = tuple(int(m) for m in ms)
        if any(m < 2 for m in ms):
            raise ValidationError("repetition counts must be >= 2")
        Kf = as_fraction(K)
        if Kf < 0:
            raise ValidationError("K must be nonnegative")
        self.rho0 = rho0
        self.ms = ms
        self.K = float(Kf)
        self.Kfrac = Kf
        self.tails = tails if tails is not None else SyntheticTails()
        self.check_budget = check_budget
        self.base_size = rho0.source.size
        self.target_size = rho0.target.size
        self.base_len = rho0.min_len
        self.N = [1]
        for m in ms:
            self.N.append(self.N[-1] * m)
        self._roof: dict = {}
        self._tail: dict = {}
        self._img0 = np.stack(rho0.images)

    @property
    def depth(self) -> int:
        return len(self.ms)

    @classmethod
    def synthetic(cls, base_size: int, target_size: int, base_len: int, ms: Sequence[int], K,
                  mode: str = "digit", key: bytes | str = b"cascade") -> "Cascade":
        """Cascade whose base images and tails are hashed pseudo-random words."""
        kb = key.encode() if isinstance(key, str) else bytes(key)
        images = [hash_symbols(kb + b"/rho0", bytes([a]), base_len, target_size)
                  for a in range(base_size)]
        rho0 = SubstitutionMap(images, target_size)
        return cls(rho0, ms, K, SyntheticTails(mode, kb + b"/tails"))

    def to_json(self) -> dict:
        return {"rho0": self.rho0.to_json(), "ms": list(self.ms), "K": str(self.Kfrac),
                "tails": self.tails.to_json()}

    # letters

    def _check_level(self, n: int) -> None:
        if not 0 <= n <= self.depth:
            raise LevelError(f"level {n} outside 0..{self.depth}")

    def letter(self, n: int, digits) -> LetterPath:
        self._check_level(n)
        d = np.array(_as_array(digits), dtype=np.int64)
        if d.size != self.N[n]:
            raise ValidationError(f"level {n} letters have {self.N[n]} digits, got {d.size}")
        if d.size and (d.min() < 0 or d.max() >= self.base_size):
            raise ValidationError("digit outside the base alphabet")
        d.setflags(write=False)
        return LetterPath(n, d)

    def children(self, letter: LetterPath) -> list[LetterPath]:
        return self.respell(letter, letter.level - 1)

    def respell(self, letter: LetterPath, k: int) -> list[LetterPath]:
        """Level-``k`` letters whose digit words concatenate to ``letter``'s."""
        if not 0 <= k <= letter.level:
            raise LevelError(f"cannot respell level {letter.level} to level {k}")
        if k == letter.level:
            return [letter]
        size = self.N[k]
        blocks = letter.digits.reshape(-1, size)
        out = []
        for b in blocks:
            b = b.copy()
            b.setflags(write=False)
            out.append(LetterPath(k, b))
        return out

    # tails and roofs

    def tail(self, letter: LetterPath) -> np.ndarray:
        if letter.level == 0:
            return np.empty(0, dtype=np.int64)
        hit = self._tail.get(letter.key)
        if hit is not None:
            return hit
        t = np.asarray(self.tails.content(self, letter), dtype=np.int64)
        self._enforce_budget(letter, t.size)
        self._tail[letter.key] = t
        return t

    def tail_length(self, letter: LetterPath) -> int:
        if letter.level == 0:
            return 0
        hit = self._tail.get(letter.key)
        if hit is not None:
            return int(hit.size)
        L = int(self.tails.length(self, letter))
        self._enforce_budget(letter, L)
        return L

    def _enforce_budget(self, letter: LetterPath, L: int) -> None:
        if not self.check_budget:
            return
        s = sum(self.roof_length(c) for c in self.children(letter))
        K = self.Kfrac
        if L * K.denominator * 2**letter.level > K.numerator * s:
            raise TailBudgetError(
                f"tail of length {L} at level {letter.level} exceeds K 2^-n * {s}")

    def roof_length(self, letter: LetterPath) -> int:
        """``|rho_n(a)|`` computed recursively and memoised."""
        if letter.level == 0:
            return self.base_len
        key = letter.key
        hit = self._roof.get(key)
        if hit is None:
            hit = sum(self.roof_length(c) for c in self.children(letter)) + self.tail_length(letter)
            self._roof[key] = hit
        return hit

    def roof_table(self, n: int, digits: np.ndarray) -> list[np.ndarray]:
        """Roof lengths of every sub-letter for a batch of level-``n`` digit rows.

        Entry ``k`` has shape ``(count, N_n / N_k)`` and lists the level-``k``
        roofs in order.  Tail budgets are checked on the way.
        """
        digits = np.atleast_2d(np.asarray(digits, dtype=np.int64))
        count = digits.shape[0]
        table = [np.full((count, self.N[n]), self.base_len, dtype=np.int64)]
        batch = getattr(self.tails, "batch_lengths", None)
        K = self.Kfrac
        for k in range(1, n + 1):
            child = table[-1].reshape(count, -1, self.ms[k - 1]).sum(axis=2)
            blocks = digits.reshape(-1, self.N[k])
            if batch is not None:
                tails = batch(self, k, blocks).reshape(count, -1)
            else:
                tails = np.array([self.tail_length(self.letter(k, b)) for b in blocks],
                                 dtype=np.int64).reshape(count, -1)
            if self.check_budget and np.any(tails * K.denominator * 2**k > K.numerator * child):
                raise TailBudgetError(f"a level-{k} tail exceeds the budget")
            table.append(child + tails)
        return table

    def extreme_roofs(self, n: int) -> tuple[int, int] | None:
        """``(max, min)`` roof length at level ``n`` if the provider knows the extremes."""
        self._check_level(n)
        if n == 0:
            return self.base_len, self.base_len
        if self._enumerable(n):
            roofs = [self.roof_length(a) for a in self.enumerate_letters(n)]
            return max(roofs), min(roofs)
        ext = self.tails.extreme_letters(self, n)
        if ext is None:
            return None
        return self.roof_length(ext[0]), self.roof_length(ext[1])

    def min_roof(self, n: int) -> int:
        if n == 0:
            return self.base_len
        ext = self.extreme_roofs(n)
        if ext is None:
            return self.N[n] * self.base_len
        return ext[1]

    def roof_upper_bound(self, n: int) -> int:
        """Upper bound for every level-``n`` roof (exact maximum when known)."""
        ext = self.extreme_roofs(n)
        if ext is not None:
            return ext[0]
        # the budget gives |rho_n| <= (1 + K 2^-n) m_n max|rho_{n-1}|
        prev = self.roof_upper_bound(n - 1)
        return math.floor((1 + self.Kfrac / 2**n) * self.ms[n - 1] * prev)

    def _enumerable(self, n: int) -> bool:
        return self.base_size ** self.N[n] <= min(ENUM_CAP, getattr(self.tails, "enum_cap", ENUM_CAP))

    def enumerate_letters(self, n: int):
        if self.base_size ** self.N[n] > ENUM_CAP:
            raise ValidationError(f"level {n} has too many letters to enumerate")
        grids = np.array(np.meshgrid(*([np.arange(self.base_size)] * self.N[n]), indexing="ij"))
        for d in grids.reshape(self.N[n], -1).T:
            yield self.letter(n, d)

    # images

    def _expand(self, letter: LetterPath, out: list) -> None:
        if letter.level == 0:
            out.append(self._img0[letter.digits[0]])
            return
        if letter.level == 1:
            out.append(self._img0[letter.digits].ravel())
        else:
            for c in self.children(letter):
                self._expand(c, out)
        t = self.tail(letter)
        if t.size:
            out.append(t)

    def image(self, letter: LetterPath) -> np.ndarray:
        out: list = []
        self._expand(letter, out)
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)

    def image_layout(self, letter: LetterPath, k: int) -> tuple[np.ndarray, np.ndarray, list]:
        """Image of ``letter`` and start offsets of its level-``k`` sub-images."""
        subs = self.respell(letter, k)
        starts = []
        pieces: list = []
        pos = 0

        def walk(a: LetterPath):
            nonlocal pos
            if a.level == k:
                starts.append(pos)
                img = self.image(a)
                pieces.append(img)
                pos += img.size
                return
            for c in self.children(a):
                walk(c)
            t = self.tail(a)
            if t.size:
                pieces.append(t)
                pos += t.size

        walk(letter)
        return np.concatenate(pieces), np.array(starts, dtype=np.int64), subs

    # measures

    def lift(self, p: BernoulliVector, n: int) -> "LiftedBernoulli":
        return lift_bernoulli(p, n, self)

    def expected_roof(self, p: BernoulliVector, n: int, samples: int = 0, rng=None) -> tuple[float, float]:
        """``E_n(p)`` and its standard error (0 when exact)."""
        self._check_level(n)
        if n == 0:
            return float(self.base_len), 0.0
        exact = [self.tails.expected_length(self, p, k) for k in range(1, n + 1)]
        if all(e is not None for e in exact):
            e = float(self.N[n] * self.base_len)
            for k, ek in enumerate(exact, start=1):
                e += self.N[n] // self.N[k] * ek
            return e, 0.0
        if self._enumerable(n):
            lift = self.lift(p, n)
            tot = sum(lift.prob(a) * self.roof_length(a) for a in self.enumerate_letters(n))
            return float(tot), 0.0
        rng = as_rng(rng)
        samples = max(samples, 1000)
        lift = self.lift(p, n)
        roofs = np.array([self.roof_length(a) for a in lift.sample(samples, rng)], dtype=float)
        return float(roofs.mean()), float(roofs.std(ddof=1) / np.sqrt(samples))

    def assumption_report(self) -> dict:
        """Validator notes on the configuration (never raises)."""
        notes = []
        for n, m in enumerate(self.ms, start=1):
            if self.base_len * self.N[n - 1] * self.K * 2.0**-n < 1:
                notes.append(f"level {n}: budget below one symbol, tails are empty")
            if n > 1 and m < self.ms[n - 2]:
                notes.append(f"level {n}: m_n={m} smaller than previous; growth may be too slow")
        return {"constant_base_length": self.rho0.is_constant_length(), "warnings": notes}


@dataclass
class LiftedBernoulli:
    """Implicit product law ``p_n`` on level-``n`` letters."""

    p: BernoulliVector
    n: int
    cascade: Cascade | None = None
    ms: tuple = ()

    @property
    def digits(self) -> int:
        return int(np.prod(self.ms)) if self.ms else 1

    def prob(self, letter) -> float:
        d = letter.digits if isinstance(letter, LetterPath) else _as_array(letter)
        if d.size != self.digits:
            raise ValidationError("letter has the wrong number of digits")
        return float(np.prod(self.p.probs[d]))

    def log_prob(self, letter) -> float:
        d = letter.digits if isinstance(letter, LetterPath) else _as_array(letter)
        with np.errstate(divide="ignore"):
            return float(np.sum(np.log(self.p.probs[d])))

    def sample_digits(self, count: int, rng: RngStream) -> np.ndarray:
        return draw_letters(self.p.cdf, rng.random((count, self.digits)))

    def sample(self, count: int, rng: RngStream) -> list[LetterPath]:
        out = []
        for row in self.sample_digits(count, rng):
            row.setflags(write=False)
            out.append(LetterPath(self.n, row))
        return out


def lift_bernoulli(p: BernoulliVector, n: int, cascade: Cascade | Sequence[int]) -> LiftedBernoulli:
    """Product law ``p_n([a]) = prod_i p(digit_i)`` on level-``n`` letters."""
    if isinstance(cascade, Cascade):
        cascade._check_level(n)
        if p.size != cascade.base_size:
            raise ValidationError("vector is not over the base alphabet")
        return LiftedBernoulli(p, n, cascade, cascade.ms[:n])
    ms = tuple(cascade)
    if n > len(ms):
        raise LevelError(f"level {n} beyond depth {len(ms)}")
    return LiftedBernoulli(p, n, None, ms[:n])


def respell(letter: LetterPath, k: int, ms: Sequence[int]) -> list[LetterPath]:
    """Stand-alone respelling using only the repetition counts."""
    if not 0 <= k <= letter.level:
        raise LevelError(f"cannot respell level {letter.level} to level {k}")
    size = int(np.prod(ms[:k])) if k else 1
    return [LetterPath(k, b.copy()) for b in letter.digits.reshape(-1, size)]


def roof_length(cascade: Cascade, letter: LetterPath) -> int:
    return cascade.roof_length(letter)


# fluctuations

@dataclass
class FluctuationStats:
    level: int
    k: int
    expected_roof: float
    expected_roof_stderr: float
    delta_nk: np.ndarray
    delta_nn: np.ndarray
    D: float
    D_stderr: float
    corend_violations: int = 0

    def to_json(self) -> dict:
        q = np.quantile(self.delta_nn, [0.5, 0.9, 0.99]).tolist() if self.delta_nn.size else []
        return {"level": self.level, "k": self.k, "expected_roof": self.expected_roof,
                "expected_roof_stderr": self.expected_roof_stderr, "D": self.D,
                "D_stderr": self.D_stderr, "delta_nn_quantiles": q,
                "delta_nk_mean": float(self.delta_nk.mean()) if self.delta_nk.size else 0.0,
                "corend_violations": self.corend_violations, "samples": int(self.delta_nn.size)}


def fluctuations(cascade: Cascade, p: BernoulliVector, n: int, k: int, samples: int, rng) -> FluctuationStats:
    """Sample the normalised fluctuations and estimate ``D(p~_n, p_n) = E_{p_n} Delta_{n,n}``."""
    if not 0 <= k <= n <= cascade.depth:
        raise LevelError("need 0 <= k <= n <= depth")
    rng = as_rng(rng)
    En, En_se = cascade.expected_roof(p, n, samples, rng.spawn(0))
    Ek, _ = cascade.expected_roof(p, k, samples, rng.spawn(1))
    digits = cascade.lift(p, n).sample_digits(samples, rng.spawn(2))
    table = cascade.roof_table(n, digits)
    roofs = table[n][:, 0].astype(float)
    dnn = np.abs(En - roofs) / En
    if k == n:
        dnk = dnn.copy()
    else:
        dnk = np.abs(Ek - table[k].mean(axis=1)) / Ek
    bound = 4.0 * cascade.K * 2.0**-k
    violations = 0
    if 0 < k < n:
        violations = int(np.count_nonzero(dnn > dnk * (1 + bound) + bound + 1e-12))
    se = float(dnn.std(ddof=1) / np.sqrt(samples)) if samples > 1 else 0.0
    return FluctuationStats(n, k, En, En_se, dnk, dnn, float(dnn.mean()), se, violations)


def tail_sandwich(cascade: Cascade, letter: LetterPath, k: int) -> tuple[bool, Fraction]:
    """Exact check of ``1 <= |rho_n(a)| / sum|rho_k(a_i)| <= 1 + 4K(2^-k - 2^-n)``."""
    n = letter.level
    num = cascade.roof_length(letter)
    den = sum(cascade.roof_length(b) for b in cascade.respell(letter, k))
    ratio = Fraction(num, den)
    upper = 1 + 4 * cascade.Kfrac * (Fraction(1, 2**k) - Fraction(1, 2**n))
    return (1 <= ratio <= upper), ratio


# uniform law of large numbers

def bernstein_series(L: float, delta: float, card: int, terms: int | None = None) -> float:
    """``2 card sum_l exp(-6(l delta + L)^2 / (3l + 4(l delta + L)))`` with a geometric tail bound."""
    c = 1.5 * delta**2 / (1.0 + delta)  # exponent >= c*l once l >= 4L
    if terms is None:
        terms = int(max(4 * L, 1) + math.ceil(40.0 / c)) + 1
    ell = np.arange(1, terms + 1, dtype=float)
    a = ell * delta + L
    s = np.exp(-6.0 * a**2 / (3.0 * ell + 4.0 * a)).sum()
    if terms >= 4 * L:
        s += math.exp(-c * (terms + 1)) / (-math.expm1(-c))
    else:
        s += float("inf")
    return float(2 * card * s)


def bernstein_L(delta: float, card: int, tol: float = 1e-6) -> tuple[float, float]:
    """Smallest ``L`` (to ``tol``) with series value ``<= delta``; returns ``(L, series)``."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    lo, hi = 0.0, 1.0
    while bernstein_series(hi, delta, card) > delta:
        hi *= 2.0
    if bernstein_series(lo, delta, card) <= delta:
        return 0.0, bernstein_series(0.0, delta, card)
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if bernstein_series(mid, delta, card) <= delta:
            hi = mid
        else:
            lo = mid
    return hi, bernstein_series(hi, delta, card)


@dataclass
class LlnReport:
    L: float
    series: float
    delta: float
    horizon: int
    trials: int
    good_mass: float
    stderr: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def good_set_mass(p: BernoulliVector, L: float, delta: float, horizon: int, trials: int, rng,
                  chunk: int = 2000) -> tuple[float, float]:
    """Monte-Carlo mass of sequences meeting the frequency condition for all ``l <= horizon``."""
    rng = as_rng(rng)
    ell = np.arange(1, horizon + 1, dtype=float)
    slack = L / ell + delta
    good = 0
    done = 0
    i = 0
    while done < trials:
        b = min(chunk, trials - done)
        seqs = draw_letters(p.cdf, rng.spawn(i).random((b, horizon)))
        ok = np.ones(b, dtype=bool)
        for c in range(p.size):
            freq = np.cumsum(seqs == c, axis=1) / ell
            ok &= np.all(np.abs(p.probs[c] - freq) < slack, axis=1)
        good += int(ok.sum())
        done += b
        i += 1
    m = good / trials
    return m, math.sqrt(max(m * (1 - m), 0.0) / trials)


def lln_check(p: BernoulliVector, horizon: int, delta: float, trials: int, rng,
              L: float | None = None) -> LlnReport:
    """Compute ``L(delta)`` from the Bernstein series and estimate the good-set mass."""
    if not 0 < delta < 1:
        raise ValidationError("delta must lie in (0, 1)")
    if L is None:
        L, series = bernstein_L(delta, p.size)
    else:
        series = bernstein_series(L, delta, p.size)
    mass, se = good_set_mass(p, L, delta, horizon, trials, rng)
    return LlnReport(L, series, delta, horizon, trials, mass, se)


# sampling nu_n

def _size_biased(cascade: Cascade, lift: LiftedBernoulli, n: int, rng: RngStream) -> LetterPath:
    top = cascade.roof_upper_bound(n)
    while True:
        a = lift.sample(1, rng)[0]
        if rng.random() * top < cascade.roof_length(a):
            return a


def sample_nu_n(cascade: Cascade, p: BernoulliVector, n: int, length: int, rng) -> Word:
    """Window ``[0, length)`` of a ``nu_n(p)``-typical target stream."""
    if length < 1:
        raise ValidationError("length must be >= 1")
    rng = as_rng(rng)
    lift = cascade.lift(p, n)
    a = _size_biased(cascade, lift, n, rng)
    s = int(rng.integers(0, cascade.roof_length(a)))
    pieces = [cascade.image(a)[s:]]
    have = pieces[0].size
    while have < length:
        for b in lift.sample(8, rng):
            img = cascade.image(b)
            pieces.append(img)
            have += img.size
    return Word(np.concatenate(pieces)[:length], cascade.target_size)


def sample_nu_pair(cascade: Cascade, p: BernoulliVector, k: int, l: int, length: int, rng
                   ) -> tuple[np.ndarray, np.ndarray]:
    """Jointly sampled windows of ``nu_l(p)`` and ``nu_k(p)`` (``k < l``).

    Both marginals are exact.  A size-biased level-``l`` letter and a uniform
    phase give the ``nu_l`` stream.  When the phase falls inside the image of
    one of its level-``k`` sub-letters the ``nu_k`` stream starts at the same
    place and continues with the remaining sub-letters, skipping the higher
    level tails; when it falls in a tail a fresh size-biased level-``k``
    letter is used.  Later level-``l`` letters are shared through their
    respellings.
    """
    if not 0 <= k < l <= cascade.depth:
        raise LevelError("need 0 <= k < l <= depth")
    rng = as_rng(rng)
    lift_l = cascade.lift(p, l)
    x = _size_biased(cascade, lift_l, l, rng)
    img, starts, subs = cascade.image_layout(x, k)
    s = int(rng.integers(0, img.size))
    ys = [img[s:]]
    zs: list = []
    i = int(np.searchsorted(starts, s, side="right") - 1)
    inside = i >= 0 and s < starts[i] + cascade.roof_length(subs[i])
    if inside:
        zs.append(cascade.image(subs[i])[s - starts[i]:])
        zs.extend(cascade.image(b) for b in subs[i + 1:])
    else:
        c = _size_biased(cascade, cascade.lift(p, k), k, rng)
        zs.append(cascade.image(c)[int(rng.integers(0, cascade.roof_length(c))):])
    ny = ys[0].size
    nz = sum(z.size for z in zs)
    while ny < length or nz < length:
        x = lift_l.sample(1, rng)[0]
        y = cascade.image(x)
        ys.append(y)
        ny += y.size
        for b in cascade.respell(x, k):
            z = cascade.image(b)
            zs.append(z)
            nz += z.size
    return np.concatenate(ys)[:length], np.concatenate(zs)[:length]


# entropy and bounds

@dataclass
class NuEntropy:
    value: float
    stderr: float
    roof_floor: float  # h / (|rho_0| (1 + 4K))
    exp_floor: float  # h e^{-4K} / |rho_0|
    geometric_floor: float | None = None  # h e^{-L1|alpha|} / |rho_0|

    def __float__(self) -> float:
        return self.value

    def to_json(self) -> dict:
        return dict(self.__dict__)


def nu_entropy(cascade: Cascade, p: BernoulliVector, n: int, L1_alpha: float | None = None,
               samples: int = 0, rng=None) -> NuEntropy:
    """Abramov entropy ``N_n h(p) / E_n(p)`` of ``nu_n(p)`` with certified floors."""
    h = p.entropy()
    E, se = cascade.expected_roof(p, n, samples, rng)
    value = cascade.N[n] * h / E
    val_se = value * se / E if se else 0.0
    ell0 = cascade.base_len
    geo = None if L1_alpha is None else h * math.exp(-L1_alpha) / ell0
    return NuEntropy(value, val_se, h / (ell0 * (1 + 4 * cascade.K)), h * math.exp(-4 * cascade.K) / ell0, geo)


FORMULAS = {
    "kickoff": "fbar(nu_n, nu_0) <= 6K + 8K^2",
    "level_gap": "fbar(nu_k, nu_l) <= 4K 2^-k",
    "cross_vector": "fbar(nu_k(p), nu_k(q)) <= (1+4K)/2 * min(2, N_k D(p,q))",
    "equicontinuity": "fbar(nu_l(p), nu_l(q)) <= 2*4K 2^-k + (1+4K)/2 * min(2, N_k D(p,q))",
    "entropy_drift": "|h1 - h2| <= 2H(eps) + eps log|A|",
}


def level_fbar_bounds(cascade: Cascade, p: BernoulliVector, q: BernoulliVector, k: int, l: int) -> dict:
    """Certified f̄ upper bounds between cascade measures, tagged with formula ids."""
    if not 0 <= k <= l <= cascade.depth:
        raise LevelError("need 0 <= k <= l <= depth")
    K = cascade.K
    D = float(np.abs(p.probs - q.probs).sum())
    cross = 0.5 * (1 + 4 * K) * min(2.0, cascade.N[k] * D)
    gap = 4 * K * 2.0**-k if l > k else 0.0
    out = {
        "kickoff": {"value": 6 * K + 8 * K**2, "formula": FORMULAS["kickoff"]},
        "level_gap": {"value": gap, "formula": FORMULAS["level_gap"]},
        "cross_vector": {"value": cross, "formula": FORMULAS["cross_vector"]},
        "equicontinuity": {"value": 2 * gap + cross, "formula": FORMULAS["equicontinuity"]},
        "K": K, "k": k, "l": l, "D": D,
    }
    return out
