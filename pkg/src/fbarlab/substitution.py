"""Substitution maps and the Bernoulli-coded measures they induce.

Convention for the invariant coded measure.  ``CodedMeasureSpec.base`` is the
law of the i.i.d. source letters.  The invariant version is the stationary
process obtained by concatenating images of i.i.d. letters and reading from
a uniformly random position; the image covering coordinate 0 is therefore
size-biased, with law ``|rho(a)| p_a / E|rho|``.  A measure described by the
law of its covering letter ``q`` instead is obtained with
:meth:`CodedMeasureSpec.from_covering_law`, which uses the i.i.d. law
proportional to ``q_a / |rho(a)|``.  The two descriptions coincide when all
images have equal length.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import (AlphabetMismatchError, CapExceededError, SubsequenceError,
                     UseSamplerError, ValidationError)
from .symdyn import (Alphabet, BernoulliVector, CylinderSpec, RngStream, Word, _as_array,
                     as_rng, as_word, city_metric, draw_letters)

DEFAULT_DEPTH_CAP = 16
DEFAULT_REGROUP_CAP = 4096


class SubstitutionMap:
    """Letter-to-word map ``rho: A -> B*`` with nonempty images."""

    def __init__(self, images: Sequence[Sequence[int]], target_size: int | None = None,
                 source_size: int | None = None):
        imgs = [np.array(_as_array(w), dtype=np.int64) for w in images]
        if not imgs:
            raise ValidationError("a substitution needs at least one letter")
        if any(w.size == 0 for w in imgs):
            raise ValidationError("empty images are not allowed")
        if source_size is not None and source_size != len(imgs):
            raise AlphabetMismatchError(f"{len(imgs)} images for source size {source_size}")
        top = max(int(w.max()) for w in imgs)
        if target_size is None:
            target_size = top + 1
        if top >= target_size or min(int(w.min()) for w in imgs) < 0:
            raise AlphabetMismatchError("image symbols outside the target alphabet")
        for w in imgs:
            w.setflags(write=False)
        self.source = Alphabet(len(imgs))
        self.target = Alphabet(target_size)
        self.images = tuple(imgs)
        self.lengths = np.array([w.size for w in imgs], dtype=np.int64)
        self.lengths.setflags(write=False)
        self.min_len = int(self.lengths.min())
        self.max_len = int(self.lengths.max())

    @classmethod
    def identity(cls, size: int) -> "SubstitutionMap":
        return cls([[a] for a in range(size)], size)

    @classmethod
    def from_json(cls, obj: dict) -> "SubstitutionMap":
        return cls(obj["images"], obj.get("target_size"), obj.get("source_size"))

    def to_json(self) -> dict:
        return {"source_size": self.source.size, "target_size": self.target.size,
                "images": [w.tolist() for w in self.images]}

    def image(self, a: int) -> np.ndarray:
        return self.images[a]

    def apply(self, w) -> Word:
        return apply_substitution(self, w)

    def is_constant_length(self) -> bool:
        return self.min_len == self.max_len

    def __eq__(self, other) -> bool:
        return (isinstance(other, SubstitutionMap) and self.target == other.target
                and len(self.images) == len(other.images)
                and all(np.array_equal(a, b) for a, b in zip(self.images, other.images)))

    def __repr__(self) -> str:
        return f"SubstitutionMap({[w.tolist() for w in self.images]}, target={self.target.size})"


def apply_substitution(rho: SubstitutionMap, w) -> Word:
    """Concatenation ``rho(w_0) rho(w_1) ...``."""
    s = _as_array(w)
    if isinstance(w, Word) and w.alphabet != rho.source:
        raise AlphabetMismatchError("word is not over the substitution's source alphabet")
    if s.size and (s.min() < 0 or s.max() >= rho.source.size):
        raise AlphabetMismatchError("word is not over the substitution's source alphabet")
    if s.size == 0:
        return Word(np.empty(0, dtype=np.int64), rho.target)
    return Word(np.concatenate([rho.images[a] for a in s.tolist()]), rho.target)


@dataclass(frozen=True)
class CodedMeasureSpec:
    substitution: SubstitutionMap
    base: BernoulliVector
    variant: str = "kappa-inv"  # kappa | kappa-inv

    def __post_init__(self):
        if self.variant not in ("kappa", "kappa-inv"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.base.alphabet != self.substitution.source:
            raise AlphabetMismatchError("base vector is not over the substitution's source")

    @classmethod
    def from_covering_law(cls, rho: SubstitutionMap, q: BernoulliVector) -> "CodedMeasureSpec":
        """Invariant coded measure whose letter covering coordinate 0 has law ``q``."""
        return cls(rho, covering_to_iid(rho, q), "kappa-inv")


def covering_to_iid(rho: SubstitutionMap, q: BernoulliVector) -> BernoulliVector:
    """i.i.d. letter law whose size-biased version is ``q``."""
    return BernoulliVector.normalized(q.probs / rho.lengths, q.alphabet)


def kappa_cylinder(spec: CodedMeasureSpec, c, depth_cap: int = DEFAULT_DEPTH_CAP) -> float:
    """Exact mass of a target cylinder anchored at 0 under the coded measure."""
    rho, p = spec.substitution, spec.base
    if not isinstance(c, CylinderSpec):
        c = CylinderSpec(as_word(c, rho.target))
    u = c.word.symbols
    if c.word.alphabet != rho.target:
        raise AlphabetMismatchError("cylinder is not over the target alphabet")
    if u.size > depth_cap:
        raise UseSamplerError(f"cylinder length {u.size} exceeds depth cap {depth_cap}")
    if u.size == 0:
        return 1.0
    probs = p.probs
    imgs = rho.images
    n = u.size

    @lru_cache(maxsize=None)
    def rest(i: int) -> float:
        # mass that i.i.d. images starting at a letter boundary spell u[i:]
        if i >= n:
            return 1.0
        total = 0.0
        for a, img in enumerate(imgs):
            if probs[a] == 0.0:
                continue
            k = min(img.size, n - i)
            if np.array_equal(img[:k], u[i:i + k]):
                total += probs[a] * rest(i + k)
        return total

    if spec.variant == "kappa":
        return float(rest(0))
    total = 0.0
    for a, img in enumerate(imgs):
        if probs[a] == 0.0:
            continue
        for j in range(img.size):
            seg = img[j:]
            k = min(seg.size, n)
            if np.array_equal(seg[:k], u[:k]):
                total += probs[a] * rest(k)
    return float(total / float(np.dot(probs, rho.lengths)))


def size_biased_letter(p: BernoulliVector, lengths: np.ndarray, rng: RngStream) -> int:
    """Letter with law ``|rho(a)| p_a / E|rho|`` by acceptance-rejection."""
    top = int(lengths.max())
    while True:
        a = int(draw_letters(p.cdf, rng.random(1))[0])
        if rng.random() * top < lengths[a]:
            return a


def sample_coded(spec: CodedMeasureSpec, length: int, rng) -> Word:
    """A window ``[0, length)`` of a stream typical for the coded measure."""
    if length < 1:
        raise ValidationError("length must be >= 1")
    rng = as_rng(rng)
    rho, p = spec.substitution, spec.base
    pieces = []
    have = 0
    if spec.variant == "kappa-inv":
        a = size_biased_letter(p, rho.lengths, rng)
        s = int(rng.integers(0, rho.lengths[a]))
        pieces.append(rho.images[a][s:])
        have = pieces[0].size
    mean_len = float(np.dot(p.probs, rho.lengths))
    while have < length:
        k = int((length - have) / mean_len) + 16
        letters = draw_letters(p.cdf, rng.random(k))
        chunk = np.concatenate([rho.images[a] for a in letters.tolist()])
        pieces.append(chunk)
        have += chunk.size
    return Word(np.concatenate(pieces)[:length], rho.target)


def tilde_vector(rho: SubstitutionMap, p: BernoulliVector) -> BernoulliVector:
    """Length-weighted vector ``p~_a = |rho(a)| p_a / sum_b |rho(b)| p_b``."""
    if p.alphabet != rho.source:
        raise AlphabetMismatchError("vector is not over the substitution's source")
    return BernoulliVector.normalized(rho.lengths * p.probs, p.alphabet)


def is_subsequence(short, long) -> bool:
    """Greedy two-pointer subsequence test."""
    s, t = _as_array(short).tolist(), _as_array(long).tolist()
    i = 0
    for x in t:
        if i < len(s) and s[i] == x:
            i += 1
    return i == len(s)


def substitution_perturbation_bound(rho: SubstitutionMap, rho_prime: SubstitutionMap) -> float:
    """``C = max_a (1 - |rho'(a)|/|rho(a)|)`` when each ``rho'(a)`` is a subsequence of ``rho(a)``."""
    if rho.source != rho_prime.source:
        raise AlphabetMismatchError("substitutions have different sources")
    for a, (img, img2) in enumerate(zip(rho.images, rho_prime.images)):
        if not is_subsequence(img2, img):
            raise SubsequenceError(f"image of letter {a} is not a subsequence")
    return float(np.max(1.0 - rho_prime.lengths / rho.lengths))


def vector_perturbation_bound(rho: SubstitutionMap, p: BernoulliVector, q: BernoulliVector) -> float:
    """``(max|rho|/min|rho|) D(p, q) / 2``."""
    return 0.5 * rho.max_len / rho.min_len * city_metric(p, q)


def regroup_power(rho: SubstitutionMap, p: BernoulliVector, r: int,
                  cap: int = DEFAULT_REGROUP_CAP) -> tuple[SubstitutionMap, BernoulliVector]:
    """Regroup into blocks of ``r`` source letters (lexicographic letter order)."""
    if r < 1:
        raise ValidationError("r must be >= 1")
    size = rho.source.size ** r
    if size > cap:
        raise CapExceededError(f"source^{r} has {size} letters, cap {cap}")
    blocks = np.array(np.meshgrid(*([np.arange(rho.source.size)] * r), indexing="ij")).reshape(r, -1).T
    images = [np.concatenate([rho.images[a] for a in b]) for b in blocks.tolist()]
    probs = np.prod(p.probs[blocks], axis=1)
    return SubstitutionMap(images, rho.target.size), BernoulliVector(probs / probs.sum())
