"""Discrete-time suspensions over a Bernoulli shift and their projections.

A point is a base window together with the position of coordinate 0
inside it and a height ``0 <= s < R(a_0)``.  Two invariant measures are
provided.  ``lambda`` is the normalised restriction of ``p x counting``.
``lambda-tilde`` is the invariant measure whose letter at the current
column has law ``p`` itself; it coincides with ``lambda`` for the base
vector proportional to ``p_a / R(a)``, which is how it is sampled.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AlphabetMismatchError, RoofMismatchError, ValidationError, WindowExhaustedError
from .substitution import SubstitutionMap, size_biased_letter
from .symdyn import Alphabet, BernoulliVector, _as_array, as_rng, draw_letters


class RoofFunction:
    def __init__(self, heights):
        h = np.array(_as_array(heights), dtype=np.int64)
        if h.size == 0 or np.any(h < 1):
            raise ValidationError("roof heights must be positive integers")
        h.setflags(write=False)
        self.heights = h
        self.alphabet = Alphabet(h.size)

    @classmethod
    def of(cls, rho: SubstitutionMap) -> "RoofFunction":
        return cls(rho.lengths)

    def __call__(self, a: int) -> int:
        return int(self.heights[a])

    def mean(self, p: BernoulliVector) -> float:
        return float(np.dot(self.heights, p.probs))


@dataclass(frozen=True, eq=False)
class SuspensionPoint:
    base: np.ndarray  # finite window of the base sequence
    origin: int  # index of coordinate 0 in ``base``
    s: int

    def __eq__(self, other) -> bool:
        if not isinstance(other, SuspensionPoint):
            return NotImplemented
        return (self.origin, self.s) == (other.origin, other.s) and np.array_equal(self.base, other.base)

    def __hash__(self):
        return hash((self.base.tobytes(), self.origin, self.s))

    @property
    def letter(self) -> int:
        return int(self.base[self.origin])


def make_point(base, origin: int, s: int, roof: RoofFunction) -> SuspensionPoint:
    b = np.array(_as_array(base), dtype=np.int64)
    b.setflags(write=False)
    if not 0 <= origin < b.size:
        raise ValidationError("origin outside the base window")
    if not 0 <= s < roof(int(b[origin])):
        raise ValidationError("offset is not canonical")
    return SuspensionPoint(b, int(origin), int(s))


def suspension_step(pt: SuspensionPoint, roof: RoofFunction) -> SuspensionPoint:
    """One step of the suspension map."""
    if pt.s + 1 < roof(pt.letter):
        return SuspensionPoint(pt.base, pt.origin, pt.s + 1)
    if pt.origin + 1 >= pt.base.size:
        raise WindowExhaustedError("base window exhausted; extend the window")
    return SuspensionPoint(pt.base, pt.origin + 1, 0)


@dataclass(frozen=True)
class SuspensionMeasureSpec:
    base: BernoulliVector
    roof: RoofFunction
    variant: str = "lambda"  # lambda | lambda-tilde

    def __post_init__(self):
        if self.variant not in ("lambda", "lambda-tilde"):
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.base.alphabet != self.roof.alphabet:
            raise AlphabetMismatchError("roof and base vector use different alphabets")

    def iid_law(self) -> BernoulliVector:
        """Law of the base letters after coordinate 0."""
        if self.variant == "lambda":
            return self.base
        return BernoulliVector.normalized(self.base.probs / self.roof.heights, self.base.alphabet)


@dataclass
class Trajectory:
    """Orbit segment: ``letters[t]``/``offsets[t]`` at each step over ``base``."""

    base: np.ndarray
    columns: np.ndarray  # base index of the current column at each step
    offsets: np.ndarray

    @property
    def letters(self) -> np.ndarray:
        return self.base[self.columns]

    def point(self, t: int) -> SuspensionPoint:
        b = self.base.copy()
        b.setflags(write=False)
        return SuspensionPoint(b, int(self.columns[t]), int(self.offsets[t]))

    def __len__(self) -> int:
        return int(self.columns.size)


def sample_suspension(spec: SuspensionMeasureSpec, steps: int, rng) -> Trajectory:
    """Stationary trajectory of ``steps`` points."""
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    rng = as_rng(rng)
    law = spec.iid_law()
    heights = spec.roof.heights
    a0 = size_biased_letter(law, heights, rng)
    s0 = int(rng.integers(0, heights[a0]))
    need = steps + s0
    letters = [np.array([a0])]
    have = int(heights[a0])
    mean = spec.roof.mean(law)
    while have < need + 1:
        chunk = draw_letters(law.cdf, rng.random(int((need - have) / mean) + 16))
        letters.append(chunk)
        have += int(heights[chunk].sum())
    base = np.concatenate(letters)
    cols = np.repeat(np.arange(base.size), heights[base])
    offs = np.concatenate([np.arange(h) for h in heights[base].tolist()])
    return Trajectory(base, cols[s0:s0 + steps].copy(), offs[s0:s0 + steps].copy())


def abramov_entropy(p: BernoulliVector, roof: RoofFunction) -> float:
    """``h(p) / sum_a R(a) p_a``."""
    if p.alphabet != roof.alphabet:
        raise AlphabetMismatchError("roof and vector use different alphabets")
    return p.entropy() / roof.mean(p)


def project_suspension(rho: SubstitutionMap, pt: SuspensionPoint, roof: RoofFunction | None = None,
                       length: int | None = None) -> np.ndarray:
    """Target symbols ``sigma^s(rho(a_0) rho(a_1) ...)`` readable from the window."""
    if roof is not None and not np.array_equal(roof.heights, rho.lengths):
        raise RoofMismatchError("roof must equal the image lengths")
    if not 0 <= pt.s < rho.lengths[pt.letter]:
        raise RoofMismatchError("offset exceeds the image length")
    tail = pt.base[pt.origin:]
    stream = np.concatenate([rho.images[a] for a in tail.tolist()])[pt.s:]
    if length is not None:
        if length > stream.size:
            raise WindowExhaustedError("base window too short for the requested length")
        stream = stream[:length]
    return stream


def project_trajectory(rho: SubstitutionMap, traj: Trajectory) -> np.ndarray:
    """Symbol read at each step: ``rho(letter)[offset]``."""
    flat = np.concatenate(rho.images)
    starts = np.concatenate([[0], np.cumsum(rho.lengths)[:-1]])
    return flat[starts[traj.letters] + traj.offsets]


def trajectory_csv_rows(rho: SubstitutionMap | None, traj: Trajectory) -> list[tuple]:
    sym = project_trajectory(rho, traj) if rho is not None else np.full(len(traj), -1)
    return [(t, int(a), int(s), int(b)) for t, (a, s, b) in
            enumerate(zip(traj.letters.tolist(), traj.offsets.tolist(), sym.tolist()))]
