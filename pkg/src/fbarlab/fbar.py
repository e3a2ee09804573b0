"""Edit distance f̄ₙ and f̄ between sequences and measures.

The edit distance of two n-words is ``1 - k/n`` with ``k`` the length of a
longest common *subsequence*: matched indices must be increasing in both
words but need not be contiguous.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import (AlphabetMismatchError, UseMonteCarloError,
                     ValidationError, WindowExhaustedError)
from .lcs import lcs_length, lcs_matrix, lcs_rows
from .symdyn import BernoulliVector, RngStream, Word, _as_array, as_rng, city_metric, draw_letters

DEFAULT_COST_CAP = 10**6
DEFAULT_SCHEDULE = tuple(2**k for k in range(4, 17))


@dataclass
class FbarEstimate:
    value: float
    kind: str  # exact | upper-bound | lower-bound
    n: int
    samples: int = 0
    stderr: float = 0.0
    trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.kind not in ("exact", "upper-bound", "lower-bound"):
            raise ValidationError(f"unknown estimate kind {self.kind!r}")
        if not (-1e-12 <= self.value <= 1 + 1e-12):
            raise ValidationError(f"f-bar value {self.value} outside [0, 1]")
        self.value = float(min(max(self.value, 0.0), 1.0))

    def to_json(self) -> dict:
        out = {"value": self.value, "kind": self.kind, "n": self.n,
               "samples": self.samples, "stderr": self.stderr}
        if self.trace:
            out["trace"] = [[int(a), float(b)] for a, b in self.trace]
        return out


def _word_arrays(a, b) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(a, Word) and isinstance(b, Word) and a.alphabet != b.alphabet:
        raise AlphabetMismatchError("words over different alphabets")
    return _as_array(a), _as_array(b)


def edit_distance_n(a, b) -> float:
    """``f̄ₙ(a, b) = 1 - LCS(a, b)/n`` for two words of common length ``n >= 1``."""
    x, y = _word_arrays(a, b)
    if x.size != y.size:
        raise ValidationError(f"lengths differ: {x.size} vs {y.size}")
    if x.size == 0:
        raise ValidationError("edit distance needs n >= 1")
    return 1.0 - lcs_length(x, y) / x.size


def edit_distance_rows(A, B) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, dtype=np.int64))
    B = np.atleast_2d(np.asarray(B, dtype=np.int64))
    if A.shape != B.shape:
        raise ValidationError("row batches must have the same shape")
    return 1.0 - lcs_rows(A, B) / A.shape[1]


def fbar_sequences(a, b, schedule: Sequence[int] | None = None,
                   origin: int | None = None) -> FbarEstimate:
    """Approximate ``limsup f̄_{2n}`` over centred windows of two streams.

    ``a`` and ``b`` hold coordinates ``-origin .. len-origin-1``; by default
    ``origin = len // 2``.  Each scheduled length ``L`` compares the windows
    ``[-L/2, L/2)``.  The limsup is replaced by the maximum over the upper
    half of the windows that fit, which is reported as an upper-bound.
    """
    x, y = _word_arrays(a, b)
    schedule = sorted(int(s) for s in (schedule or DEFAULT_SCHEDULE))
    if not schedule or schedule[0] < 2:
        raise ValidationError("window schedule must contain lengths >= 2")
    ox = x.size // 2 if origin is None else int(origin)
    oy = y.size // 2 if origin is None else int(origin)
    trace = []
    for L in schedule:
        lo, hi = L // 2, L - L // 2
        if ox - lo < 0 or oy - lo < 0 or ox + hi > x.size or oy + hi > y.size:
            break
        d = edit_distance_n(x[ox - lo: ox + hi], y[oy - lo: oy + hi])
        trace.append((L, d))
    if not trace:
        raise WindowExhaustedError(f"streams too short for the smallest window {schedule[0]}")
    tail = trace[len(trace) // 2:]
    value = max(v for _, v in tail)
    return FbarEstimate(value, "upper-bound", trace[-1][0], samples=0, trace=trace)


@dataclass
class JoiningProblem:
    """Transport between two n-block laws with cost f̄ₙ."""

    left: Mapping[tuple, float]
    right: Mapping[tuple, float]
    n: int = 0

    def __post_init__(self):
        lens = {len(w) for w in self.left} | {len(w) for w in self.right}
        if len(lens) != 1:
            raise ValidationError(f"support words have lengths {sorted(lens)}")
        self.n = lens.pop()
        if self.n < 1:
            raise ValidationError("block length must be >= 1")
        for side, law in (("left", self.left), ("right", self.right)):
            mass = float(sum(law.values()))
            if abs(mass - 1.0) > 1e-9:
                raise ValidationError(f"{side} marginal sums to {mass}")
            if any(v < 0 for v in law.values()):
                raise ValidationError(f"{side} marginal has negative mass")

    def arrays(self):
        lw = np.array(list(self.left.keys()), dtype=np.int64).reshape(len(self.left), self.n)
        rw = np.array(list(self.right.keys()), dtype=np.int64).reshape(len(self.right), self.n)
        lp = np.array(list(self.left.values()), dtype=float)
        rp = np.array(list(self.right.values()), dtype=float)
        return lw, lp / lp.sum(), rw, rp / rp.sum()

    def cost_matrix(self) -> np.ndarray:
        lw, _, rw, _ = self.arrays()
        return 1.0 - lcs_matrix(lw, rw) / self.n


def _import_ot():
    for name in ("TENSORFLOW", "PYTORCH", "JAX", "CUPY"):
        os.environ.setdefault(f"POT_BACKEND_DISABLE_{name}", "1")
    import ot  # noqa: E402

    return ot


def fbar_measures_exact(left: Mapping[tuple, float], right: Mapping[tuple, float],
                        cap: int = DEFAULT_COST_CAP, return_plan: bool = False):
    """Optimal joining cost ``inf E f̄ₙ`` via exact network-simplex transport."""
    prob = JoiningProblem(dict(left), dict(right))
    size = len(prob.left) * len(prob.right)
    if size > cap:
        raise UseMonteCarloError(f"{size} cost entries exceed cap {cap}")
    lw, lp, rw, rp = prob.arrays()
    cost = 1.0 - lcs_matrix(lw, rw) / prob.n
    ot = _import_ot()
    plan = ot.emd(lp, rp, cost, numItermax=max(100000, 50 * size))
    value = float(np.sum(plan * cost))
    est = FbarEstimate(value, "exact", prob.n)
    return (est, plan) if return_plan else est


def _draw(sampler, n: int, rng: RngStream) -> np.ndarray:
    if isinstance(sampler, BernoulliVector):
        return draw_letters(sampler.cdf, rng.random(n))
    if hasattr(sampler, "sample"):
        return _as_array(sampler.sample(n, rng))
    return _as_array(sampler(n, rng))


def fbar_coupling_upper(left, right, n: int, trials: int, rng, coupling: str | Callable | None = None
                        ) -> FbarEstimate:
    """Mean f̄ₙ under an explicit joining of two n-word samplers.

    Samplers are ``BernoulliVector`` objects, objects with ``sample(n, rng)``
    or callables ``(n, rng) -> word``.  Two Bernoulli inputs default to the
    monotone coupling (one shared uniform pushed through both CDFs); anything
    else defaults to independent draws.  ``coupling`` may also be a callable
    ``(n, rng) -> (a, b)`` producing jointly distributed words.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    if n < 1:
        raise ValidationError("n must be >= 1")
    rng = as_rng(rng)
    both_bern = isinstance(left, BernoulliVector) and isinstance(right, BernoulliVector)
    if coupling is None:
        coupling = "monotone" if both_bern else "independent"
    if coupling == "monotone":
        if not both_bern:
            raise ValidationError("monotone coupling needs two Bernoulli vectors")
        u = rng.random((trials, n))
        A = draw_letters(left.cdf, u)
        B = draw_letters(right.cdf, u)
    elif coupling == "independent":
        A = np.stack([_draw(left, n, rng.spawn(2 * t)) for t in range(trials)])
        B = np.stack([_draw(right, n, rng.spawn(2 * t + 1)) for t in range(trials)])
    elif callable(coupling):
        pairs = [coupling(n, rng.spawn(t)) for t in range(trials)]
        A = np.stack([_as_array(p[0])[:n] for p in pairs])
        B = np.stack([_as_array(p[1])[:n] for p in pairs])
    else:
        raise ValidationError(f"unknown coupling {coupling!r}")
    d = edit_distance_rows(A, B)
    se = float(d.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return FbarEstimate(float(d.mean()), "upper-bound", n, samples=trials, stderr=se)


def bernoulli_fbar(p: BernoulliVector, q: BernoulliVector) -> float:
    """Closed form ``f̄(p, q) = D(p, q)/2`` for Bernoulli measures."""
    return 0.5 * city_metric(p, q)


def entropy_drift_bound(eps: float, alphabet_size: int) -> float:
    """Entropy gap bound ``2H(eps) + eps log|A|`` for measures with ``f̄ < eps``."""
    if not 0.0 < eps < 1.0:
        raise ValidationError(f"eps must lie in (0, 1), got {eps}")
    if alphabet_size < 1:
        raise ValidationError("alphabet size must be >= 1")
    h = -eps * np.log(eps) - (1.0 - eps) * np.log1p(-eps)
    return float(2.0 * h + eps * np.log(alphabet_size))


def lb_diagnostic(sampler, n: int, eps: float, trials: int, rng) -> float:
    """Fraction of independent sampled n-word pairs with ``f̄ₙ < eps``.

    A heuristic indicator of the loosely Bernoulli property, not a proof.
    """
    if trials < 2:
        raise ValidationError("trials must be >= 2")
    rng = as_rng(rng)
    A = np.stack([_draw(sampler, n, rng.spawn(2 * t)) for t in range(trials)])
    B = np.stack([_draw(sampler, n, rng.spawn(2 * t + 1)) for t in range(trials)])
    return float(np.mean(edit_distance_rows(A, B) < eps))


def fbar_family(p: BernoulliVector, q: BernoulliVector, ns: Sequence[int],
                cap: int = DEFAULT_COST_CAP) -> list[FbarEstimate]:
    """Exact ``f̄ₙ`` between the n-block marginals of two Bernoulli measures."""
    from .symdyn import bernoulli_block_law

    return [fbar_measures_exact(bernoulli_block_law(p, n), bernoulli_block_law(q, n), cap=cap)
            for n in ns]


def read_word_law(obj) -> dict[tuple, float]:
    """Parse a JSON distribution: either ``{"0,1": p}`` or ``[[word, p], ...]``."""
    if isinstance(obj, dict):
        out = {}
        for k, v in obj.items():
            key = tuple(int(s) for s in str(k).replace(" ", "").strip("()[]").split(",") if s != "")
            out[key] = float(v)
        return out
    return {tuple(int(s) for s in w): float(pr) for w, pr in obj}


def write_word_law(law: Mapping[tuple, float]) -> dict:
    return {",".join(str(s) for s in w): float(v) for w, v in law.items()}
