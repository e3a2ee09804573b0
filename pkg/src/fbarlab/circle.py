"""Step skew products with projective fiber maps on the circle of lines.

A line through the origin is stored by its angle ``theta`` in ``[0, pi)``.
For ``A`` in SL(2, R) the fiber map is ``f_A(v) = Av/|Av|`` and, for a unit
vector ``v``, ``log|f_A'(v)| = -2 log|Av|``.  Words are 0-based sequences of
generator indices and act left to right: the first symbol is applied first.

Intervals are oriented arcs ``[start, start + length]`` taken mod ``pi``.
All fiber maps preserve orientation, so the image of an arc is the arc
spanned by the images of its endpoints.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba as nb
import numpy as np

from .cascade import Cascade, TailProvider, _size_biased
from .errors import (BudgetExhaustedError, DisjointnessError, TailSearchError, UncertifiedError,
                     ValidationError)
from .substitution import SubstitutionMap
from .symdyn import BernoulliVector, _as_array, as_rng

PI = math.pi
DEFAULT_TOL = 1e-10


# matrices and points

class Sl2Matrix:
    """Real 2x2 matrix rescaled to determinant one."""

    __slots__ = ("m",)

    def __init__(self, a, b=None, c=None, d=None):
        if b is None:
            arr = np.asarray(a, dtype=float).reshape(2, 2)
        else:
            arr = np.array([[a, b], [c, d]], dtype=float)
        det = arr[0, 0] * arr[1, 1] - arr[0, 1] * arr[1, 0]
        if not np.isfinite(det) or det <= 0:
            raise ValidationError(f"matrix needs a positive determinant, got {det}")
        arr = arr / math.sqrt(det)
        arr.setflags(write=False)
        self.m = arr

    @classmethod
    def rotation(cls, t: float) -> "Sl2Matrix":
        c, s = math.cos(t), math.sin(t)
        # exact zeros at quarter turns; round-off there is amplified by hyperbolic partners
        c, s = (0.0 if abs(c) < 1e-15 else c), (0.0 if abs(s) < 1e-15 else s)
        return cls(c, -s, s, c)

    @classmethod
    def diag(cls, lam: float) -> "Sl2Matrix":
        return cls(lam, 0.0, 0.0, 1.0 / lam)

    @property
    def entries(self) -> tuple[float, float, float, float]:
        return tuple(float(x) for x in self.m.ravel())

    @property
    def trace(self) -> float:
        return float(self.m[0, 0] + self.m[1, 1])

    def is_elliptic(self, tol: float = 1e-9) -> bool:
        return abs(self.trace) < 2.0 - tol

    def is_hyperbolic(self, tol: float = 1e-9) -> bool:
        return abs(self.trace) > 2.0 + tol

    def inverse(self) -> "Sl2Matrix":
        a, b, c, d = self.entries
        return Sl2Matrix(d, -b, -c, a)

    def __matmul__(self, other: "Sl2Matrix") -> "Sl2Matrix":
        return Sl2Matrix(self.m @ other.m)

    def __repr__(self) -> str:
        return f"Sl2Matrix({', '.join(f'{x:.6g}' for x in self.entries)})"


@dataclass(frozen=True)
class ProjectivePoint:
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", float(self.theta) % PI)

    @property
    def vector(self) -> np.ndarray:
        return np.array([math.cos(self.theta), math.sin(self.theta)])


def angle_dist(x, y):
    """Distance between lines, at most ``pi/2``."""
    d = np.mod(np.asarray(x) - np.asarray(y), PI)
    return np.minimum(d, PI - d)


def _act(m: np.ndarray, th):
    """Image angles and log-derivatives of ``f_m`` at ``th`` (broadcasting)."""
    c, s = np.cos(th), np.sin(th)
    x = m[..., 0, 0] * c + m[..., 0, 1] * s
    y = m[..., 1, 0] * c + m[..., 1, 1] * s
    return np.mod(np.arctan2(y, x), PI), -np.log(x * x + y * y)


def projective_map(A: Sl2Matrix, v: ProjectivePoint | float) -> tuple[ProjectivePoint, float]:
    """Image line and ``log|f_A'(v)|``."""
    th = v.theta if isinstance(v, ProjectivePoint) else float(v)
    img, ld = _act(A.m, th)
    return ProjectivePoint(float(img)), float(ld)


@dataclass(frozen=True)
class Arc:
    """Oriented arc ``[start, start + length]`` of lines, ``0 < length < pi``."""

    start: float
    length: float

    def __post_init__(self):
        if not 0.0 < self.length < PI:
            raise ValidationError(f"arc length must lie in (0, pi), got {self.length}")
        object.__setattr__(self, "start", float(self.start) % PI)
        object.__setattr__(self, "length", float(self.length))

    @classmethod
    def around(cls, center: float, half_width: float) -> "Arc":
        return cls(center - half_width, 2.0 * half_width)

    @property
    def end(self) -> float:
        return (self.start + self.length) % PI

    @property
    def center(self) -> float:
        return (self.start + 0.5 * self.length) % PI

    def offset(self, th):
        return np.mod(np.asarray(th) - self.start, PI)

    def contains(self, th, margin: float = 0.0):
        off = self.offset(th)
        return (off >= margin) & (off <= self.length - margin)

    def grid(self, n: int) -> np.ndarray:
        return self.start + self.length * np.linspace(0.0, 1.0, n)

    def image_margin(self, lo, hi):
        """Margin by which the arc from ``lo`` to ``hi`` sits inside (negative if not)."""
        off = self.offset(lo)
        span = np.mod(np.asarray(hi) - np.asarray(lo), PI)
        return np.minimum(off, self.length - off - span)

    def to_json(self) -> dict:
        return {"start": self.start, "length": self.length}

    @classmethod
    def from_json(cls, obj) -> "Arc":
        if isinstance(obj, dict):
            return cls(obj["start"], obj["length"])
        lo, hi = obj
        return cls(lo, (hi - lo) % PI)


class SkewSystem:
    """Generators ``A_0..A_{N-1}`` of a step skew product over ``Sigma_N``."""

    def __init__(self, matrices: Sequence):
        mats = [m if isinstance(m, Sl2Matrix) else Sl2Matrix(m) for m in matrices]
        if not mats:
            raise ValidationError("a skew system needs at least one generator")
        self.generators = tuple(mats)
        arr = np.stack([m.m for m in mats])
        arr.setflags(write=False)
        self.mats = arr

    @property
    def size(self) -> int:
        return len(self.generators)

    @classmethod
    def from_json(cls, obj: dict) -> "SkewSystem":
        if "matrices" not in obj:
            raise ValidationError("system JSON needs a 'matrices' list")
        return cls([np.asarray(m, dtype=float).reshape(2, 2) for m in obj["matrices"]])

    @classmethod
    def load(cls, path) -> "SkewSystem":
        with open(path) as fh:
            return cls.from_json(json.load(fh))

    def to_json(self) -> dict:
        return {"matrices": [list(m.entries) for m in self.generators]}

    def inverse(self) -> "SkewSystem":
        return SkewSystem([m.inverse() for m in self.generators])

    def check_word(self, w) -> np.ndarray:
        s = _as_array(w)
        if s.size and (s.min() < 0 or s.max() >= self.size):
            raise ValidationError(f"word uses symbols outside 0..{self.size - 1}")
        return s

    def word_matrix(self, w) -> np.ndarray:
        m = np.eye(2)
        for a in self.check_word(w).tolist():
            m = self.mats[a] @ m
        return m


def word_map(sys: SkewSystem, w, x: ProjectivePoint | float) -> tuple[ProjectivePoint, np.ndarray]:
    """Image of ``x`` under ``f_w`` and the prefix sums of log-derivatives."""
    s = sys.check_word(w)
    th = x.theta if isinstance(x, ProjectivePoint) else float(x) % PI
    sums = np.empty(s.size)
    acc = 0.0
    for i, a in enumerate(s.tolist()):
        th, ld = _act(sys.mats[a], th)
        acc += float(ld)
        sums[i] = acc
    return ProjectivePoint(float(th)), sums


@nb.njit(cache=True)
def _orbit_kernel(mats, symbols, x0):
    n = symbols.shape[0]
    th = np.empty(n + 1)
    ld = np.empty(n)
    th[0] = x0
    t = x0
    for i in range(n):
        m = mats[symbols[i]]
        c = math.cos(t)
        s = math.sin(t)
        x = m[0, 0] * c + m[0, 1] * s
        y = m[1, 0] * c + m[1, 1] * s
        ld[i] = -math.log(x * x + y * y)
        t = math.atan2(y, x) % math.pi
        th[i + 1] = t
    return th, ld


def fiber_orbit(sys: SkewSystem, symbols, x0: float) -> tuple[np.ndarray, np.ndarray]:
    """Fiber angles ``x_0..x_n`` and log-derivatives along a symbol stream."""
    s = np.ascontiguousarray(sys.check_word(symbols), dtype=np.int64)
    return _orbit_kernel(np.ascontiguousarray(sys.mats), s, float(x0) % PI)


def fiber_exponent(sys: SkewSystem, stream, x0: ProjectivePoint | float, n: int) -> float:
    """Finite-time fiber exponent ``(1/n) sum log|f'|`` along the first ``n`` symbols."""
    if n < 1:
        raise ValidationError("n must be >= 1")
    s = _as_array(stream)
    if s.size < n:
        raise ValidationError(f"stream has {s.size} symbols, need {n}")
    x = x0.theta if isinstance(x0, ProjectivePoint) else float(x0)
    _, ld = fiber_orbit(sys, s[:n], x)
    return float(ld.sum() / n)


# grid scans with derivative-variation margins

def _lip_bound(P: np.ndarray, th: np.ndarray, h: float) -> np.ndarray:
    """Per-cell Lipschitz bound of ``theta -> log|f_P'(theta)|`` on grid cells.

    With singular values ``s1 >= s2 = 1/s1`` and ``phi`` the angle to the top
    right singular vector, the derivative is bounded by ``s1^2 - s2^2`` and by
    ``2|tan phi|``.
    """
    p = P[:, 0, 0] ** 2 + P[:, 1, 0] ** 2
    q = P[:, 0, 0] * P[:, 0, 1] + P[:, 1, 0] * P[:, 1, 1]
    r = P[:, 0, 1] ** 2 + P[:, 1, 1] ** 2
    fro = p + r
    s1sq = 0.5 * (fro + np.sqrt(np.maximum(fro * fro - 4.0, 0.0)))
    glob = s1sq - 1.0 / s1sq
    beta = 0.5 * np.arctan2(2.0 * q, p - r)
    phi = th[None, :] - beta[:, None]
    t0 = np.abs(np.tan(phi[:, :-1]))
    t1 = np.abs(np.tan(phi[:, :-1] + h))
    k0 = np.floor((phi[:, :-1] - PI / 2) / PI)
    k1 = np.floor((phi[:, :-1] + h - PI / 2) / PI)
    local = 2.0 * np.maximum(t0, t1)
    return np.where(k0 != k1, glob[:, None], np.minimum(glob[:, None], local))


@dataclass
class _Scan:
    lo: np.ndarray  # image of the left endpoint, per word
    hi: np.ndarray
    prefix_sup: np.ndarray  # (W, L) upper bounds of sup_J log|(f^k)'|
    prefix_arg: np.ndarray  # grid index attaining the sampled max
    full_inf: np.ndarray  # lower bound of inf_J log|f_w'|
    full_arg: np.ndarray
    grid: np.ndarray


def _scan_words(sys: SkewSystem, words: np.ndarray, J: Arc, grid: int) -> _Scan:
    """Certified grid bounds for a batch of equal-length words."""
    W, L = words.shape
    th0 = J.grid(grid)
    h = J.length / (grid - 1)
    th = np.broadcast_to(th0, (W, grid)).copy()
    acc = np.zeros((W, grid))
    P = np.broadcast_to(np.eye(2), (W, 2, 2)).copy()
    psup = np.empty((W, L))
    parg = np.empty((W, L), dtype=np.int64)
    for k in range(L):
        m = sys.mats[words[:, k]]
        th, ld = _act(m[:, None], th)
        acc += ld
        P = m @ P
        lip = _lip_bound(P, th0, h)
        cell = np.maximum(acc[:, :-1], acc[:, 1:]) + 0.5 * h * lip
        psup[:, k] = cell.max(axis=1)
        parg[:, k] = acc.argmax(axis=1)
    cell_lo = np.minimum(acc[:, :-1], acc[:, 1:]) - 0.5 * h * lip
    return _Scan(th[:, 0], th[:, -1], psup, parg, cell_lo.min(axis=1), acc.argmin(axis=1), th0)


def _as_word_rows(words) -> list[np.ndarray]:
    rows = [np.array(_as_array(w), dtype=np.int64) for w in words]
    if not rows or any(r.size == 0 for r in rows):
        raise ValidationError("word collections must be nonempty and contain nonempty words")
    return rows


def check_disjoint(words) -> None:
    """Raise if some word is a prefix of another (or repeated)."""
    rows = sorted(tuple(r.tolist()) for r in _as_word_rows(words))
    for u, v in zip(rows, rows[1:]):
        if v[:len(u)] == u:
            raise DisjointnessError(f"word {list(u)} is a prefix of {list(v)}")


# certificates

@dataclass
class CifsCertificate:
    """A word collection verified to define a CIFS on ``J``."""

    words: list
    J: Arc
    K: float
    alpha0: float
    alpha: float
    eps: float
    grid: int
    margins: dict = field(default_factory=dict)
    spectrum: tuple = (0.0, 0.0)
    diagnostics: dict = field(default_factory=dict)
    report: dict = field(default_factory=dict)
    ok: bool = True

    @property
    def lengths(self) -> np.ndarray:
        return np.array([len(w) for w in self.words])

    def entropy_proxy(self) -> float:
        return float(math.log(len(self.words)) / self.lengths.mean())

    def to_json(self) -> dict:
        return {"words": [list(map(int, w)) for w in self.words], "J": self.J.to_json(),
                "K": self.K, "alpha0": self.alpha0, "alpha": self.alpha, "eps": self.eps,
                "grid": self.grid, "margins": self.margins, "spectrum": list(self.spectrum),
                "diagnostics": self.diagnostics, "report": self.report}

    @classmethod
    def from_json(cls, obj: dict, sys: SkewSystem | None = None) -> "CifsCertificate":
        """Load a stored certificate; with ``sys`` it is re-verified."""
        J = Arc.from_json(obj["J"])
        if sys is not None:
            res = verify_cifs(sys, obj["words"], J, obj["K"], obj["alpha0"], obj["alpha"],
                              obj["eps"], obj.get("grid", 256))
            if not res.ok:
                raise UncertifiedError(f"stored collection fails re-verification: {res.reason}")
            res.report = obj.get("report", {})
            return res
        return cls([tuple(w) for w in obj["words"]], J, obj["K"], obj["alpha0"], obj["alpha"],
                   obj["eps"], obj.get("grid", 256), obj.get("margins", {}),
                   tuple(obj.get("spectrum", (0.0, 0.0))), obj.get("diagnostics", {}),
                   obj.get("report", {}))


@dataclass
class CifsFailure:
    """Failed verification with a witness word and point."""

    condition: str
    word: tuple
    x: float
    value: float
    margins: dict = field(default_factory=dict)
    ok: bool = False

    @property
    def reason(self) -> str:
        return f"condition ({self.condition}) fails for word {list(self.word)} at x={self.x:.6g}"

    def to_json(self) -> dict:
        return {"ok": False, "condition": self.condition, "word": list(self.word), "x": self.x,
                "value": self.value, "margins": self.margins}


def _collection_bounds(sys: SkewSystem, rows: list[np.ndarray], J: Arc, grid: int):
    """Per-word certified quantities, grouped by word length."""
    out = []
    lengths = sorted({r.size for r in rows})
    for L in lengths:
        batch = [r for r in rows if r.size == L]
        sc = _scan_words(sys, np.stack(batch), J, grid)
        for i, r in enumerate(batch):
            out.append((tuple(r.tolist()), sc, i))
    return out


def verify_cifs(sys: SkewSystem, W, J: Arc, K: float, alpha0: float, alpha: float, eps: float,
                grid: int = 256, diagnostics: bool = True, rng=None):
    """Check conditions (a), (b), (c) of a CIFS on ``J`` with explicit margins.

    (a) uses the endpoint images.  (b) is checked through the sufficient
    per-word conditions ``sup log|(f_w^k)'| <= log K + k alpha0`` for every
    prefix and ``sup log|f_w'| <= |w| alpha0``, which propagate to all
    concatenations because each word maps ``J`` into itself.  (b) and (c)
    use grid values widened by a per-cell Lipschitz bound, so a pass holds
    on the whole arc.  Returns a certificate or a :class:`CifsFailure`.
    """
    if grid < 64:
        raise ValidationError("grid must have at least 64 points")
    if not (K > 1 and alpha0 < 0 and alpha < 0 and 0 < eps < abs(alpha)):
        raise ValidationError("need K > 1, alpha0 < 0, alpha < 0 and 0 < eps < |alpha|")
    sys_rows = [sys.check_word(r) for r in _as_word_rows(W)]
    check_disjoint(sys_rows)
    logK = math.log(K)
    ma = mb = mc = math.inf
    lo_exp, hi_exp = math.inf, -math.inf
    for w, sc, i in _collection_bounds(sys, sys_rows, J, grid):
        L = len(w)
        marg_a = float(J.image_margin(sc.lo[i], sc.hi[i]))
        if marg_a < -1e-12:
            return CifsFailure("a", w, J.start, marg_a)
        ks = np.arange(1, L + 1)
        slack = logK + ks * alpha0 - sc.prefix_sup[i]
        j = int(np.argmin(slack))
        full_slack = L * alpha0 - sc.prefix_sup[i, -1]
        if slack[j] < 0 or full_slack < 0:
            jj = j if slack[j] < 0 else L - 1
            return CifsFailure("b", w, float(sc.grid[sc.prefix_arg[i, jj]]), float(min(slack[j], full_slack)))
        top = sc.prefix_sup[i, -1] / L
        bot = sc.full_inf[i] / L
        marg_c = float(min(alpha + eps - top, bot - (alpha - eps)))
        if marg_c <= 0:
            x = sc.grid[sc.prefix_arg[i, -1]] if alpha + eps - top <= 0 else sc.grid[sc.full_arg[i]]
            return CifsFailure("c", w, float(x), float(marg_c))
        ma, mb, mc = min(ma, marg_a), min(mb, float(slack[j]), float(full_slack)), min(mc, marg_c)
        lo_exp, hi_exp = min(lo_exp, bot), max(hi_exp, top)
    cert = CifsCertificate([tuple(map(int, r.tolist())) for r in sys_rows], J, float(K), float(alpha0),
                           float(alpha), float(eps), int(grid), {"a": ma, "b": mb, "c": mc},
                           (float(lo_exp), float(hi_exp)))
    if diagnostics:
        cert.diagnostics = cifs_diagnostics(sys, cert, rng=rng)
    return cert


def cifs_diagnostics(sys: SkewSystem, cert: CifsCertificate, ms: Sequence[int] = (1, 2, 4, 8, 16),
                     trials: int = 8, rng=None) -> dict:
    """Distortion and orbit-closeness along random concatenations of ``m`` words.

    ``distortion[m]`` is the largest ``|S_n phi(x) - S_n phi(y)| / n`` over the
    endpoints of ``J`` for ``phi`` the log-derivative and ``cos 2 theta``;
    ``closeness[m]`` is the mean fiber distance of the two endpoint orbits.
    Both should shrink as ``m`` grows.
    """
    rng = as_rng(0 if rng is None else rng)
    words = [np.array(w, dtype=np.int64) for w in cert.words]
    dist, close = {}, {}
    for m in ms:
        d_worst = c_worst = 0.0
        for _ in range(trials):
            pick = rng.integers(0, len(words), m)
            s = np.concatenate([words[i] for i in pick])
            ta, la = fiber_orbit(sys, s, cert.J.start)
            tb, lb = fiber_orbit(sys, s, cert.J.start + cert.J.length)
            n = s.size
            d1 = abs(la.sum() - lb.sum()) / n
            d2 = abs(np.cos(2 * ta[:-1]).sum() - np.cos(2 * tb[:-1]).sum()) / n
            d_worst = max(d_worst, d1, d2)
            c_worst = max(c_worst, float(angle_dist(ta[:-1], tb[:-1]).mean()))
        dist[str(m)] = d_worst
        close[str(m)] = c_worst
    return {"distortion": dist, "closeness": close}


# searching for a CIFS

def _all_words(N: int, L: int) -> np.ndarray:
    return np.array(list(itertools.product(range(N), repeat=L)), dtype=np.int64).reshape(-1, L)


def _attracting_direction(m: np.ndarray) -> tuple[float, float] | None:
    """Attracting line and log-derivative there of a hyperbolic matrix."""
    tr = m[0, 0] + m[1, 1]
    if abs(tr) <= 2.0 + 1e-9:
        return None
    vals, vecs = np.linalg.eig(m)
    i = int(np.argmax(np.abs(vals.real)))
    v = vecs[:, i].real
    return float(math.atan2(v[1], v[0]) % PI), float(-2.0 * math.log(abs(vals[i].real)))


def seed_words(sys: SkewSystem, depth: int = 6) -> list[tuple[tuple, float, float]]:
    """Hyperbolic words up to ``depth``: ``(word, attracting line, exponent per step)``."""
    out = []
    for L in range(1, depth + 1):
        for w in itertools.product(range(sys.size), repeat=L):
            r = _attracting_direction(sys.word_matrix(w))
            if r is not None:
                out.append((w, r[0], r[1] / L))
    return out


def search_cifs(sys: SkewSystem, alpha: float | None = None, eps_E: float = 0.2,
                eps_H: float | None = None, eps_W: float | None = None, equal_lengths: bool = True,
                depth: int = 12, J: Arc | None = None, half_width: float = 0.25, grid: int = 128,
                max_words: int = 2**16, rng=None) -> CifsCertificate:
    """Equal-length CIFS maximising ``log|W| / |w|`` among words of length ``<= depth``.

    Without ``J`` the arc is centred on the attracting line of the seed word
    (the hyperbolic word whose exponent is closest to ``alpha``, or the most
    contracting one).  The band is ``(alpha - eps_E, alpha + eps_E)`` and
    ``alpha0 = alpha + eps_E``.  With ``equal_lengths=False`` words of the
    next length that avoid the chosen prefixes may be added.
    """
    seeds = seed_words(sys, min(depth, 6))
    seeds = [s for s in seeds if s[2] < 0]
    if not seeds:
        raise BudgetExhaustedError("no contracting region: no hyperbolic word up to length 6")
    if alpha is None:
        seed = min(seeds, key=lambda s: (s[2], len(s[0])))
    else:
        seed = min(seeds, key=lambda s: (abs(s[2] - alpha), len(s[0])))
    alpha = seed[2] if alpha is None else float(alpha)
    if not 0 < eps_E < abs(alpha):
        raise ValidationError("eps_E must lie in (0, |alpha|)")
    if J is None:
        J = Arc.around(seed[1], half_width)
    alpha0 = alpha + eps_E
    best = None
    for L in range(1, depth + 1):
        if sys.size ** L > max_words:
            break
        words = _all_words(sys.size, L)
        sc = _scan_words(sys, words, J, grid)
        ok_a = J.image_margin(sc.lo, sc.hi) > 1e-9
        top = sc.prefix_sup[:, -1] / L
        bot = sc.full_inf / L
        ok_c = (top < alpha + eps_E - 1e-9) & (bot > alpha - eps_E + 1e-9)
        keep = np.flatnonzero(ok_a & ok_c)
        if keep.size == 0:
            continue
        score = math.log(keep.size) / L
        if best is None or score > best[0] + 1e-12:
            best = (score, L, words[keep], sc.prefix_sup[keep])
    if best is None:
        raise BudgetExhaustedError(f"no word up to length {depth} satisfies (a) and (c)")
    _, L, chosen, psup = best
    rows = [r for r in chosen]
    if not equal_lengths and sys.size ** (L + 1) <= max_words:
        words = _all_words(sys.size, L + 1)
        sc = _scan_words(sys, words, J, grid)
        ok = ((J.image_margin(sc.lo, sc.hi) > 1e-9) & (sc.prefix_sup[:, -1] / (L + 1) < alpha0 - 1e-9)
              & (sc.full_inf / (L + 1) > alpha - eps_E + 1e-9))
        heads = {tuple(r.tolist()) for r in rows}
        extra = [words[i] for i in np.flatnonzero(ok) if tuple(words[i, :L].tolist()) not in heads]
        if extra:
            rows += extra
    # K from the prefix condition, with a small slack
    logK = 0.0
    allb = _collection_bounds(sys, rows, J, grid)
    for w, sc, i in allb:
        ks = np.arange(1, len(w) + 1)
        logK = max(logK, float(np.max(sc.prefix_sup[i] - ks * alpha0)))
    K = math.exp(logK + 0.05)
    res = verify_cifs(sys, rows, J, K, alpha0, alpha, eps_E, max(grid, 64), rng=rng)
    if not res.ok:
        raise BudgetExhaustedError(f"selected collection failed verification: {res.reason}")
    res.report = {"seed_word": list(seed[0]), "seed_exponent": seed[2],
                  "entropy_proxy": res.entropy_proxy(), "size": len(rows)}
    if eps_H is not None or eps_W is not None:
        rng = as_rng(0 if rng is None else rng)
        a = _cifs_orbit_summary(sys, res, 4000, rng.spawn(0))
        b = _periodic_summary(sys, seed[0], J.center, 4000)
        res.report["wasserstein_to_seed"] = wasserstein_estimate(a, b, 64, rng.spawn(1))[0]
        if eps_W is not None:
            res.report["wasserstein_ok"] = res.report["wasserstein_to_seed"] < eps_W
        if eps_H is not None:
            res.report["entropy_ok"] = res.entropy_proxy() > eps_H
    return res


def shipped_halving_example() -> tuple[SkewSystem, CifsCertificate]:
    """Bundled two-generator system and its re-verified CIFS (alpha = -1, eps = 0.2)."""
    from importlib import resources

    base = resources.files("fbarlab") / "data"
    sys = SkewSystem.from_json(json.loads((base / "halving_system.json").read_text()))
    cert = CifsCertificate.from_json(json.loads((base / "halving_cifs.json").read_text()), sys)
    return sys, cert


# tails

@dataclass
class TailSearchParams:
    L1: float = 1.0
    max_depth: int = 256
    beam: int = 20000
    angle_bins: int = 4096
    logd_step: float = 0.01
    safety: float = 0.3  # fraction of the halved band kept as margin
    extra_lengths: int = 3
    min_m: int = 1
    alpha: float | None = None  # target exponent; default certificate alpha / 2
    eps: float | None = None

    def __post_init__(self):
        if self.L1 < 0:
            raise ValidationError("L1 must be nonnegative")
        if not 0 <= self.safety < 1:
            raise ValidationError("safety must lie in [0, 1)")

    def to_json(self) -> dict:
        return dict(self.__dict__)


def tail_budget(cert: CifsCertificate, v_len: int, params: TailSearchParams) -> int:
    return int(math.floor(params.L1 * abs(cert.alpha) * v_len + 1e-9))


def search_tail(sys: SkewSystem, cert: CifsCertificate, m: int, v, params: TailSearchParams | None = None
                ) -> np.ndarray:
    """Tail ``t`` with ``|t| <= L1 |alpha| |v|`` re-centring ``v t`` in the halved band.

    Beam search over generator words tracking the endpoints and centre of
    ``f_v(J)``.  States violating the prefix bound with ``alpha0' =
    (alpha + eps)/2`` are dropped; states are merged on a grid in (angle,
    cumulative log-derivative) and ranked by distance to the target line.
    Candidates are re-verified on the full grid before being returned.
    """
    params = params or TailSearchParams()
    if not cert.ok:
        raise UncertifiedError("search_tail needs a valid certificate")
    if m < params.min_m:
        raise ValidationError(f"m={m} below the configured minimum {params.min_m}")
    v = sys.check_word(v)
    target = cert.alpha / 2 if params.alpha is None else params.alpha
    eps = cert.eps / 2 if params.eps is None else params.eps
    alpha0 = (cert.alpha + cert.eps) / 2
    band = eps * (1.0 - params.safety)
    logK = math.log(cert.K)
    budget = min(tail_budget(cert, v.size, params), params.max_depth)
    J = cert.J
    x0 = np.array([J.start, J.center, J.start + J.length])
    th, D = x0.copy(), np.zeros(3)
    for a in v.tolist():
        th, ld = _act(sys.mats[a], th)
        D = D + ld
    # beam state: angles (S,3), log-derivatives (S,3)
    TH, DD = th[None, :], D[None, :]
    parents: list[np.ndarray] = []
    symbols: list[np.ndarray] = []
    found: list[tuple] = []
    first = None

    def accept(TH, DD, j):
        n = v.size + j
        e = DD / n
        in_band = np.all(np.abs(e - target) < band, axis=1)
        inside = J.image_margin(TH[:, 0], TH[:, 2]) > 1e-9
        return in_band & inside, np.abs(e[:, 1] - target)

    for j in range(budget + 1):
        ok, dev = accept(TH, DD, j)
        for i in np.flatnonzero(ok)[np.argsort(dev[ok])][:8]:
            found.append((float(dev[i]), j, _backtrack(parents, symbols, int(i))))
        if found and first is None:
            first = j
        if first is not None and j >= first + params.extra_lengths:
            break
        if j == budget:
            break
        S = TH.shape[0]
        nTH, nD = _act(sys.mats[:, None, None], TH[None])  # (N, S, 3)
        nD = nD + DD[None]
        nTH = nTH.reshape(-1, 3)
        nD = nD.reshape(-1, 3)
        par = np.tile(np.arange(S), sys.size)
        sym = np.repeat(np.arange(sys.size), S)
        alive = np.all(nD <= logK + alpha0 * (v.size + j + 1) - 1e-9, axis=1)
        if not alive.any():
            break
        nTH, nD, par, sym = nTH[alive], nD[alive], par[alive], sym[alive]
        key = (np.floor(nTH[:, 1] / PI * params.angle_bins).astype(np.int64) * 1_000_003
               + np.floor(nD[:, 1] / params.logd_step).astype(np.int64))
        _, first_idx = np.unique(key, return_index=True)
        nTH, nD, par, sym = nTH[first_idx], nD[first_idx], par[first_idx], sym[first_idx]
        if nTH.shape[0] > params.beam:
            rest = budget - j - 1
            # reachable if the remaining steps can average out the gap
            gap = np.abs(nD[:, 1] - target * (v.size + j + 1)) / max(rest, 1)
            where = angle_dist(nTH[:, 1], J.center)
            order = np.lexsort((where, gap))[: params.beam]
            nTH, nD, par, sym = nTH[order], nD[order], par[order], sym[order]
        parents.append(par)
        symbols.append(sym)
        TH, DD = nTH, nD
    found.sort(key=lambda f: (f[0], f[1]))
    for _, _, t in found:
        word = np.concatenate([v, t])
        res = _verify_single(sys, word, J, cert.K, alpha0, target, eps, cert.grid)
        if res is None:
            return t
    best = found[0][2] if found else None
    raise TailSearchError(f"no admissible tail within budget {budget}", best)


def _backtrack(parents, symbols, i: int) -> np.ndarray:
    out = []
    for par, sym in zip(reversed(parents), reversed(symbols)):
        out.append(int(sym[i]))
        i = int(par[i])
    return np.array(out[::-1], dtype=np.int64)


def _verify_single(sys, word, J, K, alpha0, alpha, eps, grid) -> CifsFailure | None:
    sc = _scan_words(sys, word[None, :], J, max(grid, 64))
    L = word.size
    if J.image_margin(sc.lo[0], sc.hi[0]) < 0:
        return CifsFailure("a", tuple(word.tolist()), J.start, 0.0)
    ks = np.arange(1, L + 1)
    if np.any(sc.prefix_sup[0] > math.log(K) + ks * alpha0) or sc.prefix_sup[0, -1] > L * alpha0:
        return CifsFailure("b", tuple(word.tolist()), J.start, 0.0)
    if not (alpha - eps < sc.full_inf[0] / L and sc.prefix_sup[0, -1] / L < alpha + eps):
        return CifsFailure("c", tuple(word.tolist()), J.start, 0.0)
    return None


class GeometricTails(TailProvider):
    """Tails chosen by :func:`search_tail` from per-level certificates.

    ``certificates[n-1]`` must certify the level ``n-1`` images.  Results are
    cached per letter so the cascade stays deterministic.
    """

    name = "geometric"
    enum_cap = 256  # each new letter costs a tail search

    def __init__(self, sys: SkewSystem, certificates: list, params: TailSearchParams | None = None):
        self.sys = sys
        self.certificates = list(certificates)
        self.params = params or TailSearchParams()
        self._cache: dict = {}

    def content(self, cascade, letter):
        hit = self._cache.get(letter.key)
        if hit is not None:
            return hit
        n = letter.level
        if n - 1 >= len(self.certificates):
            raise UncertifiedError(f"no certificate for level {n - 1}")
        v = np.concatenate([cascade.image(c) for c in cascade.children(letter)])
        t = search_tail(self.sys, self.certificates[n - 1], cascade.ms[n - 1], v, self.params)
        t.setflags(write=False)
        self._cache[letter.key] = t
        return t

    def to_json(self):
        return {"mode": "geometric", "L1": self.params.L1,
                "certificates": [c.to_json() for c in self.certificates]}


def build_geometric_cascade(sys: SkewSystem, cert: CifsCertificate, ms: Sequence[int],
                            params: TailSearchParams | None = None, levels: int = 1
                            ) -> tuple[Cascade, list[CifsCertificate]]:
    """Cascade over ``cert.words`` whose tails come from :func:`search_tail`.

    The first ``levels`` levels are enumerated, their images re-verified as a
    CIFS with halved quantifiers, and the certificates returned.  The budget
    constant of the cascade is ``2 L1 |alpha|``.
    """
    params = params or TailSearchParams()
    lens = {len(w) for w in cert.words}
    if len(lens) != 1:
        raise ValidationError("geometric cascades need an equal-length collection")
    rho0 = SubstitutionMap([list(w) for w in cert.words], sys.size)
    tails = GeometricTails(sys, [cert], params)
    K = 2.0 * params.L1 * abs(cert.alpha)
    casc = Cascade(rho0, ms, _fraction_ceil(K), tails)
    certs = [cert]
    for n in range(1, levels + 1):
        prev = certs[-1]
        words = [casc.image(a) for a in casc.enumerate_letters(n)]
        res = verify_cifs(sys, words, prev.J, prev.K, (prev.alpha + prev.eps) / 2, prev.alpha / 2,
                          prev.eps / 2, prev.grid)
        if not res.ok:
            raise UncertifiedError(f"level {n} images fail re-verification: {res.reason}")
        certs.append(res)
        tails.certificates.append(res)
    return casc, certs


def _fraction_ceil(x: float):
    from fractions import Fraction

    return Fraction(math.ceil(x * 10**6), 10**6)


# attractor and horseshoe orbits

def attractor_point(sys: SkewSystem, cert: CifsCertificate, past: Sequence, tol: float = DEFAULT_TOL,
                    x0: float | None = None) -> float:
    """Fiber coordinate of the attractor for the past ``(w_{-1}, w_{-2}, ...)``.

    ``past[i]`` is the index (or the word) of ``w_{-1-i}``; a finite past is
    repeated periodically.  Iteration stops once the image of ``J`` under
    ``f_{w_{-1}} o ... o f_{w_{-k}}`` is shorter than ``tol``.
    """
    if not isinstance(cert, CifsCertificate) or not cert.ok:
        raise UncertifiedError("attractor_point needs a certified collection")
    words = [np.array(w, dtype=np.int64) for w in cert.words]
    seq = [words[p] if np.isscalar(p) else sys.check_word(p) for p in past]
    if not seq:
        raise ValidationError("past must contain at least one word")
    J = cert.J
    lo, hi = J.start, J.start + J.length
    comp: list[np.ndarray] = []
    steps = 0
    k = 0
    while True:
        comp.append(seq[k % len(seq)])
        steps += comp[-1].size
        s = np.concatenate(comp[::-1])
        a, _ = fiber_orbit(sys, s, lo)
        b, _ = fiber_orbit(sys, s, hi)
        if np.mod(b[-1] - a[-1], PI) < tol:
            x = J.center if x0 is None else x0
            if not J.contains(x):
                raise ValidationError("x0 must lie in J")
            c, _ = fiber_orbit(sys, s, x)
            return float(c[-1])
        k += 1
        if steps > 10**6:
            raise UncertifiedError("no contraction observed; is the certificate valid for sys?")


@dataclass
class MuOrbit:
    symbols: np.ndarray
    theta: np.ndarray  # fiber coordinate before each step
    logd: np.ndarray
    burn: int
    summary: dict = field(default_factory=dict)


OBSERVABLES: dict[str, Callable] = {
    "logd": lambda s, th, ld: ld,
    "cos2": lambda s, th, ld: np.cos(2 * th),
    "sin2": lambda s, th, ld: np.sin(2 * th),
    "sym0": lambda s, th, ld: (s == 0).astype(float),
    "const": lambda s, th, ld: np.ones_like(th),
}


def batch_stderr(x: np.ndarray, batches: int = 20) -> float:
    n = x.size // batches
    if n < 2:
        return float(x.std(ddof=1) / math.sqrt(max(x.size, 1))) if x.size > 1 else 0.0
    means = x[: n * batches].reshape(batches, n).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def burn_in_steps(cert: CifsCertificate, tol: float = DEFAULT_TOL) -> int:
    return 10 * int(math.ceil((math.log(tol) - math.log(cert.K)) / cert.alpha0))


def _level_certificate(cascade: Cascade, n: int, cert: CifsCertificate | None) -> CifsCertificate:
    if cert is not None:
        return cert
    certs = getattr(cascade.tails, "certificates", None)
    if certs is None or n >= len(certs):
        raise UncertifiedError(f"no certificate for level {n}; pass one explicitly")
    return certs[n]


def sample_mu_n(sys: SkewSystem, cascade: Cascade, p: BernoulliVector, n: int, steps: int, rng,
                cert: CifsCertificate | None = None, burn: int | None = None,
                observables: Sequence[str] = ("logd", "cos2", "sin2")) -> MuOrbit:
    """Stationary orbit of ``mu_n(p)``: a ``nu_n`` symbol stream with its attractor fiber.

    Independent level-``n`` images are prepended to the size-biased first
    image; the fiber starts at the centre of ``J`` at the first prepended
    word, so after the burn-in it shadows the attractor of the past.
    """
    if cascade.target_size != sys.size:
        raise ValidationError("cascade target alphabet and system size differ")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    cert = _level_certificate(cascade, n, cert)
    rng = as_rng(rng)
    burn = burn_in_steps(cert) if burn is None else int(burn)
    lift = cascade.lift(p, n)
    pre: list[np.ndarray] = []
    have = 0
    while have < burn:
        for b in lift.sample(8, rng):
            pre.append(cascade.image(b))
            have += pre[-1].size
    a = _size_biased(cascade, lift, n, rng)
    s = int(rng.integers(0, cascade.roof_length(a)))
    start = have + s
    pieces = pre + [cascade.image(a)]
    total = have + pieces[-1].size
    while total < start + steps:
        for b in lift.sample(8, rng):
            pieces.append(cascade.image(b))
            total += pieces[-1].size
    stream = np.concatenate(pieces)[: start + steps]
    th, ld = fiber_orbit(sys, stream, cert.J.center)
    sym = stream[start:]
    th, ld = th[start:-1], ld[start:]
    summary = {"exponent": float(ld.mean()), "exponent_se": batch_stderr(ld), "steps": steps,
               "burn": start, "level": n}
    for name in observables:
        vals = OBSERVABLES[name](sym, th, ld)
        summary[f"mean_{name}"] = float(vals.mean())
        summary[f"se_{name}"] = batch_stderr(vals)
    return MuOrbit(sym, th, ld, start, summary)


# Wasserstein lower bounds

@dataclass
class OrbitSummary:
    """Subsampled orbit points: symbol windows ``xi_0..xi_{d-1}`` and fiber angles."""

    symbols: np.ndarray  # (S, depth)
    theta: np.ndarray  # (S,)

    @classmethod
    def from_orbit(cls, symbols, theta, depth: int = 6, stride: int = 1) -> "OrbitSummary":
        s = np.asarray(symbols, dtype=np.int64)
        th = np.asarray(theta, dtype=float)
        count = min(s.size - depth + 1, th.size)
        if count < 1:
            raise ValidationError("orbit too short for the requested depth")
        idx = np.arange(0, count, stride)
        win = np.lib.stride_tricks.sliding_window_view(s, depth)[idx]
        return cls(win.copy(), th[idx].copy())

    def to_csv_rows(self) -> list[tuple]:
        return [(i, "".join(map(str, w)), float(t))
                for i, (w, t) in enumerate(zip(self.symbols.tolist(), self.theta.tolist()))]


def _circ_mean(th: np.ndarray) -> float:
    return float(np.arctan2(np.sin(2 * th).mean(), np.cos(2 * th).mean()) / 2 % PI)


def wasserstein_estimate(a: OrbitSummary, b: OrbitSummary, dictionary_size: int = 64, rng=None
                         ) -> tuple[float, float, str]:
    """Lower bound on ``W`` from a dictionary of 1-Lipschitz test functions.

    The metric on ``Sigma_N x P^1`` is the maximum of ``2^-min{i: xi_i != eta_i}``
    and the distance between lines.  The dictionary holds distances to
    points (a grid plus the circular means of both samples), indicators of
    cylinders of length ``k`` scaled by ``2^-(k-1)``, and minima of the two.
    Returns ``(value, stderr, label)`` for the best function.
    """
    rng = as_rng(rng)
    depth = min(a.symbols.shape[1], b.symbols.shape[1])
    half = max(dictionary_size // 2, 1)
    centers = np.concatenate([PI * rng.random(half), [_circ_mean(a.theta), _circ_mean(b.theta)]])
    funcs: list[tuple[str, Callable]] = []
    for c in centers:
        funcs.append((f"dist({c:.4f})", lambda s, t, c=c: angle_dist(t, c)))
    N = int(max(a.symbols.max(), b.symbols.max())) + 1
    count = 0
    for k in range(1, depth + 1):
        for w in itertools.product(range(N), repeat=k):
            if count >= half:
                break
            w = np.array(w)
            scale = 2.0 ** -(k - 1)
            funcs.append((f"cyl{w.tolist()}",
                          lambda s, t, w=w, k=k, sc=scale: sc * np.all(s[:, :k] == w, axis=1)))
            c = centers[count % centers.size]
            funcs.append((f"min(cyl{w.tolist()},dist({c:.4f}))",
                          lambda s, t, w=w, k=k, sc=scale, c=c:
                          np.minimum(sc * np.all(s[:, :k] == w, axis=1), angle_dist(t, c))))
            count += 1
    best = (0.0, 0.0, "none")
    for label, f in funcs:
        fa = np.asarray(f(a.symbols, a.theta), dtype=float)
        fb = np.asarray(f(b.symbols, b.theta), dtype=float)
        d = abs(fa.mean() - fb.mean())
        if d > best[0]:
            se = math.sqrt(fa.var() / fa.size + fb.var() / fb.size)
            best = (float(d), float(se), label)
    return best


def wasserstein_envelope(eps: float, L1: float, alpha: float, diam: float = PI / 2) -> float:
    """Upper envelope ``eps + 8 L1 diam |alpha|`` for ``W(mu_0, mu_n)``."""
    return float(eps + 8.0 * L1 * diam * abs(alpha))


def _cifs_orbit_summary(sys, cert, steps, rng) -> OrbitSummary:
    words = [np.array(w, dtype=np.int64) for w in cert.words]
    pieces, have = [], 0
    while have < steps + 200:
        w = words[int(rng.integers(0, len(words)))]
        pieces.append(w)
        have += w.size
    s = np.concatenate(pieces)
    th, _ = fiber_orbit(sys, s, cert.J.center)
    return OrbitSummary.from_orbit(s[200:], th[200:-1])


def _periodic_summary(sys, word, x0, steps) -> OrbitSummary:
    w = np.array(word, dtype=np.int64)
    s = np.tile(w, (steps + 200) // w.size + 2)
    th, _ = fiber_orbit(sys, s, x0)
    return OrbitSummary.from_orbit(s[200:], th[200:-1])


# Birkhoff windows

def birkhoff_diagnostic(sys: SkewSystem, cascade: Cascade, p: BernoulliVector, observable: str | Callable,
                        ell: int, n: int, rng, steps: int = 200_000, eps: float = 0.1,
                        cert: CifsCertificate | None = None) -> dict:
    """Deviation of window averages from the long-run mean along a ``mu_n`` orbit.

    Windows have the expected level-``ell`` roof length.  Reports the mass of
    windows whose average is within ``eps`` of the mean of the whole orbit.
    """
    if n < ell + 1:
        raise ValidationError("need n >= ell + 1")
    f = OBSERVABLES[observable] if isinstance(observable, str) else observable
    orb = sample_mu_n(sys, cascade, p, n, steps, rng, cert=cert, observables=())
    vals = np.asarray(f(orb.symbols, orb.theta, orb.logd), dtype=float)
    width = max(1, int(round(cascade.expected_roof(p, ell)[0])))
    k = vals.size // width
    if k < 1:
        raise ValidationError("orbit shorter than one window")
    avg = vals[: k * width].reshape(k, width).mean(axis=1)
    dev = np.abs(avg - vals.mean())
    return {"level": n, "ell": ell, "window": width, "windows": int(k), "eps": eps,
            "mass_within": float(np.mean(dev <= eps)),
            "quantiles": {str(q): float(np.quantile(dev, q)) for q in (0.5, 0.9, 0.99)}}


# blending evidence

@dataclass
class BlendingReport:
    J: Arc
    resolution: int
    transitivity: bool
    acc_forward: bool
    acc_backward: bool
    cec_plus: bool
    cec_minus: bool
    constants_plus: dict = field(default_factory=dict)
    constants_minus: dict = field(default_factory=dict)
    witnesses: dict = field(default_factory=dict)
    note: str = "finite-resolution evidence, not a proof"

    @property
    def acc(self) -> bool:
        return self.acc_forward and self.acc_backward

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["J"] = self.J.to_json()
        out["acc"] = self.acc
        return out


def _orbit_cover(sys: SkewSystem, starts: np.ndarray, resolution: int, max_len: int) -> np.ndarray:
    """Buckets of ``P^1`` hit by forward images of ``starts`` under words up to ``max_len``."""
    hit = np.zeros(resolution, dtype=bool)
    front = np.unique(np.floor(np.mod(starts, PI) / PI * resolution * 8).astype(np.int64))
    seen = set(front.tolist())
    th = (front + 0.5) / (resolution * 8) * PI
    hit[np.floor(th / PI * resolution).astype(np.int64) % resolution] = True
    for _ in range(max_len):
        img, _ = _act(sys.mats[:, None], th[None])
        img = img.ravel()
        b = np.floor(img / PI * resolution * 8).astype(np.int64) % (resolution * 8)
        new = np.array(sorted(set(b.tolist()) - seen), dtype=np.int64)
        if new.size == 0:
            break
        seen.update(new.tolist())
        hit[new // 8] = True
        th = (new + 0.5) / (resolution * 8) * PI
        if hit.all():
            break
    return hit


def _covering_word(sys: SkewSystem, lo: float, width: float, J: Arc, K4: float, max_len: int,
                   beam: int = 4096, samples: int = 17):
    """Shortest expanding word found whose image of ``[lo, lo+width]`` covers ``B(J, K4)``."""
    target = Arc(J.start - K4, J.length + 2 * K4)
    pts = lo + width * np.linspace(0, 1, samples)
    TH, DD = pts[None], np.zeros((1, samples))
    hist: list = []
    for ell in range(1, max_len + 1):
        nTH, nD = _act(sys.mats[:, None, None], TH[None])
        nD = nD + DD[None]
        S = TH.shape[0]
        nTH, nD = nTH.reshape(-1, samples), nD.reshape(-1, samples)
        par = np.tile(np.arange(S), sys.size)
        sym = np.repeat(np.arange(sys.size), S)
        gaps = np.mod(np.diff(nTH, axis=1), PI)
        span = gaps.sum(axis=1)
        off = target.offset(nTH[:, 0])
        cover = (off + target.length <= span) | (span >= PI - 1e-9)
        expand = nD.min(axis=1) > 0
        good = np.flatnonzero(cover & expand)
        hist.append((par, sym))
        if good.size:
            i = int(good[np.argmax(nD[good].min(axis=1))])
            word = []
            for p_, s_ in reversed(hist):
                word.append(int(s_[i]))
                i = int(p_[i])
            i = int(good[np.argmax(nD[good].min(axis=1))])
            return word[::-1], float(nD[i].min())
        key = np.floor(nTH[:, 0] / PI * 2048).astype(np.int64) * 100_000 + np.floor(np.log(span + 1e-300) * 20).astype(np.int64)
        _, idx = np.unique(key, return_index=True)
        if idx.size > beam:
            idx = idx[np.argsort(-span[idx])[:beam]]
        hist[-1] = (par[idx], sym[idx])
        TH, DD = nTH[idx], nD[idx]
    return None, 0.0


def _cec(sys: SkewSystem, J: Arc, sizes, centers, K4: float, max_len: int) -> tuple[bool, dict, list]:
    rows, witnesses = [], []
    for size in sizes:
        for c in centers:
            word, gain = _covering_word(sys, c - size / 2, size, J, K4, max_len)
            if word is None:
                return False, {"failed_interval": [float(c - size / 2), float(size)]}, witnesses
            rows.append((size, len(word), gain / len(word)))
            witnesses.append({"interval": [float(c - size / 2), float(size)], "word": word})
    logs = np.array([abs(math.log(r[0])) for r in rows])
    ells = np.array([r[1] for r in rows], dtype=float)
    K2 = float(max(np.polyfit(logs, ells, 1)[0], 0.0)) if np.ptp(logs) > 0 else 0.0
    K3 = float(np.max(ells - K2 * logs))
    K5 = float(min(r[2] for r in rows))
    return K5 > 0, {"K1": float(max(sizes)), "K2": K2, "K3": K3, "K4": K4, "K5": K5}, witnesses


def check_blending(sys: SkewSystem, J: Arc, resolution: int = 256, max_len: int = 40,
                   sizes: Sequence[float] = (0.05, 0.02, 0.01, 0.005), n_centers: int = 5,
                   K4: float | None = None) -> BlendingReport:
    """Finite-resolution evidence for the transitivity, accessibility and CEC axioms.

    T and ACC test whether forward and backward orbits of points of ``J``
    visit every one of ``resolution`` buckets.  CEC+ searches, for test
    intervals meeting ``J``, expanding words whose image covers the
    ``K4``-neighbourhood of ``J``; the constants are fitted so the
    inequalities hold on all tested intervals.  CEC- repeats this for the
    inverse system.
    """
    if resolution < 64:
        raise ValidationError("resolution must be >= 64")
    inv = sys.inverse()
    inner = J.start + J.length * np.linspace(0.1, 0.9, 9)
    fwd = _orbit_cover(sys, inner, resolution, max_len * 4).all()
    bwd = _orbit_cover(inv, inner, resolution, max_len * 4).all()
    x = np.array([J.center])
    trans = bool(_orbit_cover(sys, x, resolution, max_len * 8).all()
                 and _orbit_cover(inv, x, resolution, max_len * 8).all())
    K4 = J.length / 8 if K4 is None else K4
    centers = J.start + J.length * np.linspace(0.1, 0.9, n_centers)
    cp, kp, wp = _cec(sys, J, sizes, centers, K4, max_len)
    cm, km, wm = _cec(inv, J, sizes, centers, K4, max_len)
    return BlendingReport(J, resolution, trans, bool(fwd), bool(bwd), cp, cm, kp, km,
                          {"cec_plus": wp[:4], "cec_minus": wm[:4]})
