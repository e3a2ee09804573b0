"""Random products of SL(2, R) matrices: Lyapunov exponents and classification."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numba as nb
import numpy as np

from .circle import PI, Sl2Matrix, SkewSystem, _orbit_kernel, batch_stderr
from .errors import ValidationError
from .symdyn import BernoulliVector, as_rng, draw_letters

RENORM = 32
TRACE_TOL = 1e-9


class CocycleFamily(SkewSystem):
    """Finite family ``A_0..A_{N-1}`` of SL(2, R) matrices driven by a shift."""


@dataclass
class LyapunovEstimate:
    value: float
    steps: int
    trials: int
    stderr: float
    per_trial: list = field(default_factory=list)
    vector_value: float = float("nan")  # v-tracking cross-check
    flagged: bool = False

    def to_json(self) -> dict:
        return {"value": self.value, "steps": self.steps, "trials": self.trials,
                "stderr": self.stderr, "vector_value": self.vector_value, "flagged": self.flagged}


@nb.njit(cache=True)
def _product_kernel(mats, symbols, renorm, v0):
    """``log|A_{n-1}..A_0|`` and ``log|A_{n-1}..A_0 v0|`` with compensated sums."""
    m00, m01, m10, m11 = 1.0, 0.0, 0.0, 1.0
    v0x, v1x = v0[0], v0[1]
    s = 0.0
    c = 0.0
    sv = 0.0
    cv = 0.0
    n = symbols.shape[0]
    for i in range(n):
        a = mats[symbols[i]]
        t00 = a[0, 0] * m00 + a[0, 1] * m10
        t01 = a[0, 0] * m01 + a[0, 1] * m11
        t10 = a[1, 0] * m00 + a[1, 1] * m10
        t11 = a[1, 0] * m01 + a[1, 1] * m11
        m00, m01, m10, m11 = t00, t01, t10, t11
        x = a[0, 0] * v0x + a[0, 1] * v1x
        y = a[1, 0] * v0x + a[1, 1] * v1x
        v0x, v1x = x, y
        if (i + 1) % renorm == 0 or i == n - 1:
            # operator norm of the 2x2 product
            f = m00 * m00 + m01 * m01 + m10 * m10 + m11 * m11
            det = m00 * m11 - m01 * m10
            disc = max(f * f - 4.0 * det * det, 0.0)
            nrm = math.sqrt(0.5 * (f + math.sqrt(disc)))
            lg = math.log(nrm)
            t = s + lg
            if abs(s) >= abs(lg):
                c += (s - t) + lg
            else:
                c += (lg - t) + s
            s = t
            m00 /= nrm
            m01 /= nrm
            m10 /= nrm
            m11 /= nrm
            vn = math.sqrt(v0x * v0x + v1x * v1x)
            lv = math.log(vn)
            t = sv + lv
            if abs(sv) >= abs(lv):
                cv += (sv - t) + lv
            else:
                cv += (lv - t) + sv
            sv = t
            v0x /= vn
            v1x /= vn
    return s + c, sv + cv


def _symbols(p: BernoulliVector, n: int, rng) -> np.ndarray:
    return np.ascontiguousarray(draw_letters(p.cdf, rng.random(n)))


def _check(family: SkewSystem, p: BernoulliVector) -> None:
    if p.size != family.size:
        raise ValidationError(f"vector of size {p.size} for {family.size} matrices")


def top_lyapunov(family: SkewSystem, p: BernoulliVector, steps: int, trials: int = 8, rng=None,
                 renorm: int = RENORM) -> LyapunovEstimate:
    """Mean of ``(1/n) log|A^(n)|`` over independent trials, with a v-tracking cross-check."""
    if steps < 1 or trials < 1:
        raise ValidationError("steps and trials must be >= 1")
    _check(family, p)
    rng = as_rng(rng)
    mats = np.ascontiguousarray(family.mats)
    vals, vvals = [], []
    for t in range(trials):
        r = rng.spawn(t)
        s = _symbols(p, steps, r)
        ang = PI * r.random()
        lm, lv = _product_kernel(mats, s, renorm, np.array([math.cos(ang), math.sin(ang)]))
        vals.append(lm / steps)
        vvals.append(lv / steps)
    vals = np.array(vals)
    se = float(vals.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    value = float(vals.mean())
    vvalue = float(np.mean(vvals))
    # the vector estimate lags by O(1/steps) when v starts near the stable line
    flagged = abs(value - vvalue) > 5 * se + 10.0 / steps
    return LyapunovEstimate(max(value, 0.0), steps, trials, se, vals.tolist(), vvalue, bool(flagged))


def classify(A: Sl2Matrix, tol: float = TRACE_TOL) -> str:
    tr = abs(A.trace)
    if tr < 2.0 - tol:
        return "elliptic"
    if tr > 2.0 + tol:
        return "hyperbolic"
    return "parabolic"


def find_elliptic(family: SkewSystem, depth: int) -> list[int] | None:
    """Shortest word whose product is elliptic (BFS, products merged when equal)."""
    if depth < 1:
        raise ValidationError("depth must be >= 1")
    front = [((), np.eye(2))]
    seen = {_key(np.eye(2))}
    for _ in range(depth):
        nxt = []
        for w, m in front:
            for a in range(family.size):
                pm = family.mats[a] @ m
                if abs(pm[0, 0] + pm[1, 1]) < 2.0 - TRACE_TOL:
                    return list(w + (a,))
                k = _key(pm)
                if k not in seen:
                    seen.add(k)
                    nxt.append((w + (a,), pm))
        front = nxt
        if not front:
            break
    return None


def _key(m: np.ndarray) -> tuple:
    return tuple(np.round(m.ravel(), 9).tolist())


@dataclass
class BridgeReport:
    lyapunov: float
    lyapunov_se: float
    fiber_exponent: float
    fiber_se: float
    residual: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return self.residual <= self.tolerance

    def to_json(self) -> dict:
        out = dict(self.__dict__)
        out["ok"] = self.ok
        return out


def bridge_check(family: SkewSystem, p: BernoulliVector, steps: int, rng=None, trials: int = 8,
                 burn: int = 1000) -> BridgeReport:
    """Compare ``|chi|`` along a forward fiber orbit with ``2 lambda_1`` from independent streams.

    The fiber orbit starts at a random line and discards ``burn`` steps, so it
    follows the attracting section and ``chi`` is ``-2 lambda_1``.  The
    tolerance is ``3 (se_chi + 2 se_lambda)``, plus ``1e-9`` for round-off.
    """
    _check(family, p)
    rng = as_rng(rng)
    lyap = top_lyapunov(family, p, steps, trials, rng.spawn(0))
    r = rng.spawn(1)
    s = _symbols(p, steps + burn, r)
    _, ld = _orbit_kernel(np.ascontiguousarray(family.mats), s, PI * r.random())
    ld = ld[burn:]
    chi = float(ld.mean())
    se = batch_stderr(ld, 50)
    resid = abs(abs(chi) - 2 * lyap.value)
    return BridgeReport(lyap.value, lyap.stderr, chi, se, resid, 3 * (se + 2 * lyap.stderr) + 1e-9)


def families() -> dict[str, tuple[SkewSystem, BernoulliVector]]:
    """The three example families: two rotations, a hyperbolic matrix with a
    quarter turn, and two positive hyperbolic matrices with transverse axes."""
    half = BernoulliVector([0.5, 0.5])
    return {
        "rotations": (CocycleFamily([Sl2Matrix.rotation(1.0), Sl2Matrix.rotation(math.sqrt(2.0))]), half),
        "diag-quarter-turn": (CocycleFamily([Sl2Matrix.diag(2.0), Sl2Matrix.rotation(PI / 2)]), half),
        "transverse-hyperbolic": (CocycleFamily([Sl2Matrix(2, 1, 1, 1), Sl2Matrix(1, 1, 1, 2)]), half),
    }


def lyapunov_table(steps_list: Sequence[int] = (10**4, 10**5, 10**6), trials: int = 8, seed: int = 0
                   ) -> list[dict]:
    rows = []
    for i, (name, (fam, p)) in enumerate(families().items()):
        for j, n in enumerate(steps_list):
            est = top_lyapunov(fam, p, n, trials, as_rng(seed).spawn(i).spawn(j))
            rows.append({"family": name, "steps": n, "value": est.value, "stderr": est.stderr,
                         "vector_value": est.vector_value})
    return rows
