import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fbarlab.circle import (Arc, CifsCertificate, OrbitSummary, ProjectivePoint, SkewSystem, Sl2Matrix,
                            TailSearchParams, attractor_point, birkhoff_diagnostic, build_geometric_cascade,
                            check_blending, fiber_exponent, fiber_orbit, projective_map, sample_mu_n,
                            search_cifs, search_tail, tail_budget, verify_cifs, wasserstein_envelope,
                            wasserstein_estimate, word_map)
from fbarlab.cascade import Cascade, ZeroTails
from fbarlab.errors import BudgetExhaustedError, DisjointnessError, TailSearchError, ValidationError
from fbarlab.substitution import SubstitutionMap
from fbarlab.symdyn import BernoulliVector

LOG2 = math.log(2)
HALF = BernoulliVector([0.5, 0.5])
P7 = BernoulliVector.uniform(7)  # over the seven words of the shipped collection


def angle(A, th):
    v = A.m @ np.array([math.cos(th), math.sin(th)])
    return math.atan2(v[1], v[0])


def random_sl2(rng):
    m = rng.normal(size=(2, 2))
    if np.linalg.det(m) < 0:
        m[0] *= -1
    return Sl2Matrix(m)


@pytest.fixture(scope="module")
def level1(halving):
    sys, cert = halving
    casc, certs = build_geometric_cascade(sys, cert, [2, 2], TailSearchParams(L1=1.0), levels=1)
    return sys, casc, certs


def test_matrix_normalisation():
    A = Sl2Matrix(2, 0, 0, 2)
    assert abs(np.linalg.det(A.m) - 1) < 1e-12
    with pytest.raises(ValidationError):
        Sl2Matrix(1, 0, 0, -1)
    assert ProjectivePoint(math.pi + 0.3).theta == pytest.approx(0.3)


def test_projective_map_examples():
    for th in np.linspace(0, 3, 7):
        assert projective_map(Sl2Matrix.rotation(0.7), th)[1] == pytest.approx(0.0, abs=1e-15)
    img, ld = projective_map(Sl2Matrix.diag(2.0), 0.0)
    assert img.theta == 0 and ld == pytest.approx(-2 * LOG2)


def test_derivative_finite_differences():
    rng = np.random.default_rng(0)
    h = 1e-5
    worst = 0.0
    for _ in range(1000):
        A = random_sl2(rng)
        th = rng.uniform(0, math.pi)
        fd = (angle(A, th + h) - angle(A, th - h)) / (2 * h)
        _, ld = projective_map(A, th)
        worst = max(worst, abs(math.exp(ld) - fd) / max(1.0, math.exp(ld)))
    assert worst < 1e-6


def test_word_map_examples():
    sys = SkewSystem([Sl2Matrix.diag(2.0), Sl2Matrix.rotation(0.4)])
    img, sums = word_map(sys, [], 0.3)
    assert img.theta == pytest.approx(0.3) and sums.size == 0
    img, sums = word_map(sys, [1], 0.3)
    ref, ld = projective_map(sys.generators[1], 0.3)
    assert img.theta == pytest.approx(ref.theta) and sums[0] == pytest.approx(ld)


@given(st.lists(st.integers(0, 1), max_size=8), st.lists(st.integers(0, 1), max_size=8), st.floats(0, 3.1))
def test_word_map_composition_and_chain_rule(u, v, x):
    sys = SkewSystem([Sl2Matrix(2, 1, 1, 1), Sl2Matrix.rotation(1.1)])
    whole, s_uv = word_map(sys, u + v, x)
    mid, s_u = word_map(sys, u, x)
    end, s_v = word_map(sys, v, mid)
    assert angle_close(whole.theta, end.theta)
    total = (s_u[-1] if u else 0.0) + (s_v[-1] if v else 0.0)
    if u or v:
        assert s_uv[-1] == pytest.approx(total, abs=1e-9)
        # log-derivative of the composed Moebius map
        M = Sl2Matrix(sys.word_matrix(u + v))
        assert s_uv[-1] == pytest.approx(projective_map(M, x)[1], abs=1e-9)


def angle_close(a, b, tol=1e-9):
    d = (a - b) % math.pi
    return min(d, math.pi - d) < tol


def test_fiber_exponent_examples():
    rot = SkewSystem([Sl2Matrix.rotation(1.0), Sl2Matrix.rotation(math.sqrt(2))])
    s = np.random.default_rng(1).integers(0, 2, 1000)
    for n in (1, 10, 1000):
        assert fiber_exponent(rot, s, 0.4, n) == pytest.approx(0.0, abs=1e-12)
    hyp = SkewSystem([Sl2Matrix.diag(2.0)])
    assert fiber_exponent(hyp, np.zeros(50, dtype=int), 0.0, 50) == pytest.approx(-2 * LOG2)


def test_verify_cifs_examples():
    hyp = SkewSystem([Sl2Matrix.diag(2.0), Sl2Matrix.rotation(1.3)])
    J = Arc.around(0.0, 0.3)
    a = -2 * LOG2
    cert = verify_cifs(hyp, [[0]], J, 2.0, a + 0.3, a, 0.3, 128)
    assert cert.ok and cert.margins["c"] > 0
    bad = verify_cifs(hyp, [[1]], J, 2.0, a + 0.3, a, 0.3, 128)
    assert not bad.ok and bad.condition == "a"
    with pytest.raises(DisjointnessError):
        verify_cifs(hyp, [[0], [0, 0]], J, 2.0, a + 0.3, a, 0.3, 128)
    with pytest.raises(ValidationError):
        verify_cifs(hyp, [[0]], J, 2.0, a + 0.3, a, 0.3, 32)


def test_certified_words_independently_in_band(halving):
    sys, cert = halving
    rng = np.random.default_rng(3)
    words = [np.array(w) for w in cert.words]
    for _ in range(200):
        # concatenations of certified words at random points of J
        k = int(rng.integers(1, 6))
        w = np.concatenate([words[i] for i in rng.integers(0, len(words), k)])
        x = cert.J.start + cert.J.length * rng.random()
        _, sums = word_map(sys, w, x)
        assert cert.alpha - cert.eps < sums[-1] / w.size < cert.alpha + cert.eps
        assert cert.J.contains(word_map(sys, w, x)[0].theta)


def test_shipped_certificate_roundtrip(halving):
    sys, cert = halving
    again = CifsCertificate.from_json(cert.to_json(), sys)
    assert again.words == cert.words and again.margins == pytest.approx(cert.margins)


def test_search_cifs_examples():
    single = SkewSystem([Sl2Matrix.diag(2.0)])
    cert = search_cifs(single, J=Arc.around(0.0, 0.25), depth=4, eps_E=0.3, grid=64)
    assert all(set(w) == {0} for w in cert.words) and len(cert.words) == 1
    assert cert.alpha == pytest.approx(-2 * LOG2)
    trans = SkewSystem([Sl2Matrix(2, 1, 1, 1), Sl2Matrix(1, 1, 1, 2)])
    cert = search_cifs(trans, eps_E=0.5, depth=12, grid=64)
    assert len(cert.words) >= 2 and len(set(cert.lengths.tolist())) == 1
    rot = SkewSystem([Sl2Matrix.rotation(1.0), Sl2Matrix.rotation(math.sqrt(2))])
    with pytest.raises(BudgetExhaustedError):
        search_cifs(rot, depth=6)


def test_search_tail_examples(halving):
    sys, cert = halving
    v = np.array(cert.words[0])
    own = TailSearchParams(alpha=cert.alpha, eps=cert.eps)
    assert search_tail(sys, cert, 1, v, own).size == 0
    v2 = np.concatenate([cert.words[0], cert.words[3]])
    t = search_tail(sys, cert, 2, v2)
    assert t.size <= tail_budget(cert, v2.size, TailSearchParams())
    _, sums = word_map(sys, np.concatenate([v2, t]), cert.J.center)
    assert abs(sums[-1] / (v2.size + t.size) - cert.alpha / 2) < cert.eps / 2
    with pytest.raises(TailSearchError):
        search_tail(sys, cert, 2, v2, TailSearchParams(L1=0.0))


def test_level_one_halving(level1):
    sys, casc, certs = level1
    c1 = certs[1]
    lo, hi = c1.spectrum
    a, e = certs[0].alpha, certs[0].eps
    assert a / 2 - e / 2 < lo <= hi < a / 2 + e / 2
    for letter in list(casc.enumerate_letters(1))[:10]:
        assert casc.tail_length(letter) <= 2 * abs(a) * 2.0**-1 * sum(
            casc.roof_length(c) for c in casc.children(letter))


def test_attractor_point(halving):
    sys, cert = halving
    zero = [i for i, w in enumerate(cert.words) if set(w) == {0}][0]
    assert attractor_point(sys, cert, [zero]) == pytest.approx(0.0, abs=1e-9)
    rng = np.random.default_rng(5)
    for _ in range(5):
        past = rng.integers(0, len(cert.words), 20).tolist()
        a = attractor_point(sys, cert, past, tol=1e-8)
        b = attractor_point(sys, cert, past, tol=5e-9)
        c = attractor_point(sys, cert, past, tol=1e-8, x0=cert.J.start + 0.01)
        assert abs(a - b) < 1e-8 and abs(a - c) < 1e-8


def test_sample_mu_levels(level1):
    sys, casc, certs = level1
    o0 = sample_mu_n(sys, casc, P7, 0, 20000, 0)
    a, e = certs[0].alpha, certs[0].eps
    assert a - e < o0.summary["exponent"] < a + e
    o1 = sample_mu_n(sys, casc, P7, 1, 50000, 1)
    x, se = o1.summary["exponent"], o1.summary["exponent_se"]
    assert a / 2 - e / 2 - 3 * se < x < a / 2 + e / 2 + 3 * se
    deg = sample_mu_n(sys, casc, BernoulliVector([1.0] + [0.0] * 6), 1, 5000, 2)
    assert a / 2 - e / 2 < deg.summary["exponent"] < a / 2 + e / 2
    with pytest.raises(ValidationError):
        sample_mu_n(SkewSystem([Sl2Matrix.diag(2.0)] * 3), casc, P7, 0, 10, 0)


def test_wasserstein(level1):
    sys, casc, certs = level1
    o0 = sample_mu_n(sys, casc, P7, 0, 20000, 0)
    o1 = sample_mu_n(sys, casc, P7, 1, 20000, 1)
    s0 = OrbitSummary.from_orbit(o0.symbols, o0.theta, stride=5)
    s1 = OrbitSummary.from_orbit(o1.symbols, o1.theta, stride=5)
    assert wasserstein_estimate(s0, s0, 32, 0)[0] == 0
    w = wasserstein_estimate(s0, s1, 64, 0)[0]
    assert w <= wasserstein_envelope(certs[0].eps, 1.0, certs[0].alpha)
    d = 0.4
    pa = OrbitSummary(np.zeros((50, 3), dtype=int), np.full(50, 0.2))
    pb = OrbitSummary(np.zeros((50, 3), dtype=int), np.full(50, 0.2 + d))
    assert wasserstein_estimate(pa, pb, 64, 0)[0] >= d - 0.05


def test_birkhoff_examples(level1):
    sys, casc, certs = level1
    r = birkhoff_diagnostic(sys, casc, P7, "const", 0, 1, 0, steps=20000)
    assert r["quantiles"]["0.99"] == pytest.approx(0.0, abs=1e-12) and r["mass_within"] == 1
    rot = SkewSystem([Sl2Matrix.rotation(1.0), Sl2Matrix.rotation(math.sqrt(2))])
    c = Cascade(SubstitutionMap([[0, 1], [1, 0]], 2), (2,), 0, ZeroTails())
    plumb = CifsCertificate([(0,)], Arc.around(0.0, 0.2), 2.0, -0.5, -1.0, 0.2, 64)
    r = birkhoff_diagnostic(rot, c, HALF, "logd", 0, 1, 0, steps=5000, cert=plumb)
    assert r["quantiles"]["0.99"] < 1e-12
    with pytest.raises(ValidationError):
        birkhoff_diagnostic(sys, casc, P7, "const", 1, 1, 0)


def test_blending_examples():
    J = Arc.around(0.0, 0.3)
    rot = SkewSystem([Sl2Matrix.rotation(1.0), Sl2Matrix.rotation(math.sqrt(2))])
    assert not check_blending(rot, J, 64, max_len=12, sizes=(0.05,), n_centers=2).cec_plus
    mix = SkewSystem([Sl2Matrix.diag(2.0), Sl2Matrix.rotation(math.sqrt(2))])
    rep = check_blending(mix, J, 256)
    assert rep.acc and rep.cec_plus and rep.constants_plus["K5"] > 0
    one = SkewSystem([Sl2Matrix.diag(2.0)])
    assert not check_blending(one, J, 64, max_len=12, sizes=(0.05,), n_centers=2).acc


def test_arc_serialisation():
    J = Arc.around(3.0, 0.2)
    assert Arc.from_json(J.to_json()) == J
    assert J.contains(3.05) and not J.contains(2.0)
    with pytest.raises(ValidationError):
        Arc(0.0, 4.0)
    sys = SkewSystem([Sl2Matrix.diag(2.0), Sl2Matrix.rotation(0.3)])
    assert np.allclose(SkewSystem.from_json(sys.to_json()).mats, sys.mats)
    th, ld = fiber_orbit(sys, [0, 1, 0], 0.2)
    assert th.size == 4 and ld.size == 3
