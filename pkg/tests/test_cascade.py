import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.stats import binom

from fbarlab.cascade import (Cascade, SyntheticTails, TableTails, ZeroTails, bernstein_L, bernstein_series,
                             fluctuations, level_fbar_bounds, lift_bernoulli, lln_check, nu_entropy,
                             respell, sample_nu_n, sample_nu_pair, tail_sandwich)
from fbarlab.errors import LevelError, TailBudgetError, ValidationError
from fbarlab.fbar import edit_distance_n
from fbarlab.substitution import CodedMeasureSpec, SubstitutionMap, kappa_cylinder
from fbarlab.symdyn import BernoulliVector, RngStream, block_distribution

HALF = BernoulliVector([0.5, 0.5])
RHO0 = SubstitutionMap([[0, 1, 1, 0], [1, 0, 0, 1]], 2)


def synthetic(ms=(2, 2, 2), K=0.1, mode="digit", base_len=8):
    return Cascade.synthetic(2, 2, base_len, ms, K, mode)


def test_respell_examples():
    c = synthetic()
    a = c.letter(3, np.arange(8) % 2)
    assert c.respell(a, 3) == [a]
    assert [b.digits.tolist() for b in c.respell(a, 0)] == [[d] for d in a.digits.tolist()]
    with pytest.raises(LevelError):
        c.respell(a, 4)


@given(st.lists(st.integers(0, 1), min_size=12, max_size=12), st.integers(0, 3), st.data())
def test_respell_composition(digits, k, data):
    c = Cascade(RHO0, (2, 3, 2), 0, ZeroTails())
    a = c.letter(3, digits)
    j = data.draw(st.integers(0, k))
    via = [y for x in c.respell(a, k) for y in c.respell(x, j)]
    assert via == c.respell(a, j) == respell(a, j, c.ms)


def test_lift_examples():
    c = synthetic()
    p = BernoulliVector([0.3, 0.7])
    assert lift_bernoulli(p, 0, c).prob([1]) == pytest.approx(0.7)
    assert lift_bernoulli(p, 3, c).prob(np.zeros(8, dtype=int)) == pytest.approx(0.3**8)
    c2 = Cascade(RHO0, (4, 2), 0.1)
    total = sum(c2.lift(p, 2).prob(a) for a in c2.enumerate_letters(2))
    assert total == pytest.approx(1.0, abs=1e-12)


def test_zero_tails_roof():
    c = Cascade(RHO0, (2, 3, 4), 0, ZeroTails())
    a = c.letter(3, np.ones(24, dtype=int))
    assert c.roof_length(a) == 24 * 4
    assert len(c.image(a)) == 96


@pytest.mark.parametrize("mode", ["digit", "constant"])
def test_tail_sandwich_and_maxmin(mode):
    K = 0.1
    c = synthetic((2, 2, 2, 2), K, mode, base_len=64)
    rng = np.random.default_rng(0)
    for _ in range(40):
        a = c.letter(4, rng.integers(0, 2, 16))
        for k in range(5):
            ok, _ = tail_sandwich(c, a, k)
            assert ok
    for n in range(5):
        hi, lo = c.extreme_roofs(n)
        assert hi <= lo * (1 + 4 * K)


def test_tail_budget_enforced():
    # budget at level 1 is 0.1 * 2^-1 * 8 = 0.4 symbols
    c = Cascade(RHO0, (2,), 0.1, TableTails({(0, 0): [], (0, 1): [0, 1, 1]}))
    assert c.tail_length(c.letter(1, [0, 0])) == 0
    with pytest.raises(TailBudgetError):
        c.roof_length(c.letter(1, [0, 1]))


def test_image_recursion():
    c = synthetic((2, 3), 0.2, base_len=16)
    a = c.letter(2, [0, 1, 1, 0, 0, 0])
    img = c.image(a)
    kids = np.concatenate([c.image(b) for b in c.children(a)] + [c.tail(a)])
    assert np.array_equal(img, kids) and img.size == c.roof_length(a)


def test_expected_roof_digit_mode_matches_binomial_oracle():
    c = synthetic((3, 3), 0.5, base_len=64)
    p = BernoulliVector([0.3, 0.7])
    e, se = c.expected_roof(p, 2)
    assert se == 0
    # independent oracle: expected tails from binomial sums, level by level
    oracle = 9 * 64.0
    for k, N in ((1, 3), (2, 9)):
        z = np.arange(N + 1)
        lens = (np.floor(0.5 * 64 * z / 2**k)).astype(float)
        oracle += 9 // N * float(np.dot(binom.pmf(z, N, 0.3), lens))
    assert e == pytest.approx(oracle, rel=1e-12)
    # and enumeration agrees at level 1
    c1 = synthetic((3,), 0.5, base_len=64)
    enum = sum(c1.lift(p, 1).prob(a) * c1.roof_length(a) for a in c1.enumerate_letters(1))
    assert c1.expected_roof(p, 1)[0] == pytest.approx(enum)


def test_fluctuations():
    c = Cascade(RHO0, (2, 2), 0, ZeroTails())
    f = fluctuations(c, HALF, 2, 2, 200, 0)
    assert np.all(f.delta_nn == 0) and f.D == 0
    c = synthetic((2, 2, 2), 0.1, base_len=64)
    f = fluctuations(c, HALF, 3, 1, 10**4, 1)
    assert f.corend_violations == 0
    assert f.D < 0.4
    assert np.all(f.delta_nk >= 0) and np.all(f.delta_nn >= 0)
    assert f.expected_roof >= 8 * 64


def test_lln_examples():
    assert lln_check(BernoulliVector([1.0, 0.0]), 200, 0.1, 100, 0).good_mass == 1.0
    assert lln_check(HALF, 200, 0.999, 200, 0).good_mass == 1.0
    r = lln_check(HALF, 1000, 0.1, 10**4, 3)
    assert r.good_mass >= 0.9 and r.series <= 0.1


def test_bernstein_L_minimal():
    L, s = bernstein_L(0.1, 2)
    assert s <= 0.1
    assert bernstein_series(L * (1 - 1e-3), 0.1, 2) > 0.1
    # tail bound: truncating much later changes the value very little
    full = bernstein_series(L, 0.1, 2, terms=200000)
    assert full <= s + 1e-12


def test_sample_nu_n_examples():
    c = Cascade(SubstitutionMap.identity(2), (2, 2), 0, ZeroTails())
    w = sample_nu_n(c, BernoulliVector([0.3, 0.7]), 0, 10**5, 0).symbols
    assert abs(np.mean(w == 0) - 0.3) < 0.01
    c = synthetic((2, 2), 0.2, base_len=16)
    w = sample_nu_n(c, BernoulliVector([1.0, 0.0]), 2, 2000, 0).symbols
    per = c.roof_length(c.letter(2, np.zeros(4, dtype=int)))
    assert np.array_equal(w[per:], w[:-per])


def test_zero_tails_levels_share_statistics():
    c = Cascade(RHO0, (2, 2), 0, ZeroTails())
    p = BernoulliVector([0.4, 0.6])
    spec = CodedMeasureSpec(RHO0, p)
    for n in (0, 2):
        w = sample_nu_n(c, p, n, 2 * 10**5, n).symbols
        d = block_distribution(w, 3)
        for u in itertools.product((0, 1), repeat=3):
            assert abs(d.get(u, 0.0) - kappa_cylinder(spec, u)) < 0.01


def test_nu_pair_marginals():
    c = synthetic((2, 2), 0.2, base_len=16)
    reps = 1500
    hits_l = hits_k = 0
    for r in range(reps):
        y, z = sample_nu_pair(c, HALF, 0, 2, 1, RngStream(r))
        hits_l += int(y[0] == 0)
        hits_k += int(z[0] == 0)
    ref_l = np.mean(sample_nu_n(c, HALF, 2, 10**5, 9).symbols == 0)
    ref_k = np.mean(sample_nu_n(c, HALF, 0, 10**5, 9).symbols == 0)
    se = math.sqrt(0.25 / reps)
    assert abs(hits_l / reps - ref_l) < 4 * se + 0.01
    assert abs(hits_k / reps - ref_k) < 4 * se + 0.01


def test_consecutive_levels_within_certified_bound():
    K = 0.1
    c = synthetic((2, 2, 2), K, base_len=64)
    for k in range(3):
        vals = []
        for r in range(10):
            y, z = sample_nu_pair(c, HALF, k, k + 1, 4096, RngStream(100 * k + r))
            vals.append(edit_distance_n(y, z))
        se = np.std(vals, ddof=1) / math.sqrt(len(vals))
        b = level_fbar_bounds(c, HALF, HALF, k, k + 1)
        assert np.mean(vals) <= min(b["level_gap"]["value"], b["kickoff"]["value"]) + 3 * se


def test_nu_entropy_examples():
    c = Cascade(RHO0, (2, 2), 0, ZeroTails())
    assert nu_entropy(c, HALF, 2).value == pytest.approx(math.log(2) / 4)
    assert nu_entropy(c, BernoulliVector([1.0, 0.0]), 2).value == 0
    c = Cascade.synthetic(2, 2, 4, (2, 2, 2), 0.1)
    for n in range(4):
        v = nu_entropy(c, HALF, n).value
        assert math.log(2) / (4 * 1.4) <= v <= math.log(2) / 4 + 1e-12


def test_level_bounds_examples():
    c0 = Cascade(RHO0, (2, 2, 2), 0, ZeroTails())
    p, q = HALF, BernoulliVector([0.6, 0.4])
    b = level_fbar_bounds(c0, p, q, 0, 2)
    assert b["kickoff"]["value"] == 0 and b["level_gap"]["value"] == 0
    assert b["cross_vector"]["value"] == pytest.approx(0.5 * 0.2)
    b = level_fbar_bounds(synthetic(K=0.05), p, p, 0, 1)
    assert b["kickoff"]["value"] == pytest.approx(0.32)
    assert level_fbar_bounds(Cascade.synthetic(2, 2, 8, (2, 2, 2, 2), 0.1), p, p, 3, 4)["level_gap"]["value"] \
        == pytest.approx(0.05)
    with pytest.raises(LevelError):
        level_fbar_bounds(c0, p, q, 2, 1)


def test_validation():
    with pytest.raises(ValidationError):
        Cascade(SubstitutionMap([[0], [0, 1]], 2), (2,), 0.1)
    with pytest.raises(ValidationError):
        Cascade(RHO0, (1,), 0.1)
    with pytest.raises(ValidationError):
        SyntheticTails("bogus")


def test_entropy_ratio_between_levels():
    K = 0.1
    c = synthetic((2, 2, 2, 2), K, base_len=32)
    p = BernoulliVector([0.35, 0.65])
    h = [nu_entropy(c, p, n).value for n in range(5)]
    for n in range(1, 5):
        assert 1 / (1 + 4 * K * 2.0 ** -(n - 1)) - 1e-12 <= h[n] / h[n - 1] <= 1 + 1e-12
