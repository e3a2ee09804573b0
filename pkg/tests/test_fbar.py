import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import lp_transport, naive_lcs
from fbarlab.errors import UseMonteCarloError, ValidationError, WindowExhaustedError
from fbarlab.fbar import (bernoulli_fbar, edit_distance_n, entropy_drift_bound, fbar_coupling_upper,
                          fbar_family, fbar_measures_exact, fbar_sequences, lb_diagnostic,
                          read_word_law, write_word_law)
from fbarlab.lcs import lcs_length, lcs_matrix, lcs_rows
from fbarlab.symdyn import BernoulliVector, RngStream, bernoulli_block_law


def test_edit_distance_examples():
    assert edit_distance_n([0, 1, 0], [0, 1, 0]) == 0
    assert edit_distance_n([0, 1], [1, 0]) == 0.5
    assert edit_distance_n([0, 0, 0, 0], [1, 1, 1, 1]) == 1
    with pytest.raises(ValidationError):
        edit_distance_n([0, 1], [0])


def test_lcs_matches_naive_dp_on_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(200):
        n = int(rng.integers(1, 65))
        k = int(rng.integers(1, 5))
        a, b = rng.integers(0, k, n), rng.integers(0, k, n)
        assert lcs_length(a, b) == naive_lcs(a, b)


def test_lcs_long_words_cross_word_carry():
    rng = np.random.default_rng(2)
    for n in (63, 64, 65, 127, 128, 129, 300):
        a, b = rng.integers(0, 2, n), rng.integers(0, 2, n + 7)
        assert lcs_length(a, b) == naive_lcs(a, b)


def test_lcs_batches_agree():
    rng = np.random.default_rng(4)
    A, B = rng.integers(0, 3, (20, 30)), rng.integers(0, 3, (20, 30))
    rows = lcs_rows(A, B)
    mat = lcs_matrix(A, B)
    assert np.array_equal(rows, np.diag(mat))
    assert rows[3] == naive_lcs(A[3], B[3])


@given(st.lists(st.integers(0, 1), min_size=1, max_size=5))
def test_edit_distance_symmetric(a):
    b = a[::-1]
    assert edit_distance_n(a, b) == edit_distance_n(b, a)


def test_pseudometric_exhaustive_small():
    for n in range(1, 6):
        ws = list(itertools.product((0, 1), repeat=n))
        d = {(u, v): edit_distance_n(u, v) for u in ws for v in ws}
        for u in ws:
            assert d[u, u] == 0
            for v in ws:
                assert d[u, v] == d[v, u]
                for w in ws:
                    assert d[u, w] <= d[u, v] + d[v, w] + 1e-12


def test_sequences_identical_and_disjoint():
    rng = np.random.default_rng(0)
    a = rng.integers(0, 2, 4096)
    est = fbar_sequences(a, a, schedule=[16, 64, 256, 1024])
    assert est.value == 0 and all(v == 0 for _, v in est.trace)
    est = fbar_sequences(a, a + 2, schedule=[16, 64, 256, 1024])
    assert all(v == 1 for _, v in est.trace)
    assert est.kind == "upper-bound"


def test_sequences_shifted_periodic():
    a = np.tile([0, 1], 4096)
    b = np.tile([1, 0], 4096)
    est = fbar_sequences(a, b, schedule=[16, 256, 4096])
    vals = [v for _, v in est.trace]
    # deleting one symbol aligns the two words: value 1/L
    assert vals == pytest.approx([1 / 16, 1 / 256, 1 / 4096])


def test_sequences_too_short():
    with pytest.raises(WindowExhaustedError):
        fbar_sequences([0, 1, 0], [0, 1, 0], schedule=[16])


def test_exact_examples():
    law = {(0, 1): 0.5, (1, 1): 0.5}
    assert fbar_measures_exact(law, law).value == pytest.approx(0.0)
    assert fbar_measures_exact({(0,): 1.0}, {(1,): 1.0}).value == pytest.approx(1.0)
    est = fbar_measures_exact({(0,): 0.5, (1,): 0.5}, {(0,): 0.75, (1,): 0.25})
    assert est.value == pytest.approx(0.25) and est.kind == "exact"


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_exact_matches_linear_program(n):
    p, q = BernoulliVector([0.5, 0.5]), BernoulliVector([0.75, 0.25])
    left, right = bernoulli_block_law(p, n), bernoulli_block_law(q, n)
    assert fbar_measures_exact(left, right).value == pytest.approx(lp_transport(left, right), abs=1e-9)


def test_exact_random_laws_match_linear_program():
    rng = np.random.default_rng(8)
    for _ in range(5):
        ws = [tuple(rng.integers(0, 3, 4)) for _ in range(6)]
        vs = [tuple(rng.integers(0, 3, 4)) for _ in range(5)]
        left = dict(zip(ws, rng.dirichlet(np.ones(len(ws)))))
        right = dict(zip(vs, rng.dirichlet(np.ones(len(vs)))))
        left = {k: v / sum(left.values()) for k, v in left.items()}
        right = {k: v / sum(right.values()) for k, v in right.items()}
        assert fbar_measures_exact(left, right).value == pytest.approx(lp_transport(left, right), abs=1e-9)


def test_exact_cap():
    law = bernoulli_block_law(BernoulliVector([0.5, 0.5]), 6)
    with pytest.raises(UseMonteCarloError):
        fbar_measures_exact(law, law, cap=100)


def test_joining_validation():
    with pytest.raises(ValidationError):
        fbar_measures_exact({(0,): 0.5}, {(0,): 1.0})
    with pytest.raises(ValidationError):
        fbar_measures_exact({(0,): 1.0}, {(0, 1): 1.0})


def test_coupling_examples():
    rng = RngStream(0)
    det = lambda n, r: np.zeros(n, dtype=np.int64)
    assert fbar_coupling_upper(det, det, 32, 10, rng).value == 0
    e = fbar_coupling_upper(BernoulliVector([1.0, 0.0]), BernoulliVector([0.0, 1.0]), 50, 5, rng)
    assert e.value == 1


def test_monotone_coupling_band():
    p, q = BernoulliVector([0.5, 0.5]), BernoulliVector([0.75, 0.25])
    e = fbar_coupling_upper(p, q, 512, 1000, RngStream(1))
    # the monotone coupling only mismatches 1 -> 0, so f-bar_n equals the Hamming fraction
    assert 0.25 - 3 * e.stderr <= e.value <= 0.33


def test_exact_below_coupling():
    p, q = BernoulliVector([0.5, 0.5]), BernoulliVector([0.75, 0.25])
    for n in (2, 4, 6):
        exact = fbar_measures_exact(bernoulli_block_law(p, n), bernoulli_block_law(q, n)).value
        up = fbar_coupling_upper(p, q, n, 2000, RngStream(n))
        assert exact <= up.value + 3 * up.stderr


def test_family_close_to_half_city_metric():
    p, q = BernoulliVector([0.5, 0.5]), BernoulliVector([0.75, 0.25])
    vals = [e.value for e in fbar_family(p, q, range(1, 8))]
    assert all(b <= a + 1e-9 for a, b in zip(vals, vals[1:]))
    assert abs(vals[-1] - bernoulli_fbar(p, q)) < 0.05


def test_bernoulli_fbar_examples():
    p = BernoulliVector([0.3, 0.7])
    assert bernoulli_fbar(p, p) == 0
    assert bernoulli_fbar(BernoulliVector([1.0, 0.0]), BernoulliVector([0.0, 1.0])) == 1
    assert bernoulli_fbar(BernoulliVector([0.5, 0.5]), BernoulliVector([0.75, 0.25])) == 0.25


def test_entropy_drift_bound():
    assert entropy_drift_bound(0.5, 2) == pytest.approx(2.5 * math.log(2))
    h = -0.1 * math.log(0.1) - 0.9 * math.log(0.9)
    assert entropy_drift_bound(0.1, 4) == pytest.approx(2 * h + 0.1 * math.log(4))
    vals = [entropy_drift_bound(e, 3) for e in np.linspace(1e-6, 0.5, 50)]
    assert all(b > a for a, b in zip(vals, vals[1:]))
    assert entropy_drift_bound(1e-9, 3) < 1e-6
    with pytest.raises(ValidationError):
        entropy_drift_bound(0.0, 2)


def test_lb_diagnostic():
    const = lambda n, r: np.zeros(n, dtype=np.int64)
    assert lb_diagnostic(const, 50, 0.01, 20, 0) == 1.0
    assert lb_diagnostic(BernoulliVector([0.5, 0.5]), 100, 0.01, 50, 0) < 0.1


def test_word_law_roundtrip():
    law = {(0, 1): 0.25, (1, 1): 0.75}
    assert read_word_law(write_word_law(law)) == law
    assert read_word_law([[[0, 1], 0.25], [[1, 1], 0.75]]) == law
