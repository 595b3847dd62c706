import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from mw_oracle import brute_force_p

from crossbench.stats.ranktests import holm_adjust, mann_whitney_test


def test_smallest_case():
    res = mann_whitney_test([1, 2], [3, 4], mode="exact")
    assert res.u == 0 and res.p == pytest.approx(1 / 3)
    assert res.p == brute_force_p([1, 2], [3, 4])


def test_auto_picks_exact_for_small_samples():
    assert mann_whitney_test([1, 2, 3], [4, 5, 6]).method == "exact"
    assert mann_whitney_test(range(11), range(20, 30)).method == "normal"


sizes = st.integers(1, 6)


@settings(max_examples=200, deadline=None)
@given(sizes, sizes, st.data())
def test_exact_equals_enumeration_tie_free(n1, n2, data):
    values = data.draw(st.permutations(range(n1 + n2)))
    x, y = values[:n1], values[n1:]
    assert mann_whitney_test(x, y, mode="exact").p == brute_force_p(x, y)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.integers(1, 4), min_size=1, max_size=6), st.lists(st.integers(1, 4), min_size=1, max_size=6))
def test_exact_equals_enumeration_with_ties(x, y):
    assert mann_whitney_test(x, y, mode="exact").p == brute_force_p(x, y)


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.lists(st.floats(0, 10), min_size=1, max_size=8))
def test_swap_symmetry(x, y):
    a = mann_whitney_test(x, y, mode="exact")
    b = mann_whitney_test(y, x, mode="exact")
    assert a.p == pytest.approx(b.p, abs=1e-12)
    assert a.u + b.u == pytest.approx(len(x) * len(y))


lattice = st.lists(st.integers(1, 100).map(lambda i: i / 10), min_size=2, max_size=8)


# float log can merge neighbouring doubles, so draw from a coarse lattice
@given(lattice, lattice)
def test_monotone_transform_invariance(x, y):
    f = math.log
    assert mann_whitney_test(x, y, mode="exact").p == pytest.approx(
        mann_whitney_test([f(v) for v in x], [f(v) for v in y], mode="exact").p, abs=1e-12)


def test_all_tied_gives_one():
    assert mann_whitney_test([2, 2, 2], [2, 2], mode="exact").p == 1.0
    assert mann_whitney_test([2] * 15, [2] * 15, mode="normal").p == 1.0


def test_normal_close_to_exact_for_moderate_n():
    x = [1.1, 2.3, 3.0, 4.8, 5.2, 6.6, 7.1, 8.9, 9.4, 10.0]
    y = [3.3, 5.5, 7.7, 9.9, 11.2, 12.5, 13.1, 14.0, 15.6, 16.2]
    exact = mann_whitney_test(x, y, mode="exact").p
    approx = mann_whitney_test(x, y, mode="normal").p
    assert approx == pytest.approx(exact, abs=0.01)


def test_rejects_empty_and_unknown_mode():
    with pytest.raises(ValueError):
        mann_whitney_test([], [1])
    with pytest.raises(ValueError):
        mann_whitney_test([1], [2], mode="bootstrap")


def test_holm():
    assert holm_adjust([0.01, 0.04, 0.03]) == pytest.approx([0.03, 0.06, 0.06])
    assert holm_adjust([0.5, 0.9]) == [1.0, 1.0]


@given(st.lists(st.floats(0, 1), min_size=1, max_size=10))
def test_holm_never_below_raw(p):
    adj = holm_adjust(p)
    assert all(a >= r - 1e-15 and a <= 1.0 for a, r in zip(adj, p))


@given(st.lists(st.integers(0, 9), min_size=1, max_size=8))
def test_identical_samples_sit_at_the_centre(x):
    res = mann_whitney_test(x, list(x), mode="exact")
    assert res.u == len(x) ** 2 / 2 and res.p == 1.0
