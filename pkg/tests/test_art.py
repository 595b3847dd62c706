import numpy as np
import pytest
from art_oracle import exhaustive_p, is_saturated
from hypothesis import given, settings
from hypothesis import strategies as st

from crossbench.errors import DesignError
from crossbench.stats.art import ARTDesign, n_distinct_assignments, rank_permutation_anova

A9 = [0, 0, 0, 0, 1, 1, 1, 1, 0]
B9 = [0, 0, 1, 1, 0, 0, 1, 1, 0]
C9 = [0, 1, 0, 1, 0, 1, 0, 1, 0]
SETS = [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


@pytest.fixture(scope="module")
def nine_obs():
    y = np.round(np.random.default_rng(4).normal(5, 2, 9), 2)
    p, f = exhaustive_p(y, [A9, B9, C9])
    return y, p, f


def three_way(n_per_cell=2, seed=0, shift=0.0):
    rng = np.random.default_rng(seed)
    rows = [(a, b, g) for a in ("light_strip", "eyes", "none") for b in ("stop", "pass")
            for g in ("human", "vlm") for _ in range(n_per_cell)]
    y = rng.normal(5, 1, len(rows)) + shift * np.array([g == "vlm" for *_, g in rows])
    factors = {"eHMI": [r[0] for r in rows], "AV": [r[1] for r in rows], "Group": [r[2] for r in rows]}
    return y, factors


def test_seven_effects_named_in_order():
    y, factors = three_way()
    table = rank_permutation_anova(y, factors, n_perm=99)
    assert table.names() == ["eHMI", "AV", "Group", "eHMI×AV", "eHMI×Group", "AV×Group", "eHMI×AV×Group"]
    assert [e.df_effect for e in table.effects] == [2, 1, 1, 2, 2, 1, 2]
    assert table.effects[0].df_resid == 24 - 12


def test_exhaustive_matches_oracle(nine_obs):
    y, p, f = nine_obs
    table = rank_permutation_anova(y, {"A": A9, "B": B9, "C": C9}, mode="exhaustive")
    assert table.n_perm == n_distinct_assignments(ARTDesign({"A": A9, "B": B9, "C": C9}).cells)
    for effect, s in zip(table.effects, SETS):
        assert effect.p == p[s]
        assert effect.f == pytest.approx(f[s], rel=1e-9)


def test_exhaustive_matches_oracle_two_way():
    y = np.round(np.random.default_rng(11).normal(0, 1, 8), 3)
    a, b = [0, 0, 0, 0, 1, 1, 1, 1], [0, 0, 1, 1, 0, 0, 1, 1]
    p, _ = exhaustive_p(y, [a, b])
    table = rank_permutation_anova(y, {"A": a, "B": b}, mode="exhaustive")
    assert [e.p for e in table.effects] == [p[(0,)], p[(1,)], p[(0, 1)]]


def test_sampled_close_to_exhaustive(nine_obs):
    y, p, _ = nine_obs
    table = rank_permutation_anova(y, {"A": A9, "B": B9, "C": C9}, n_perm=10_000, seed=1)
    for effect, s in zip(table.effects, SETS):
        assert abs(effect.p - p[s]) <= 0.02


def test_saturated_design_rejected():
    a, b, c = A9[:8], B9[:8], C9[:8]
    assert is_saturated([a, b, c])
    with pytest.raises(DesignError, match="residual degrees of freedom"):
        rank_permutation_anova(np.arange(8.0), {"A": a, "B": b, "C": c}, mode="exhaustive")


def test_constant_response_gives_p_one():
    _, factors = three_way()
    table = rank_permutation_anova(np.full(24, 3.0), factors, n_perm=199)
    assert all(e.p == 1.0 and e.f == 0.0 for e in table.effects)


def test_same_seed_same_table():
    y, factors = three_way(seed=2)
    assert rank_permutation_anova(y, factors, n_perm=500, seed=9) == rank_permutation_anova(y, factors, n_perm=500, seed=9)


def test_p_value_bounds_and_floor():
    y, factors = three_way(n_per_cell=4, shift=4.0)
    table = rank_permutation_anova(y, factors, n_perm=199, seed=0)
    assert table["Group"].p == pytest.approx(1 / 200)
    assert all(0 < e.p <= 1 for e in table.effects)


def test_single_level_factor():
    with pytest.raises(DesignError, match="single level"):
        rank_permutation_anova([1.0, 2.0, 3.0, 4.0], {"A": [0, 0, 0, 0], "B": [0, 1, 0, 1]})


def test_empty_cell_named():
    with pytest.raises(DesignError, match="1/1"):
        rank_permutation_anova([1.0, 2.0, 3.0, 4.0], {"A": [0, 0, 1, 1], "B": [0, 1, 0, 0]})


def test_exhaustive_size_limit():
    y, factors = three_way()
    with pytest.raises(DesignError, match="at most"):
        rank_permutation_anova(y, factors, mode="exhaustive")


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(24)), st.integers(0, 2**16))
def test_row_order_does_not_change_table(order, seed):
    y, factors = three_way(seed=seed % 50)
    base = rank_permutation_anova(y, factors, n_perm=50, seed=seed)
    order = np.array(order)
    shuffled = {k: [v[i] for i in order] for k, v in factors.items()}
    again = ARTDesign(shuffled).f_statistics(y[order])[:, 0]
    assert again == pytest.approx([e.f for e in base.effects], rel=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 1000))
def test_affine_rescaling_keeps_f(seed):
    # alignment works on the raw scale, so only affine maps are guaranteed to preserve F
    y, factors = three_way(seed=seed)
    design = ARTDesign(factors)
    assert design.f_statistics(3 * y + 7)[:, 0] == pytest.approx(design.f_statistics(y)[:, 0], rel=1e-9)
