import io
import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from waxkit.combiner import build_structure
from waxkit.errors import DegenerateError, DivisibilityError, StructureDomainError
from waxkit.model import make_dims, module_dims
from waxkit.solver import validate_A
from waxkit.tradeoff import (CSV_COLUMNS, achievable_L, min_Tp, necessary_L, necessary_T,
                             structure_min_L, structure_min_Tp, sweep, write_csv)


def test_necessary_T_examples():
    r = necessary_T(64, 10, 2)
    assert r.threshold == Fraction(256, 5) and r.min_integer == 52 and r.strict
    r = necessary_T(8, 4, 1)
    assert (r.threshold, r.min_integer) == (6, 7)
    for K in (1, 3, 7):
        assert necessary_T(K, K, K).min_integer == K


def test_necessary_L():
    assert necessary_L(8, 4, 7).min_integer == 1
    assert necessary_L(8, 4, 6).min_integer == 2
    assert necessary_L(64, 10, 52).threshold == Fraction(15, 8)


def test_achievable_examples():
    r = achievable_L(10, 32, 26)
    assert r.threshold == Fraction(60, 31) and r.min_integer == 2 and not r.strict
    assert achievable_L(40, 9, 6).min_integer == 15
    r = achievable_L(7, 5, 5)
    assert r.threshold == 0 and r.min_integer == 1
    with pytest.raises(DegenerateError):
        achievable_L(4, 1, 1)


@pytest.mark.parametrize("K,mp,tp,s,expected", [
    (40, 9, 6, "prop3", 20), (40, 9, 6, "prop5", 16), (40, 9, 6, "conjecture", 15),
    (10, 16, 10, "prop3", 5), (10, 16, 10, "prop5", 4), (10, 32, 26, "prop3", 2),
    (6, 9, 4, "prop4", 4)])
def test_structure_min_L(K, mp, tp, s, expected):
    assert structure_min_L(K, (mp, tp), s).min_integer == expected


def test_structure_min_L_domain():
    with pytest.raises(StructureDomainError):
        structure_min_L(10, (16, 4), "prop3")
    with pytest.raises(StructureDomainError):
        structure_min_L(10, (16, 4), "custom")
    assert structure_min_L(10, (16, 11), "prop3").threshold == Fraction(10, 3)
    assert structure_min_L(5, module_dims(4, 4), "identity").min_integer == 1
    assert structure_min_L(5, (4, 1), "sum").min_integer == 5


def test_min_Tp_examples():
    r = min_Tp(64, 10, 2)
    assert (r.min_integer, r.implied_T) == (26, 52)
    r = min_Tp(64, 10, 4)
    assert (r.min_integer, r.implied_T) == (10, 40)
    assert min_Tp(12, 3, 12).min_integer == 1
    with pytest.raises(DivisibilityError):
        min_Tp(64, 10, 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 200), st.integers(1, 50), st.integers(1, 50))
def test_min_integer_matches_strictness(M, K, L):
    r = necessary_T(M, K, L)
    assert r.min_integer > r.threshold >= r.min_integer - 1
    if M > 1:
        a = achievable_L(K, M, max(1, M // 2))
        assert a.min_integer >= a.threshold
        assert a.min_integer == 1 or a.min_integer - 1 < a.threshold


def test_monotonicity():
    for K in (3, 8, 40):
        for mp in range(2, 41):
            prev = None
            for tp in range(1, mp + 1):
                a = achievable_L(K, mp, tp).threshold
                assert prev is None or a <= prev
                prev = a
                try:
                    b3 = structure_min_L(K, (mp, tp), "prop3").threshold
                    b5 = structure_min_L(K, (mp, tp), "prop5").threshold
                except StructureDomainError:
                    continue
                bc = structure_min_L(K, (mp, tp), "conjecture").threshold
                assert bc <= b5 <= b3


def test_prop3_meets_achievable_when_divisible():
    for mp in range(3, 41):
        for tp in range(2, mp):
            phi = mp - tp
            if (tp - 1) % phi == 0:
                assert structure_min_L(7, (mp, tp), "prop3").threshold == achievable_L(7, mp, tp).threshold


def test_conjecture_equals_achievable():
    for mp in range(2, 41):
        for tp in range(1, mp):
            assert structure_min_L(9, (mp, tp), "conjecture").threshold == achievable_L(9, mp, tp).threshold


def test_structure_min_Tp():
    assert structure_min_Tp(64, 10, 4, "prop3") == 11
    assert structure_min_Tp(64, 10, 4, "prop5") == 10
    assert structure_min_Tp(64, 10, 2, "prop3") == 26


def test_sweep_prop3_regime():
    rows = sweep(120, 9, "prop3", reference=False)
    assert [r.L for r in rows] == [1, 2, 3, 4, 5, 6, 8]
    for r in rows:
        M_P = 120 // r.L
        # T_P - 1 >= Phi, i.e. T_P >= (M_P + 1) / 2
        assert 2 * r.T_P >= M_P + 1


def test_sweep_identity_single_point():
    rows = sweep(24, 4, "identity")
    assert len(rows) == 1 and rows[0].T == 24


def test_sweep_conjecture_hugs_achievable():
    rows = sweep(120, 9, "conjecture", confirm=True)
    by_L = {}
    for r in rows:
        by_L.setdefault(r.L, {})[r.bound_kind] = r
    for L, kinds in by_L.items():
        gap = kinds["Conjecture"].T_P - kinds["MinTp"].T_P
        assert 0 <= gap <= 1
        assert kinds["Conjecture"].T >= kinds["NecessaryT"].T
        if L - kinds["Conjecture"].threshold < 1:
            assert kinds["Conjecture"].confirmed is True


def test_sweep_bad_grid():
    with pytest.raises(DivisibilityError):
        sweep(120, 9, "prop3", [7])


def test_csv_columns():
    buf = io.StringIO()
    write_csv(sweep(12, 3, "prop3", [1, 2]), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 1 + 2 * 3


@pytest.mark.parametrize("structure", ["prop3", "prop4", "prop5", "conjecture"])
def test_bounds_agree_with_oracle(structure):
    """Feasible at the structure bound, infeasible one below, on 50 random dims."""
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 50:
        K = int(rng.integers(1, 9))
        mp = int(rng.integers(2, 11))
        tp = int(rng.integers(1, mp + 1))
        try:
            rep = structure_min_L(K, (mp, tp), structure)
        except StructureDomainError:
            continue
        L = rep.min_integer
        if L > K:
            continue
        checked += 1
        cm = build_structure(module_dims(mp, tp), structure)
        assert validate_A(cm, make_dims(mp * L, K, L, tp, strict=False), [0, 1, 2]).valid
        if L > 1:
            below = make_dims(mp * (L - 1), K, L - 1, tp, strict=False)
            assert not validate_A(cm, below, [0, 1, 2]).valid
