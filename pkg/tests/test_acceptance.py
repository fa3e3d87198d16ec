"""End-to-end acceptance checks, one marker per criterion.

Run with pytest; the terminal summary prints one PASS/FAIL line per criterion.
"""

from fractions import Fraction

import numpy as np
import pytest

from waxkit.combiner import (apply_permutation, apply_theta, b_tilde, build_structure,
                             cf_expansion, kron_lift)
from waxkit.decentral import accounting, build_topology, run_training
from waxkit.errors import InfeasibleError, RankError, StructureDomainError
from waxkit.model import complex_gaussian, make_dims, module_dims, random_channel
from waxkit.solver import mutual_info, solve_equivalent, solve_generic, validate_A
from waxkit.tradeoff import min_Tp, structure_min_L, structure_min_Tp, sweep

SEEDS5 = [0, 1, 2, 3, 4]


def criterion(n, title):
    return pytest.mark.criterion(n, title)


# ------------------------------------------------------------------ 1
C1 = criterion(1, "Example 1 bounds 20/16/15 and validity flips at each bound")


@C1
def test_c1_bounds():
    got = [structure_min_L(40, (9, 6), s).min_integer for s in ("prop3", "prop5", "conjecture")]
    assert got == [20, 16, 15]


@C1
@pytest.mark.parametrize("structure,L", [("prop3", 20), ("prop5", 16), ("general", 15)])
def test_c1_validity(structure, L):
    cm = build_structure(module_dims(9, 6), structure)
    assert validate_A(cm, make_dims(9 * L, 40, L, 6), SEEDS5).valid
    below = validate_A(cm, make_dims(9 * (L - 1), 40, L - 1, 6), SEEDS5)
    assert not below.valid
    assert all(r.status != "ok" for r in below.per_seed)


# ------------------------------------------------------------------ 2
C2 = criterion(2, "Example 2: T_P,min, per-structure L bounds and implied T values")


@C2
def test_c2_min_Tp_and_bounds():
    assert min_Tp(64, 10, 2).min_integer == 26
    assert min_Tp(64, 10, 4).min_integer == 10
    assert structure_min_L(10, (16, 10), "prop3").min_integer == 5
    assert structure_min_L(10, (16, 11), "prop3").threshold == Fraction(10, 3)
    assert structure_min_L(10, (16, 10), "prop5").admits(4)


@C2
def test_c2_implied_T():
    # T = L * (smallest T_P at which the structure admits L); M = 64, K = 10
    got = [2 * structure_min_Tp(64, 10, 2, "prop3"),
           4 * structure_min_Tp(64, 10, 4, "prop3"),
           4 * structure_min_Tp(64, 10, 4, "prop5")]
    assert got == [52, 100, 96]


# ------------------------------------------------------------------ 3
C3 = criterion(3, "printed 9x6 modules reproduced entrywise")
PRINTED = {
    "prop3": [[1, 0, 0, 1, 0, 0], [1, 0, 0, 0, 1, 0], [1, 0, 0, 0, 0, 1]],
    "prop5": [[1, 1, 0, 1, 0, 0], [1, 0, 1, 0, 1, 0], [1, 1, 0, 0, 0, 1]],
    "general": [[1, 1, 0, 1, 0, 0], [1, 0, 1, 0, 1, 0], [1, 1, 1, 0, 0, 1]],
}


@C3
@pytest.mark.parametrize("structure", list(PRINTED))
def test_c3_printed(structure):
    cm = build_structure(module_dims(9, 6), structure)
    expected = np.vstack([np.eye(6, dtype=int), np.array(PRINTED[structure])])
    assert np.array_equal(cm.A_tilde, expected)


# ------------------------------------------------------------------ 4
C4 = criterion(4, "fundamental bound T=7 vs T=6 at (8,4,1); conjecture sweep at (120,9)")


def _generic_succeeds(T, seed):
    A = complex_gaussian(np.random.default_rng(500 + seed), (8, T))
    H = random_channel(make_dims(8, 4, 1, T, strict=False), seed=seed)
    try:
        f = solve_generic(A, H, seed=seed)
    except InfeasibleError:
        return False
    return f.residual < 1e-8 and min(f.block_ranks) == 1


@C4
def test_c4_fundamental_boundary():
    assert all(_generic_succeeds(7, s) for s in range(10))
    assert not any(_generic_succeeds(6, s) for s in range(10))


@C4
def test_c4_fig4_sweep():
    rows = sweep(120, 9, "conjecture", confirm=True)
    by_L = {}
    for r in rows:
        by_L.setdefault(r.L, {})[r.bound_kind] = r
    assert sorted(by_L) == [1, 2, 3, 4, 5, 6, 8]
    for L, kinds in by_L.items():
        c, a = kinds["Conjecture"], kinds["MinTp"]
        assert c.T_P - a.T_P <= 1
        dims = make_dims(120, 9, L, c.T_P)
        assert validate_A(build_structure(dims, "general"), dims, [0, 1, 2]).valid


# ------------------------------------------------------------------ 5
C5 = criterion(5, "losslessness: MI preserved when decomposable, lost below the bound")


def _instances(n, below, seed):
    rng = np.random.default_rng(seed)
    structures = ["prop3", "prop4", "prop5", "general"]
    out = []
    while len(out) < n:
        s = structures[len(out) % 4]
        K = int(rng.integers(2, 9))
        mp = int(rng.integers(3, 11))
        tp = int(rng.integers(2, mp))
        try:
            L = structure_min_L(K, (mp, tp), s).min_integer - below
        except StructureDomainError:
            continue
        if not 1 <= L <= K:
            continue
        out.append((s, K, mp, tp, L))
    return out


@C5
def test_c5_lossless():
    for i, (s, K, mp, tp, L) in enumerate(_instances(20, 0, 5)):
        dims = make_dims(mp * L, K, L, tp, strict=False)
        cm = build_structure(dims, s)
        H = random_channel(dims, seed=i)
        f = solve_equivalent(cm, H, seed=i)
        gap = mutual_info(H) - mutual_info(H, 1.0, (f.W_blocks, kron_lift(cm)))
        assert abs(gap) < 1e-6, (s, K, mp, tp, L, gap)


@C5
def test_c5_lossy():
    for i, (s, K, mp, tp, L) in enumerate(_instances(5, 1, 6)):
        dims = make_dims(mp * L, K, L, tp, strict=False)
        cm = build_structure(dims, s)
        H = random_channel(dims, seed=i)
        f = solve_equivalent(cm, H, seed=i, best_effort=True)
        assert not f.feasible
        gap = mutual_info(H) - mutual_info(H, 1.0, (f.W_blocks, kron_lift(cm)))
        assert gap > 0.01, (s, K, mp, tp, L, gap)


# ------------------------------------------------------------------ 6
C6 = criterion(6, "decentralized training matches centralized; CSI locality; tree parameters")


def _table_one(structure, d):
    if structure == "prop3":
        return d.Phi, d.Q1
    if structure == "prop4":
        return d.T_P - 1, d.Q2_prop4
    return d.J, d.Q2_prop5


def _in_regime(structure, d):
    # prop4 targets T_P < M_P/2 + 1, prop3 and prop5 the complementary regime
    if structure == "prop4":
        return d.Phi >= d.T_P - 1
    return True


@C6
@pytest.mark.parametrize("structure", ["prop3", "prop4", "prop5"])
def test_c6_decentralized(structure):
    rng = np.random.default_rng({"prop3": 31, "prop4": 32, "prop5": 33}[structure])
    done = 0
    while done < 10:
        K = int(rng.integers(2, 9))
        mp = int(rng.integers(3, 13))
        tp = int(rng.integers(2, mp))
        try:
            L0 = structure_min_L(K, (mp, tp), structure).min_integer
        except StructureDomainError:
            continue
        L = L0 - (done % 3 == 2)  # every third instance one below the bound
        d = make_dims(mp * max(L, 1), K, max(L, 1), tp, strict=False)
        if not 1 <= L <= K or not _in_regime(structure, d):
            continue
        done += 1
        cm = build_structure(d, structure)
        top = build_topology(cm, d)
        H = random_channel(d, seed=done)
        res = []
        for solve in (lambda: run_training(top, cm, H, seed=done),
                      lambda: (solve_equivalent(cm, H, seed=done), None)):
            try:
                f, log = solve()
                res.append((f.residual, log))
            except (InfeasibleError, RankError):
                res.append((None, None))
        (rd, log), (rc, _) = res
        assert (rd is None) == (rc is None) == (L < L0)
        if rd is not None:
            assert rd < 1e-8 and rc < 1e-8
            acc = accounting(log, d)
            assert acc["peak_csi_scalars"] == (top.N2 + 1) * L * K < d.M * K
        assert (top.N1, top.N2) == _table_one(structure, d), (mp, tp, top.N1, top.N2)


# ------------------------------------------------------------------ 7
C7 = criterion(7, "validity and B-tilde invariant under full-rank Theta and permutations")


@C7
def test_c7_transformations():
    dims = make_dims(14, 6, 2, 5)
    cm = build_structure(dims, "prop3")
    assert structure_min_L(6, dims, "prop3").min_integer == 2
    assert validate_A(cm, dims, [0, 1, 2]).valid
    rng = np.random.default_rng(77)
    base = b_tilde(cm).matrix
    for _ in range(10):
        t = apply_theta(cm, complex_gaussian(rng, (5, 5)))
        assert np.max(np.abs(b_tilde(t).matrix - base)) <= 1e-12
        assert validate_A(t, dims, [0, 1, 2]).valid
    for _ in range(10):
        p = apply_permutation(cm, rng.permutation(7))
        assert validate_A(p, dims, [0, 1, 2]).valid


# ------------------------------------------------------------------ 8
C8 = criterion(8, "continued fraction of (T_P-1)/Phi: [2,1,2] = 8/3 and exhaustive folds")


@C8
def test_c8_continued_fractions():
    cf = cf_expansion(9, 12)
    assert list(cf.quotients) == [2, 1, 2]
    assert cf.value == cf.fold() == Fraction(8, 3)
    for mp in range(3, 41):
        for tp in range(2, mp):
            assert cf_expansion(tp, mp).fold() == Fraction(tp - 1, mp - tp)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
