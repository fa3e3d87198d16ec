"""Decentralization/complexity bounds relating L, T, T_P, M, M_P and K.

Every threshold is an exact ``Fraction``; ``min_integer`` applies the bound's
strictness (strict: floor + 1, non-strict: ceiling).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .combiner import Structure, build_structure, cf_expansion
from .errors import DegenerateError, DivisibilityError, StructureDomainError
from .model import DEFAULT_POLICY, NumericPolicy, SystemDims, make_dims, module_dims

NECESSARY_T = "NecessaryT"
NECESSARY_L = "NecessaryL"
ACHIEVABLE = "Achievable"
MIN_TP = "MinTp"
_KIND = {Structure.PROP3: "Prop3", Structure.PROP4: "Prop4", Structure.PROP5: "Prop5",
         Structure.GENERAL: "Conjecture", Structure.IDENTITY: ACHIEVABLE, Structure.SUM: ACHIEVABLE}


@dataclass(frozen=True)
class BoundReport:
    kind: str
    threshold: Fraction
    min_integer: int
    strict: bool
    implied_T: Optional[int] = None

    def admits(self, value: int) -> bool:
        return value >= self.min_integer


def _min_int(threshold: Fraction, strict: bool, floor_at: Optional[int] = None) -> int:
    v = math.floor(threshold) + 1 if strict else math.ceil(threshold)
    return v if floor_at is None else max(v, floor_at)


def necessary_T(M: int, K: int, L: int) -> BoundReport:
    """Fundamental bound ``T > max(M(K-L)/K, K-1)`` for a randomly chosen ``A``."""
    thr = max(Fraction(M * (K - L), K), Fraction(K - 1))
    return BoundReport(NECESSARY_T, thr, _min_int(thr, True), True)


def necessary_L(M: int, K: int, T: int) -> BoundReport:
    """Same bound solved for ``L``: ``L > K(M-T)/M``.  Needs ``T >= K`` separately."""
    thr = Fraction(K * (M - T), M)
    return BoundReport(NECESSARY_L, thr, _min_int(thr, True, 1), True)


def achievable_L(K: int, M_P: int, T_P: int) -> BoundReport:
    """``L >= K(M_P-T_P)/(M_P-1)``, attained by the sparse constructions."""
    if M_P == 1:
        raise DegenerateError("single panel: the achievable bound is vacuous")
    thr = Fraction(K * (M_P - T_P), M_P - 1)
    return BoundReport(ACHIEVABLE, thr, _min_int(thr, False, 1), False)


def _panel_dims(dims) -> SystemDims:
    if isinstance(dims, SystemDims):
        return dims
    M_P, T_P = dims
    return module_dims(M_P, T_P)


def structure_min_L(K: int, dims, structure) -> BoundReport:
    """Smallest ``L`` a structure supports at ``(M_P, T_P)``.

    ``dims`` is a SystemDims or a ``(M_P, T_P)`` pair; only the panel counts are used.
    """
    s = Structure.parse(structure)
    d = _panel_dims(dims)
    phi, T_P = d.Phi, d.T_P
    K = Fraction(K)
    if s is Structure.IDENTITY:
        if phi != 0:
            raise StructureDomainError("identity module needs T_P == M_P")
        thr = Fraction(0)
    elif s is Structure.SUM:
        if T_P != 1:
            raise StructureDomainError("sum module needs T_P == 1")
        thr = K
    elif s is Structure.PROP3:
        if not d.Q1:
            raise StructureDomainError(f"prop3 needs T_P-1 >= Phi >= 1 (T_P={T_P}, M_P={d.M_P})")
        thr = K / (1 + d.Q1)
    elif s is Structure.PROP4:
        if d.Q2_prop4 is None:
            raise StructureDomainError(f"prop4 needs T_P >= 2 and Phi >= 1 (T_P={T_P}, M_P={d.M_P})")
        thr = K / (1 + Fraction(1, d.Q2_prop4))
    elif s is Structure.PROP5:
        if not d.Q1 or not d.J:
            raise StructureDomainError(f"prop5 needs Q1 >= 1 and J >= 1 (T_P={T_P}, M_P={d.M_P})")
        thr = K / (1 + d.Q1 + Fraction(1, d.Q2_prop5))
    elif s is Structure.GENERAL:
        q_tot = cf_expansion(T_P, d.M_P).fold() if phi else None
        thr = Fraction(0) if q_tot is None else K / (1 + q_tot)
    else:
        raise StructureDomainError("no closed-form bound for custom modules")
    return BoundReport(_KIND[s], thr, _min_int(thr, False, 1), False)


def min_Tp(M: int, K: int, L: int) -> BoundReport:
    """``T_P,min = ceil(M_P - (M-L)/K)`` and the implied ``T = L * T_P,min``."""
    if M % L:
        raise DivisibilityError(f"L={L} does not divide M={M}")
    M_P = M // L
    thr = M_P - Fraction(M - L, K)
    tp = min(max(math.ceil(thr), 1), M_P)
    return BoundReport(MIN_TP, thr, tp, False, implied_T=L * tp)


def structure_min_Tp(M: int, K: int, L: int, structure) -> Optional[int]:
    """Smallest ``T_P`` (scanning up from ``T_P,min``) at which ``structure`` admits ``L``."""
    s = Structure.parse(structure)
    M_P = M // L
    if s is Structure.IDENTITY:
        return M_P
    start = min_Tp(M, K, L).min_integer
    for tp in range(start, M_P + 1):
        try:
            rep = structure_min_L(K, (M_P, tp), s)
        except StructureDomainError:
            continue
        if rep.admits(L):
            return tp
    return None


@dataclass(frozen=True)
class SweepRow:
    L: int
    T: Optional[int]
    structure: str
    bound_kind: str
    threshold: Fraction
    confirmed: Optional[bool] = None

    @property
    def T_P(self) -> Optional[int]:
        return None if self.T is None else self.T // self.L


def divisors(n: int, upto: Optional[int] = None) -> list:
    return [d for d in range(1, n + 1) if n % d == 0 and (upto is None or d <= upto)]


def sweep(M: int, K: int, structure, L_grid: Optional[Iterable[int]] = None,
          confirm: bool = False, seeds: Sequence[int] = (0, 1, 2),
          policy: NumericPolicy = DEFAULT_POLICY, reference: bool = True) -> list:
    """Trade-off table: per ``L``, the smallest ``T`` the structure supports.

    With ``reference`` each ``L`` also gets a fundamental (``NecessaryT``) and an
    achievable (``MinTp``) row.  With ``confirm`` structure points whose ``L`` is
    within 1 of the structure's threshold are checked by ``validate_A``.
    """
    from .solver import validate_A

    s = Structure.parse(structure)
    grid = divisors(M, K) if L_grid is None else list(L_grid)
    for L in grid:
        if M % L:
            raise DivisibilityError(f"L={L} does not divide M={M}")
    rows = []
    if s is Structure.IDENTITY:
        return [SweepRow(grid[0], M, s.value, ACHIEVABLE, Fraction(0), None)]
    for L in grid:
        M_P = M // L
        if reference:
            nt = necessary_T(M, K, L)
            rows.append(SweepRow(L, nt.min_integer, "fundamental", NECESSARY_T, nt.threshold))
            mt = min_Tp(M, K, L)
            rows.append(SweepRow(L, mt.implied_T, "achievable", MIN_TP, mt.threshold))
        tp = structure_min_Tp(M, K, L, s)
        if tp is None:
            rows.append(SweepRow(L, None, s.value, _KIND[s], Fraction(0), None))
            continue
        rep = structure_min_L(K, (M_P, tp), s)
        ok = None
        if confirm and L - rep.threshold < 1:
            dims = make_dims(M, K, L, tp, strict=False)
            if dims.regime_ok:
                ok = validate_A(build_structure(dims, s), dims, seeds, policy).valid
        rows.append(SweepRow(L, L * tp, s.value, rep.kind, rep.threshold, ok))
    return rows


CSV_COLUMNS = ("L", "T", "structure", "bound_kind", "threshold", "confirmed")


def write_csv(rows, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        conf = "" if r.confirmed is None else str(r.confirmed).lower()
        w.writerow([r.L, "" if r.T is None else r.T, r.structure, r.bound_kind,
                    f"{float(r.threshold):.6g}", conf])
