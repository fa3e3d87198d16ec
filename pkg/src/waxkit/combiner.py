"""Sparse combining modules: construction, transformation and introspection.

A combining module is stored at panel level as an ``M_P x T_P`` matrix ``A_tilde``;
the antenna-level matrix is its Kronecker lift ``A_tilde (x) I_L``.  Every constructed
structure has an identity top block, so the interesting part is the bottom
``Phi x T_P`` block ``A_B``.  Panel indices are 0-based throughout.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .errors import AlphaError, RankError, SingularThetaError, StructureDomainError
from .model import DEFAULT_POLICY, SystemDims, is_full_rank, numerical_rank


class Structure(str, enum.Enum):
    IDENTITY = "identity"
    SUM = "sum"
    PROP3 = "prop3"
    PROP4 = "prop4"
    PROP5 = "prop5"
    GENERAL = "general"
    CUSTOM = "custom"

    @classmethod
    def parse(cls, value) -> "Structure":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        if v == "conjecture":
            return cls.GENERAL
        try:
            return cls(v)
        except ValueError:
            raise StructureDomainError(f"unknown structure {value!r}") from None


@dataclass(frozen=True)
class CombiningModule:
    A_tilde: np.ndarray
    structure: Structure
    alphas: tuple = ()
    L: int = 1

    def __post_init__(self):
        A = np.array(self.A_tilde, copy=True)
        if A.ndim != 2 or A.shape[1] > A.shape[0]:
            raise ValueError(f"A_tilde must be M_P x T_P with T_P <= M_P, got {A.shape}")
        A.setflags(write=False)
        object.__setattr__(self, "A_tilde", A)

    @property
    def M_P(self) -> int:
        return self.A_tilde.shape[0]

    @property
    def T_P(self) -> int:
        return self.A_tilde.shape[1]

    @property
    def Phi(self) -> int:
        return self.M_P - self.T_P

    @property
    def A_T(self) -> np.ndarray:
        return self.A_tilde[:self.T_P]

    @property
    def A_B(self) -> np.ndarray:
        return self.A_tilde[self.T_P:]

    @property
    def is_exact(self) -> bool:
        return self.A_tilde.dtype.kind in "iu"

    @property
    def free_panels(self) -> tuple:
        """Panels that appear in no constraint equation (their filter is unconstrained)."""
        bt = b_tilde(self)
        return tuple(int(m) for m in np.flatnonzero(~np.any(bt.matrix != 0, axis=1)))

    def with_lift(self, L: int) -> "CombiningModule":
        return CombiningModule(self.A_tilde, self.structure, self.alphas, L)

    def __eq__(self, other):
        if not isinstance(other, CombiningModule):
            return NotImplemented
        return (self.structure == other.structure and self.L == other.L
                and self.A_tilde.shape == other.A_tilde.shape
                and bool(np.all(self.A_tilde == other.A_tilde)))

    __hash__ = None


@dataclass(frozen=True)
class BTilde:
    """``M_P x Phi`` matrix whose row ``m`` multiplies panel ``m``'s channel block.

    ``top`` lists the panels forming the invertible top block and ``bottom`` the
    remaining ones; the rows of ``bottom`` panels form ``-I_Phi`` (column ``c``
    belongs to ``bottom[c]``).  With an identity top block ``top = 0..T_P-1``.
    """

    matrix: np.ndarray
    top: tuple
    bottom: tuple

    @property
    def rows(self) -> np.ndarray:
        return self.matrix

    @property
    def Phi(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class CFExpansion:
    """Continued fraction ``q0 + 1/(q1 + 1/(...))`` of ``(T_P - 1) / Phi``.

    ``quotients[0]`` is 0 when ``T_P - 1 < Phi``; all later quotients are positive.
    """

    quotients: tuple
    value: Fraction

    @property
    def n_steps(self) -> int:
        """Number of tiling steps, i.e. nonzero quotients."""
        return sum(1 for q in self.quotients if q)

    def fold(self) -> Fraction:
        acc = Fraction(self.quotients[-1])
        for q in reversed(self.quotients[:-1]):
            acc = q + 1 / acc
        return acc


def cf_expansion(T_P: int, M_P: int) -> CFExpansion:
    """Continued fraction of ``(T_P-1)/(M_P-T_P)`` via Euclid's algorithm."""
    phi = M_P - T_P
    if phi < 1 or T_P < 1:
        raise StructureDomainError(f"need Phi >= 1 and T_P >= 1, got T_P={T_P}, M_P={M_P}")
    a, b = T_P - 1, phi
    quotients = []
    while True:
        q, r = divmod(a, b)
        quotients.append(q)
        if r == 0:
            break
        a, b = b, r
    return CFExpansion(tuple(quotients), Fraction(T_P - 1, phi))


def euclid_staircase(rows: int, cols: int, flip: bool = True):
    """Tile a ``rows x cols`` zero region with identity blocks, Euclid style.

    Each step places as many copies of ``I_s`` as fit along the longer side,
    where ``s`` is the shorter remaining side; the remainder is tiled next.
    With ``flip`` the column position of every block is mirrored (the blocks
    themselves stay identities), which puts the largest blocks on the right.

    Returns ``(region, quotients)``.
    """
    region = np.zeros((rows, cols), dtype=np.int64)
    quotients = []
    r0 = c0 = 0
    rr, rc = rows, cols
    while rr > 0 and rc > 0:
        if rc > rr:
            q = rc // rr
            for k in range(q):
                _place(region, r0, c0 + k * rr, rr, cols, flip)
            c0 += q * rr
            rc -= q * rr
        else:
            q = rr // rc
            for k in range(q):
                _place(region, r0 + k * rc, c0, rc, cols, flip)
            r0 += q * rc
            rr -= q * rc
        quotients.append(q)
    return region, quotients


def _place(region, r, c, size, ncols, flip):
    if flip:
        c = ncols - c - size
    region[r:r + size, c:c + size] += np.eye(size, dtype=np.int64)


def _alpha_array(alphas, n, distinct, what):
    if alphas is None:
        return list(range(1, n + 1)) if distinct else [1] * n
    alphas = list(alphas)
    if len(alphas) != n:
        raise AlphaError(f"{what} needs {n} alphas, got {len(alphas)}")
    if any(a == 0 for a in alphas):
        raise AlphaError("alphas must be nonzero")
    if distinct and len(set(complex(a) for a in alphas)) != n:
        raise AlphaError(f"alphas must be pairwise distinct, got {alphas}")
    return alphas


def _to_array(rows_values):
    vals = np.asarray(rows_values)
    if np.iscomplexobj(vals):
        if np.all(vals.imag == 0) and np.all(vals.real == np.round(vals.real)):
            return vals.real.astype(np.int64)
        return vals.astype(complex)
    if np.all(vals == np.round(vals)):
        return vals.astype(np.int64)
    return vals.astype(float)


def build_structure(dims: SystemDims, structure, alphas: Optional[Sequence] = None) -> CombiningModule:
    """Build ``A_tilde`` (identity top block) for the requested structure.

    ``alphas`` fill the first column of ``A_B``.  For ``prop4`` and for ``general``
    with ``T_P - 1 < Phi`` there is one alpha per vertical block of ``T_P - 1`` rows
    and they must be pairwise distinct (default ``1, 2, ...``); otherwise one alpha
    per row of ``A_B`` (default all ones).
    """
    s = Structure.parse(structure)
    M_P, T_P, phi = dims.M_P, dims.T_P, dims.Phi
    if phi < 0:
        raise StructureDomainError(f"T_P={T_P} exceeds M_P={M_P}")
    A_B = np.zeros((phi, T_P), dtype=complex)
    col0 = None

    if s is Structure.IDENTITY:
        if phi != 0:
            raise StructureDomainError("identity module needs T_P == M_P")
    elif s is Structure.SUM:
        if T_P != 1:
            raise StructureDomainError("sum module needs T_P == 1")
        col0 = _alpha_array(alphas, phi, False, "sum")
    elif s is Structure.PROP3:
        q1 = dims.Q1
        if not q1:
            raise StructureDomainError(f"prop3 needs Phi >= 1 and T_P-1 >= Phi (T_P={T_P}, M_P={M_P})")
        J = dims.J
        for q in range(q1):
            A_B[:, 1 + J + q * phi:1 + J + (q + 1) * phi] = np.eye(phi)
        col0 = _alpha_array(alphas, phi, False, "prop3")
    elif s is Structure.PROP4:
        if T_P < 2 or phi < 1:
            raise StructureDomainError(f"prop4 needs T_P >= 2 and Phi >= 1 (T_P={T_P}, M_P={M_P})")
        w = T_P - 1
        blocks = _alpha_array(alphas, dims.Q2_prop4, True, "prop4")
        for r in range(phi):
            A_B[r, 1 + r % w] = 1
        col0 = [blocks[r // w] for r in range(phi)]
    elif s is Structure.PROP5:
        q1, J = dims.Q1, dims.J
        if not q1 or not J:
            raise StructureDomainError(f"prop5 needs Q1 >= 1 and J >= 1 (T_P={T_P}, M_P={M_P})")
        for r in range(phi):
            A_B[r, 1 + r % J] = 1
            for q in range(q1):
                A_B[r, 1 + J + q * phi + r] = 1
        col0 = _alpha_array(alphas, phi, False, "prop5")
    elif s is Structure.GENERAL:
        if phi > 0:
            region, _ = euclid_staircase(phi, T_P - 1)
            A_B[:, 1:] = region
            if 1 <= T_P - 1 < phi:
                w = T_P - 1
                blocks = _alpha_array(alphas, -(-phi // w), True, "general")
                col0 = [blocks[r // w] for r in range(phi)]
            else:
                col0 = _alpha_array(alphas, phi, False, "general")
    else:
        raise StructureDomainError("custom modules are produced by transformations, not built")

    if col0 is not None and phi > 0:
        A_B[:, 0] = col0
    A = _to_array(np.vstack([np.eye(T_P), A_B]))
    used = () if col0 is None else tuple(col0)
    return CombiningModule(A, s, used, dims.L)


def kron_lift(cm: CombiningModule, L: Optional[int] = None) -> np.ndarray:
    """Antenna-level module ``A_tilde (x) I_L`` as a complex ``M x T`` matrix."""
    L = cm.L if L is None else L
    return np.kron(cm.A_tilde.astype(complex), np.eye(L))


def apply_theta(cm: CombiningModule, Theta, rel_tol: float = DEFAULT_POLICY.rank_rel_tol) -> CombiningModule:
    """Right-multiply by a full-rank ``T_P x T_P`` matrix; ``b_tilde`` is unchanged."""
    Theta = np.asarray(Theta)
    if Theta.shape != (cm.T_P, cm.T_P):
        raise ValueError(f"Theta must be {cm.T_P}x{cm.T_P}, got {Theta.shape}")
    if not is_full_rank(Theta, rel_tol):
        raise SingularThetaError("Theta is rank-deficient")
    if np.array_equal(Theta, np.eye(cm.T_P)):
        return cm
    return CombiningModule(_to_array(cm.A_tilde @ Theta), Structure.CUSTOM, (), cm.L)


def _as_perm(P, n):
    P = np.asarray(P)
    if P.ndim == 2:
        if P.shape != (n, n) or not np.all((P == 0) | (P == 1)) \
                or not np.all(P.sum(0) == 1) or not np.all(P.sum(1) == 1):
            raise ValueError("P is not a permutation matrix")
        return np.argmax(P, axis=1)
    perm = P.astype(int)
    if sorted(perm.tolist()) != list(range(n)):
        raise ValueError(f"{P.tolist()} is not a permutation of 0..{n - 1}")
    return perm


def apply_permutation(cm: CombiningModule, P) -> CombiningModule:
    """Row permutation ``P @ A_tilde``.

    ``P`` is either a permutation matrix or an index array with
    ``result[i] = A_tilde[P[i]]``.
    """
    perm = _as_perm(P, cm.M_P)
    if np.array_equal(perm, np.arange(cm.M_P)):
        return cm
    A = cm.A_tilde[perm]
    if np.array_equal(A, cm.A_tilde):
        return cm
    return CombiningModule(A, Structure.CUSTOM, (), cm.L)


def _select_top_rows(A, rel_tol):
    n = A.shape[1]
    chosen = []
    for m in range(A.shape[0]):
        cand = chosen + [m]
        if numerical_rank(A[cand].astype(complex), rel_tol) == len(cand):
            chosen = cand
            if len(chosen) == n:
                return chosen
    raise RankError(f"A_tilde has rank {len(chosen)} < T_P={n}: no invertible row block")


def _unit_rows(A):
    """Rows forming ``I_{T_P}`` (first occurrence of each unit vector), or None."""
    n = A.shape[1]
    found = {}
    for m, row in enumerate(A):
        nz = np.flatnonzero(row)
        if len(nz) == 1 and row[nz[0]] == 1 and int(nz[0]) not in found:
            found[int(nz[0])] = m
    if len(found) < n:
        return None
    return [found[j] for j in range(n)]


def _rational_right_divide(B, A):
    """Exact ``B @ inv(A)`` for integer matrices, returned as a Fraction object array."""
    n = A.shape[0]
    # Solve A^T Y = B^T by Gauss-Jordan on [A^T | B^T].
    aug = [[Fraction(int(v)) for v in list(A.T[i]) + list(B.T[i])] for i in range(n)]
    width = len(aug[0])
    for col in range(n):
        piv = next((r for r in range(col, n) if aug[r][col] != 0), None)
        if piv is None:
            raise RankError("singular top block")
        aug[col], aug[piv] = aug[piv], aug[col]
        p = aug[col][col]
        aug[col] = [v / p for v in aug[col]]
        for r in range(n):
            if r != col and aug[r][col] != 0:
                f = aug[r][col]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[col])]
    Y = np.array([row[n:width] for row in aug], dtype=object)
    return Y.T


def b_tilde(cm: CombiningModule, rel_tol: float = DEFAULT_POLICY.rank_rel_tol) -> BTilde:
    """Per-panel coefficient rows ``[(A_B A_T^{-1})^T ; -I_Phi]``.

    When the top ``T_P`` rows are not the identity, rows holding the unit vectors
    are used as the top block if present (undoing a row permutation); otherwise
    the first invertible set of ``T_P`` rows in panel order.
    """
    A = cm.A_tilde
    M_P, T_P = A.shape
    if np.array_equal(A[:T_P], np.eye(T_P)):
        top = list(range(T_P))
    else:
        top = _unit_rows(A) or _select_top_rows(A, rel_tol)
    bottom = [m for m in range(M_P) if m not in set(top)]
    A_T, A_B = A[top], A[bottom]
    if np.array_equal(A_T, np.eye(T_P)):
        C = A_B
    elif cm.is_exact:
        Cq = _rational_right_divide(A_B, A_T)
        C = np.array([[complex(v) for v in row] for row in Cq]).reshape(len(bottom), T_P)
    else:
        C = np.linalg.solve(A_T.T.astype(complex), A_B.T.astype(complex)).T
    C = _to_array(C) if C.size else C.astype(np.int64) if cm.is_exact else C
    dtype = C.dtype if C.size else (np.int64 if cm.is_exact else complex)
    Bt = np.zeros((M_P, len(bottom)), dtype=dtype)
    Bt[top] = C.T
    Bt[bottom] = -np.eye(len(bottom), dtype=dtype)
    Bt.setflags(write=False)
    return BTilde(Bt, tuple(top), tuple(bottom))


def ones_count(cm: CombiningModule) -> int:
    """Nonzero entries of ``A_B`` outside its first column."""
    return int(np.count_nonzero(cm.A_B[:, 1:]))


def staircase_ones(T_P: int, M_P: int) -> int:
    """Closed-form count for the general construction: ``(T_P-1) + Phi - gcd``."""
    phi = M_P - T_P
    return (T_P - 1) + phi - math.gcd(T_P - 1, phi)
