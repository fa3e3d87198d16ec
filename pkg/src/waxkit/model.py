"""Problem dimensions, channels and the numeric conventions shared across waxkit."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DivisibilityError, RegimeError


@dataclass(frozen=True)
class NumericPolicy:
    """Tolerances used for rank decisions and residual certificates.

    rank_rel_tol
        Singular values below ``rank_rel_tol * max(rows, cols) * s_max`` count as zero.
    residual_rel_tol
        Relative residual (against ``||H||_F``) below which a decomposition is accepted.
    infeasible_rel_tol
        Relative constraint residual above which the instance is declared infeasible.
        Residuals between the two thresholds are indeterminate.
    max_retries
        Random full-rank completions attempted before giving up.
    """

    rank_rel_tol: float = 1e-10
    residual_rel_tol: float = 1e-8
    infeasible_rel_tol: float = 1e-6
    max_retries: int = 10

    def __post_init__(self):
        if min(self.rank_rel_tol, self.residual_rel_tol, self.infeasible_rel_tol) <= 0:
            raise ValueError("tolerances must be positive")
        if self.infeasible_rel_tol < self.residual_rel_tol:
            raise ValueError("infeasible_rel_tol must not be below residual_rel_tol")
        if self.max_retries < 1:
            raise ValueError("max_retries must be >= 1")


DEFAULT_POLICY = NumericPolicy()


@dataclass(frozen=True)
class SystemDims:
    """Integer problem parameters.

    ``K`` may be ``None`` for construction-only use (building a combining module
    does not depend on the user count).
    """

    M: int
    K: Optional[int]
    L: int
    T_P: int

    @property
    def M_P(self) -> int:
        return self.M // self.L

    @property
    def T(self) -> int:
        return self.L * self.T_P

    @property
    def Phi(self) -> int:
        return self.M_P - self.T_P

    @property
    def regime_ok(self) -> bool:
        if self.K is None:
            return self.M >= self.T >= self.L >= 1
        return self.M >= self.T >= self.K >= self.L >= 1

    # Q-values: None wherever the defining expression is undefined.
    @property
    def Q1(self) -> Optional[int]:
        if self.Phi < 1 or self.T_P < 1:
            return None
        return (self.T_P - 1) // self.Phi

    @property
    def J(self) -> Optional[int]:
        q1 = self.Q1
        return None if q1 is None else self.T_P - 1 - q1 * self.Phi

    @property
    def Q2_prop4(self) -> Optional[int]:
        if self.T_P < 2 or self.Phi < 1:
            return None
        return -(-self.Phi // (self.T_P - 1))

    @property
    def Pi(self) -> Optional[int]:
        q2 = self.Q2_prop4
        return None if q2 is None else self.Phi - (q2 - 1) * (self.T_P - 1)

    @property
    def Q2_prop5(self) -> Optional[int]:
        j = self.J
        if not j:
            return None
        return -(-self.Phi // j)

    def with_L(self, L: int) -> "SystemDims":
        """Same panel layout (M_P, T_P) with a different panel size."""
        return make_dims(L * self.M_P, self.K, L, self.T_P, strict=False)

    def as_dict(self) -> dict:
        return {"M": self.M, "K": self.K, "L": self.L, "T_P": self.T_P,
                "M_P": self.M_P, "T": self.T, "Phi": self.Phi}


def make_dims(M: int, K: Optional[int], L: int, T_P: int, strict: bool = True) -> SystemDims:
    """Validate and package the integer parameters.

    Raises DivisibilityError when ``L`` does not divide ``M``.  The working regime
    ``M >= T >= K >= L >= 1`` is enforced only when ``strict`` (solving needs it,
    bound queries do not).
    """
    for name, v in (("M", M), ("L", L), ("T_P", T_P)):
        if int(v) != v or v < 1:
            raise ValueError(f"{name} must be a positive integer, got {v!r}")
    if K is not None and (int(K) != K or K < 1):
        raise ValueError(f"K must be a positive integer, got {K!r}")
    if M % L:
        raise DivisibilityError(f"L={L} does not divide M={M}")
    dims = SystemDims(int(M), None if K is None else int(K), int(L), int(T_P))
    if strict and not dims.regime_ok:
        raise RegimeError(
            f"need M >= T >= K >= L >= 1, got M={dims.M}, T={dims.T}, K={dims.K}, L={dims.L}")
    return dims


def module_dims(M_P: int, T_P: int, L: int = 1) -> SystemDims:
    """Dims for building a combining module only (no user count)."""
    if T_P > M_P:
        raise RegimeError(f"T_P={T_P} exceeds M_P={M_P}")
    return make_dims(M_P * L, None, L, T_P, strict=False)


@dataclass(frozen=True)
class Channel:
    H: np.ndarray
    L: int
    N0: float = 1.0
    seed: Optional[int] = None
    blocks: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        H = np.asarray(self.H)
        if H.ndim != 2 or H.shape[0] % self.L:
            raise DivisibilityError(f"H shape {H.shape} not divisible into panels of {self.L}")
        if self.N0 <= 0:
            raise ValueError("N0 must be positive")
        H = H.astype(complex, copy=False)
        H.setflags(write=False)
        object.__setattr__(self, "H", H)
        L = self.L
        object.__setattr__(self, "blocks", tuple(H[m * L:(m + 1) * L] for m in range(H.shape[0] // L)))

    @property
    def M(self) -> int:
        return self.H.shape[0]

    @property
    def K(self) -> int:
        return self.H.shape[1]

    @property
    def M_P(self) -> int:
        return len(self.blocks)


def complex_gaussian(rng: np.random.Generator, shape) -> np.ndarray:
    """IID circularly-symmetric complex Gaussian entries with unit variance."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def random_channel(dims: SystemDims, N0: float = 1.0, seed: int = 0) -> Channel:
    """IID standard complex-Gaussian ``M x K`` channel, deterministic in ``seed``."""
    if dims.K is None:
        raise ValueError("random_channel needs dims with a user count K")
    rng = np.random.default_rng(seed)
    return Channel(complex_gaussian(rng, (dims.M, dims.K)), dims.L, N0=N0, seed=seed)


def rank_cutoff(s: np.ndarray, shape, rel_tol: float) -> float:
    if s.size == 0:
        return 0.0
    return rel_tol * max(shape) * float(s[0])


def numerical_rank(A: np.ndarray, rel_tol: float = DEFAULT_POLICY.rank_rel_tol) -> int:
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0
    s = np.linalg.svd(A, compute_uv=False)
    if s[0] == 0:
        return 0
    return int(np.sum(s > rank_cutoff(s, A.shape, rel_tol)))


def is_full_rank(A: np.ndarray, rel_tol: float = DEFAULT_POLICY.rank_rel_tol) -> bool:
    A = np.atleast_2d(A)
    return numerical_rank(A, rel_tol) == min(A.shape)
