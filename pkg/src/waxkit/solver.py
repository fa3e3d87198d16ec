"""WAX decomposition ``H = W A X`` with block-diagonal ``W``.

Two solvers are provided:

* ``solve_equivalent`` works on the inverse filters ``G_m = W_m^{-1}`` and the
  constraint ``sum_m G_m (b_m^T (x) H_m) = 0``, which never involves ``X``.
* ``solve_generic`` vectorizes ``A X = G H`` directly for an arbitrary ``A``.

Both pin one block, draw a random point of the solution space and reject it if any
block is rank-deficient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .combiner import BTilde, CombiningModule, b_tilde, kron_lift
from .errors import (DimError, IndeterminateError, InfeasibleError, RankError,
                     SingularityError)
from .model import (DEFAULT_POLICY, Channel, NumericPolicy, SystemDims, complex_gaussian,
                    is_full_rank, numerical_rank, random_channel, rank_cutoff)


@dataclass(frozen=True)
class WaxFactors:
    W_blocks: tuple
    X: np.ndarray
    residual: float
    block_ranks: tuple
    fixed_block: Optional[int]
    feasible: bool = True
    constraint_residual: float = 0.0

    @property
    def L(self) -> int:
        return self.W_blocks[0].shape[0]

    def W(self) -> np.ndarray:
        return block_diag(self.W_blocks)

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "residual": self.residual,
                "block_ranks": list(self.block_ranks), "fixed_block": self.fixed_block}


def block_diag(blocks) -> np.ndarray:
    n = sum(b.shape[0] for b in blocks)
    out = np.zeros((n, n), dtype=complex)
    i = 0
    for b in blocks:
        k = b.shape[0]
        out[i:i + k, i:i + k] = b
        i += k
    return out


def _classify(res: float, policy: NumericPolicy, what: str, group=None):
    if res > policy.infeasible_rel_tol:
        raise InfeasibleError(f"{what}: relative residual {res:.3e} exceeds "
                              f"{policy.infeasible_rel_tol:g}", residual=res, group=group)
    if res > policy.residual_rel_tol:
        raise IndeterminateError(f"{what}: relative residual {res:.3e} is between the "
                                 f"success and infeasibility thresholds", residual=res)


# --------------------------------------------------------------------------- face split

@dataclass(frozen=True)
class FaceSplitSystem:
    """Row-wise Kronecker stack: block ``m`` (rows ``mL..mL+L-1``) is ``b_m^T (x) H_m``."""

    Mfs: np.ndarray
    L: int
    K: int
    b: BTilde

    def block(self, m: int) -> np.ndarray:
        return self.Mfs[m * self.L:(m + 1) * self.L]


def face_split(bt: BTilde, H: Channel) -> FaceSplitSystem:
    B = np.asarray(bt.matrix)
    if B.shape[0] != H.M_P:
        raise DimError(f"B_tilde has {B.shape[0]} rows but H has {H.M_P} panels")
    L, K = H.L, H.K
    Mfs = np.zeros((H.M, K * B.shape[1]), dtype=complex)
    for m, Hm in enumerate(H.blocks):
        Mfs[m * L:(m + 1) * L] = np.kron(B[m][None, :].astype(complex), Hm)
    Mfs.setflags(write=False)
    return FaceSplitSystem(Mfs, L, K, bt)


def reference_panel(bt: BTilde) -> Optional[int]:
    """Constrained panel appearing in the most equations (lowest index on ties)."""
    counts = np.count_nonzero(np.asarray(bt.matrix), axis=1)
    if counts.size == 0 or counts.max() == 0:
        return None
    return int(np.argmax(counts))


def solve_blocks(F: Sequence[np.ndarray], ref: int, unknown: Sequence[int], L: int,
                 policy: NumericPolicy, rng: np.random.Generator,
                 best_effort: bool = False, group=None):
    """Solve ``sum_m G_m F_m = 0`` with ``G_ref = I`` for the ``unknown`` blocks.

    ``F`` maps panel index to its ``L x n`` face-split block.  Returns
    ``(G, constraint_residual)`` where ``G`` maps each unknown panel to an
    ``L x L`` block of full rank.
    """
    rhs = -F[ref]
    if not unknown:
        res = 1.0 if np.any(rhs) else 0.0
        if not best_effort:
            _classify(res, policy, "constraint system", group)
        return {}, res
    Fs = np.vstack([F[m] for m in unknown])
    U, s, Vh = np.linalg.svd(Fs, full_matrices=True)
    r = int(np.sum(s > rank_cutoff(s, Fs.shape, policy.rank_rel_tol))) if s.size and s[0] > 0 else 0
    # minimum-norm least squares through the pseudo-inverse
    G0 = ((rhs @ Vh[:r].conj().T) / s[:r]) @ U[:, :r].conj().T
    scale = np.linalg.norm(rhs)
    res = float(np.linalg.norm(G0 @ Fs - rhs) / scale) if scale > 0 else 0.0
    if not best_effort:
        _classify(res, policy, "constraint system", group)
    left_null = U[:, r:].conj().T
    n_unk = len(unknown)
    for _ in range(policy.max_retries):
        G = G0
        if left_null.shape[0]:
            G = G0 + complex_gaussian(rng, (L, left_null.shape[0])) @ left_null
        blocks = {m: G[:, i * L:(i + 1) * L] for i, m in enumerate(unknown)}
        if all(is_full_rank(b, policy.rank_rel_tol) for b in blocks.values()):
            return blocks, res
        if not left_null.shape[0]:
            break
    ranks = [numerical_rank(G[:, i * L:(i + 1) * L], policy.rank_rel_tol) for i in range(n_unk)]
    raise RankError(f"no full-rank completion after {policy.max_retries} draws "
                    f"(block ranks {ranks}, L={L})")


def solve_equivalent(cm: CombiningModule, H: Channel, policy: NumericPolicy = DEFAULT_POLICY,
                     seed: int = 0, best_effort: bool = False) -> WaxFactors:
    """Decompose ``H`` for the lifted module ``cm`` via the ``G_m`` formulation.

    The module is lifted to the channel's panel size.  With ``best_effort`` an inconsistent constraint system is not an error: the
    least-squares blocks are used anyway and ``feasible`` is set to False.
    """
    if H.M_P != cm.M_P:
        raise DimError(f"channel has {H.M_P} panels, module expects {cm.M_P}")
    if H.L != cm.L:
        cm = cm.with_lift(H.L)
    L = cm.L
    rng = np.random.default_rng(seed)
    bt = b_tilde(cm, policy.rank_rel_tol)
    fs = face_split(bt, H)
    constrained = np.any(np.asarray(bt.matrix) != 0, axis=1)
    ref = reference_panel(bt)
    G = {m: np.eye(L, dtype=complex) for m in range(cm.M_P)}
    cres = 0.0
    if ref is not None:
        unknown = [m for m in range(cm.M_P) if constrained[m] and m != ref]
        F = {m: fs.block(m) for m in range(cm.M_P)}
        solved, cres = solve_blocks(F, ref, unknown, L, policy, rng, best_effort)
        G.update(solved)
    W = tuple(np.linalg.inv(G[m]) for m in range(cm.M_P))
    X = recover_X(cm, H, W, policy, bt)
    res = decomposition_residual(cm, H, W, X)
    feasible = cres <= policy.residual_rel_tol
    if not best_effort:
        _classify(res, policy, "decomposition")
    ranks = tuple(numerical_rank(Wm, policy.rank_rel_tol) for Wm in W)
    return WaxFactors(W, X, res, ranks, ref, feasible and res <= policy.residual_rel_tol, cres)


def recover_X(cm: CombiningModule, H: Channel, W_blocks, policy: NumericPolicy = DEFAULT_POLICY,
              bt: Optional[BTilde] = None) -> np.ndarray:
    """``X = (A_T^{-1} (x) I_L) [W_t^{-1} H_t]_t`` over the top panels."""
    bt = b_tilde(cm, policy.rank_rel_tol) if bt is None else bt
    L = cm.L
    parts = []
    for t in bt.top:
        Wt = W_blocks[t]
        if not is_full_rank(Wt, policy.rank_rel_tol):
            raise RankError(f"W block {t} is rank-deficient")
        parts.append(np.linalg.solve(Wt, H.blocks[t]))
    Y = np.vstack(parts)
    A_T = cm.A_tilde[list(bt.top)]
    if np.array_equal(A_T, np.eye(cm.T_P)):
        return Y
    return np.kron(np.linalg.inv(A_T.astype(complex)), np.eye(L)) @ Y


def decomposition_residual(cm: CombiningModule, H: Channel, W_blocks, X) -> float:
    """``||H - W (A (x) I_L) X||_F / ||H||_F`` evaluated panel by panel."""
    L = cm.L
    Xb = [X[t * L:(t + 1) * L] for t in range(cm.T_P)]
    A = cm.A_tilde
    err = 0.0
    for m, Hm in enumerate(H.blocks):
        AX = np.zeros_like(Hm)
        for t in np.flatnonzero(A[m]):
            AX += A[m, t] * Xb[t]
        R = Hm - W_blocks[m] @ AX
        err += float(np.linalg.norm(R) ** 2)
    nh = float(np.linalg.norm(H.H))
    return math.sqrt(err) / nh if nh > 0 else math.sqrt(err)


# --------------------------------------------------------------------------- vectorized

@dataclass(frozen=True)
class VectorizedSystem:
    """``[I_K (x) A, -(H^T (x) I_M) I_W]`` acting on ``[vec X; vec G_1; ...; vec G_MP]``.

    ``vec`` is column-major; ``I_W`` places the ``L x L`` diagonal blocks into ``vec(G)``.
    """

    Mvec: np.ndarray
    I_W: np.ndarray
    L: int
    T: int
    K: int

    @property
    def n_x(self) -> int:
        return self.K * self.T


def placement_map(M: int, L: int) -> np.ndarray:
    """0/1 ``M^2 x ML`` matrix with ``vec(blockdiag(G_m)) = I_W [vec G_1; ...]``."""
    M_P = M // L
    I_W = np.zeros((M * M, M * L))
    for m in range(M_P):
        for j in range(L):
            for i in range(L):
                I_W[(m * L + j) * M + m * L + i, m * L * L + j * L + i] = 1.0
    return I_W


def build_vectorized(A, H: Channel) -> VectorizedSystem:
    A = np.asarray(A, dtype=complex)
    M, K, L = H.M, H.K, H.L
    if A.ndim != 2 or A.shape[0] != M:
        raise DimError(f"A has shape {A.shape}, expected {M} rows")
    T = A.shape[1]
    I_W = placement_map(M, L)
    left = np.kron(np.eye(K), A)
    right = -np.kron(H.H.T, np.eye(M)) @ I_W
    Mvec = np.hstack([left, right])
    Mvec.setflags(write=False)
    return VectorizedSystem(Mvec, I_W, L, T, K)


def null_space(Mx: np.ndarray, rel_tol: float) -> np.ndarray:
    """Orthonormal basis (columns) of the right null space."""
    _, s, Vh = np.linalg.svd(Mx, full_matrices=True)
    r = int(np.sum(s > rank_cutoff(s, Mx.shape, rel_tol))) if s.size and s[0] > 0 else 0
    return Vh[r:].conj().T


def solve_generic(A, H: Channel, policy: NumericPolicy = DEFAULT_POLICY, seed: int = 0) -> WaxFactors:
    """Decompose ``H`` for an arbitrary ``M x T`` module ``A`` via the vectorized system."""
    A = np.asarray(A, dtype=complex)
    vs = build_vectorized(A, H)
    L, M = H.L, H.M
    M_P = H.M_P
    rng = np.random.default_rng(seed)
    N = null_space(vs.Mvec, policy.rank_rel_tol)
    Ng = N[vs.n_x:]
    # directions touching only X carry no filter and are discarded
    if Ng.shape[1]:
        U, s, _ = np.linalg.svd(Ng, full_matrices=False)
        r = int(np.sum(s > rank_cutoff(s, Ng.shape, policy.rank_rel_tol))) if s[0] > 0 else 0
        basis = U[:, :r]
    else:
        basis = Ng
    if basis.shape[1] == 0:
        raise InfeasibleError("vectorized system has no null space in the filter coordinates",
                              residual=None)
    for _ in range(policy.max_retries):
        g = basis @ complex_gaussian(rng, basis.shape[1])
        G = [g[m * L * L:(m + 1) * L * L].reshape(L, L, order="F") for m in range(M_P)]
        if not all(is_full_rank(b, policy.rank_rel_tol) for b in G):
            continue
        GH = block_diag(G) @ H.H
        X = np.linalg.lstsq(A, GH, rcond=None)[0]
        W = tuple(np.linalg.inv(b) for b in G)
        R = H.H - block_diag(W) @ A @ X
        res = float(np.linalg.norm(R) / np.linalg.norm(H.H))
        if res > policy.residual_rel_tol:
            continue
        ranks = tuple(numerical_rank(b, policy.rank_rel_tol) for b in W)
        return WaxFactors(W, X, res, ranks, None, True, 0.0)
    raise InfeasibleError(f"no full-rank filter in {policy.max_retries} null-space draws "
                          f"(usable null dimension {basis.shape[1]})")


# --------------------------------------------------------------------------- validity

@dataclass(frozen=True)
class SeedResult:
    seed: int
    status: str  # "ok", "infeasible", "rank", "indeterminate"
    residual: Optional[float]
    min_block_sv: Optional[float] = None
    channel_seed: Optional[int] = None


@dataclass(frozen=True)
class Verdict:
    valid: bool
    per_seed: tuple = field(default_factory=tuple)

    def __bool__(self):
        return self.valid

    def to_dict(self) -> dict:
        return {"valid": self.valid,
                "per_seed": [dict(seed=r.seed, status=r.status, residual=r.residual,
                                  min_block_sv=r.min_block_sv, channel_seed=r.channel_seed)
                             for r in self.per_seed]}


_RESEED_STRIDE = 1_000_003


def validate_A(A, dims: SystemDims, seeds: Sequence[int] = (0, 1, 2, 3, 4),
               policy: NumericPolicy = DEFAULT_POLICY, N0: float = 1.0,
               reseeds: int = 3) -> Verdict:
    """Monte-Carlo validity: every seed's random channel must decompose.

    ``A`` is a CombiningModule (solved with ``solve_equivalent`` at ``dims.L``) or a
    plain ``M x T`` matrix (solved with ``solve_generic``).  Indeterminate residuals
    trigger a fresh channel, up to ``reseeds`` times.
    """
    if len(seeds) < 3:
        raise ValueError("validate_A needs at least 3 seeds")
    if isinstance(A, CombiningModule):
        cm = A if A.L == dims.L else A.with_lift(dims.L)
        solve = lambda H, s: solve_equivalent(cm, H, policy, seed=s)
    else:
        mat = np.asarray(A)
        solve = lambda H, s: solve_generic(mat, H, policy, seed=s)
    results = []
    for s in seeds:
        status, res, msv, cseed = "indeterminate", None, None, s
        for k in range(reseeds + 1):
            cseed = s + k * _RESEED_STRIDE
            H = random_channel(dims, N0=N0, seed=cseed)
            try:
                f = solve(H, s)
            except IndeterminateError as e:
                status, res = "indeterminate", e.residual
                continue
            except InfeasibleError as e:
                status, res = "infeasible", e.residual
            except RankError:
                status, res = "rank", None
            else:
                status, res = "ok", f.residual
                msv = min(float(np.linalg.svd(w, compute_uv=False)[-1]) for w in f.W_blocks)
            break
        results.append(SeedResult(int(s), status, res, msv, int(cseed)))
    return Verdict(all(r.status == "ok" for r in results), tuple(results))


# --------------------------------------------------------------------------- information

def _logdet_i_plus(Z: np.ndarray, N0: float) -> float:
    """``log2 det(I + Z^H Z / N0)`` via Cholesky."""
    K = Z.shape[1]
    C = np.linalg.cholesky(np.eye(K) + (Z.conj().T @ Z) / N0)
    return float(2.0 * np.sum(np.log2(np.abs(np.diag(C)))))


def mutual_info(H, N0: float = 1.0, processing=None, rel_tol: float = DEFAULT_POLICY.rank_rel_tol) -> float:
    """Gaussian mutual information in bits, raw or after ``z = (W A)^H y``.

    ``processing`` is ``(W_blocks, A)`` with ``A`` the antenna-level module.  The
    processed value whitens the filtered noise, i.e. it projects ``H`` onto the
    column space of ``W A``.
    """
    if N0 <= 0:
        raise ValueError("N0 must be positive")
    Hm = H.H if isinstance(H, Channel) else np.asarray(H, dtype=complex)
    if processing is None:
        return _logdet_i_plus(Hm, N0)
    W_blocks, A = processing
    V = block_diag(W_blocks) @ np.asarray(A, dtype=complex)
    Q, R = np.linalg.qr(V)
    if numerical_rank(R, rel_tol) < V.shape[1]:
        raise SingularityError("W A is column-rank deficient; whitening Gram is singular")
    return _logdet_i_plus(Q.conj().T @ Hm, N0)


def mi_gap(H: Channel, cm: CombiningModule, factors: WaxFactors) -> tuple:
    """(raw MI, processed MI) for a solved instance."""
    raw = mutual_info(H, H.N0)
    proc = mutual_info(H, H.N0, (factors.W_blocks, kron_lift(cm, factors.L)))
    return raw, proc
