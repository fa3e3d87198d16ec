"""Round-synchronous simulation of decentralized filter training over a panel tree.

Roles: one reference panel (filter pinned to I), processing panels that each solve
one independent group of equations, passive panels that ship their channel to their
processing panel and receive a filter back, and free panels that appear in no
equation and keep W = I without talking to anyone.  Panel ids are 0-based.
"""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .combiner import CombiningModule, Structure, b_tilde
from .errors import InfeasibleError, ProtocolViolation, StructureDomainError
from .model import DEFAULT_POLICY, Channel, NumericPolicy, numerical_rank
from .solver import (WaxFactors, _classify, decomposition_residual, recover_X,
                     reference_panel, solve_blocks)

REFERENCE_CSI = "ReferenceCSI"
LOCAL_CSI = "LocalCSI"
FILTER = "Filter"

_SUPPORTED = (Structure.PROP3, Structure.PROP4, Structure.PROP5, Structure.SUM, Structure.IDENTITY)


@dataclass(frozen=True)
class Group:
    processing: int
    passive: tuple
    equations: tuple  # columns of B_tilde solved by this group

    @property
    def panels(self) -> tuple:
        return (self.processing,) + self.passive


@dataclass(frozen=True)
class TreeTopology:
    M_P: int
    reference: Optional[int]
    groups: tuple
    free_panels: tuple

    @property
    def N1(self) -> int:
        return len(self.groups)

    @property
    def N2(self) -> int:
        return max((len(g.passive) for g in self.groups), default=0)

    def role(self, m: int) -> str:
        if m == self.reference:
            return "reference"
        if m in self.free_panels:
            return "free"
        for g in self.groups:
            if m == g.processing:
                return "processing"
            if m in g.passive:
                return "passive"
        raise KeyError(m)

    def to_dict(self) -> dict:
        return {"reference": self.reference, "N1": self.N1, "N2": self.N2,
                "free_panels": list(self.free_panels),
                "groups": [{"processing": g.processing, "passive": list(g.passive),
                            "equations": list(g.equations)} for g in self.groups]}


def build_topology(cm: CombiningModule, dims=None) -> TreeTopology:
    """Split the constraint equations into independent groups.

    Two equations belong to the same group when they share a panel other than the
    reference.  The lowest-index panel of each group processes it.
    """
    if cm.structure not in _SUPPORTED:
        raise StructureDomainError(f"no tree scheme for structure {cm.structure.value!r}")
    B = np.asarray(b_tilde(cm).matrix)
    M_P, phi = B.shape
    ref = reference_panel(b_tilde(cm))
    constrained = np.any(B != 0, axis=1)
    free = tuple(int(m) for m in np.flatnonzero(~constrained))
    if ref is None:
        return TreeTopology(M_P, None, (), free)

    # union-find over equations, linked through shared non-reference panels
    parent = list(range(phi))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    owner = {}
    for c in range(phi):
        for m in np.flatnonzero(B[:, c]):
            m = int(m)
            if m == ref:
                continue
            if m in owner:
                parent[find(c)] = find(owner[m])
            else:
                owner[m] = c
    eqs = defaultdict(list)
    for c in range(phi):
        eqs[find(c)].append(c)
    groups = []
    for cols in eqs.values():
        panels = sorted({int(m) for c in cols for m in np.flatnonzero(B[:, c]) if m != ref})
        groups.append(Group(panels[0], tuple(panels[1:]), tuple(sorted(cols))))
    groups.sort(key=lambda g: g.processing)
    return TreeTopology(M_P, ref, tuple(groups), free)


@dataclass(frozen=True, order=True)
class Message:
    phase: int
    src: int
    dst: int
    kind: str
    entries: int
    block: Optional[int] = None  # panel whose channel block is carried (CSI only)


@dataclass(frozen=True)
class MessageLog:
    messages: tuple
    L: int
    K: int
    phases: tuple = (1, 2, 3)

    def of_kind(self, kind: str) -> list:
        return [m for m in self.messages if m.kind == kind]

    def csi_received(self) -> dict:
        held = defaultdict(set)
        for m in self.messages:
            if m.kind in (REFERENCE_CSI, LOCAL_CSI):
                held[m.dst].add(m.block)
        return dict(held)


def protocol_messages(top: TreeTopology, L: int, K: int) -> MessageLog:
    msgs = []
    for g in top.groups:
        msgs.append(Message(1, top.reference, g.processing, REFERENCE_CSI, L * K, top.reference))
        for p in g.passive:
            msgs.append(Message(1, p, g.processing, LOCAL_CSI, L * K, p))
        for p in g.passive:
            msgs.append(Message(3, g.processing, p, FILTER, L * L))
    return MessageLog(tuple(sorted(msgs)), L, K)


def check_log(log: MessageLog, top: TreeTopology) -> None:
    """Raise ProtocolViolation unless ``log`` is a complete, CSI-local run of ``top``."""
    held = log.csi_received()
    limit = top.N2 + 1
    for dst, blocks in held.items():
        if len(blocks) > limit:
            raise ProtocolViolation(f"panel {dst} received {len(blocks)} channel blocks (> {limit})")
    for m in log.messages:
        if m.kind in (REFERENCE_CSI, LOCAL_CSI) and m.block != m.src:
            raise ProtocolViolation(f"panel {m.src} forwarded the channel of panel {m.block}")
        if m.src == top.reference and m.kind != REFERENCE_CSI:
            raise ProtocolViolation(f"reference panel sent a {m.kind} message")
        if m.kind == REFERENCE_CSI and m.src != top.reference:
            raise ProtocolViolation(f"panel {m.src} is not the reference")
        if m.entries != (log.L * log.L if m.kind == FILTER else log.L * log.K):
            raise ProtocolViolation(f"message {m} has the wrong payload size")
    filters = defaultdict(set)
    for m in log.of_kind(FILTER):
        filters[m.dst].add(m.src)
    for g in top.groups:
        need = {top.reference, *g.passive}
        if held.get(g.processing, set()) != need:
            raise ProtocolViolation(f"processing panel {g.processing} lacks CSI from "
                                    f"{sorted(need - held.get(g.processing, set()))}")
        for p in g.passive:
            if filters.get(p) != {g.processing}:
                raise ProtocolViolation(f"passive panel {p} did not get its filter")
    for p in top.free_panels:
        if p in held or p in filters or any(m.src == p for m in log.messages):
            raise ProtocolViolation(f"free panel {p} took part in the protocol")


def run_training(top: TreeTopology, cm: CombiningModule, H: Channel,
                 policy: NumericPolicy = DEFAULT_POLICY, seed: int = 0):
    """Solve every group at its processing panel; returns ``(WaxFactors, MessageLog)``.

    Group ``i`` draws its null-space completion from ``default_rng([seed, i])``.
    """
    if top.M_P != cm.M_P or top.M_P != H.M_P:
        raise ValueError("topology, module and channel disagree on the panel count")
    if H.L != cm.L:
        cm = cm.with_lift(H.L)
    L = H.L
    B = np.asarray(b_tilde(cm, policy.rank_rel_tol).matrix)
    G = {m: np.eye(L, dtype=complex) for m in range(cm.M_P)}
    worst = 0.0
    for gi, g in enumerate(top.groups):
        cols = list(g.equations)
        # what the processing panel can build from the CSI it holds
        F = {m: np.kron(B[m, cols][None, :].astype(complex), H.blocks[m])
             for m in (top.reference,) + g.panels}
        rng = np.random.default_rng([seed, gi])
        try:
            solved, res = solve_blocks(F, top.reference, list(g.panels), L, policy, rng, group=gi)
        except InfeasibleError as e:
            raise InfeasibleError(f"group {gi} (processing panel {g.processing}): {e}",
                                  residual=e.residual, group=gi) from None
        G.update(solved)
        worst = max(worst, res)
    W = tuple(np.linalg.inv(G[m]) for m in range(cm.M_P))
    X = recover_X(cm, H, W, policy)
    resid = decomposition_residual(cm, H, W, X)
    _classify(resid, policy, "decomposition")
    ranks = tuple(numerical_rank(w, policy.rank_rel_tol) for w in W)
    log = protocol_messages(top, L, H.K)
    check_log(log, top)
    return WaxFactors(W, X, resid, ranks, top.reference, True, worst), log


def accounting(log: MessageLog, dims=None) -> dict:
    """Scalars moved per message kind and the largest CSI footprint at any panel."""
    totals = {REFERENCE_CSI: 0, LOCAL_CSI: 0, FILTER: 0}
    for m in log.messages:
        totals[m.kind] += m.entries
    held = log.csi_received()
    peak_blocks = max((len(b) for b in held.values()), default=0)
    out = {"messages": len(log.messages), "scalars": dict(totals),
           "total_scalars": sum(totals.values()),
           "peak_csi_blocks": peak_blocks, "peak_csi_scalars": peak_blocks * log.L * log.K}
    if dims is not None:
        out["centralized_csi_scalars"] = dims.M * log.K
    return out
