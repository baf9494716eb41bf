"""Constraint-based learning of the local-independence graph, plus the
structural Hamming distance used to score learned graphs.

The learner starts from the complete directed graph (self-loops included,
never tested) and deletes an edge as soon as some subset of the target's
current parents renders the source locally independent of the target. It is
removal-only: conditioning sets grow level by level until no edge has enough
parents left to supply a larger subset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np

from locindep.core import (
    DimensionMismatchError,
    DirectedGraph,
    MarkedEventSequence,
    PointProcessError,
)
from locindep.litest import LITestConfig, test_local_independence


@dataclass(frozen=True)
class CAConfig:
    """Learner settings.

    max_conditioning of None means d - 2, the largest useful subset size.
    vertex_priority reorders the edge scan (and subset enumeration), which is
    only there so relabeling tests can permute the tie-breaking consistently;
    the default is label order.
    """

    test: LITestConfig = field(default_factory=LITestConfig)
    alpha: float = 0.05
    max_conditioning: int | None = None
    vertex_priority: tuple[int, ...] | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if self.max_conditioning is not None and self.max_conditioning < 0:
            raise ValueError("max_conditioning must be >= 0")


@dataclass(frozen=True)
class TraceRecord:
    source: int
    target: int
    conditioning: tuple[int, ...]
    p_value: float | None
    action: str  # "remove" | "keep" | "error"
    detail: str | None = None

    def to_dict(self) -> dict:
        return {
            "source": self.source,
            "target": self.target,
            "conditioning": list(self.conditioning),
            "p_value": self.p_value,
            "action": self.action,
            "detail": self.detail,
        }


@dataclass(frozen=True)
class DiscoveryTrace:
    """Ordered audit log of every test the learner ran."""

    records: tuple[TraceRecord, ...]
    graph: DirectedGraph

    def replay(self, d: int) -> DirectedGraph:
        """Apply the logged removals to the complete graph."""
        g = DirectedGraph.complete(d)
        for rec in self.records:
            if rec.action == "remove":
                g = g.without_edge(rec.source, rec.target)
        return g

    def to_dict(self) -> dict:
        return {
            "records": [rec.to_dict() for rec in self.records],
            "graph": {"d": self.graph.d, "edges": self.graph.edge_list()},
        }


def learn_graph_ca(
    seq: MarkedEventSequence,
    config: CAConfig | None = None,
) -> tuple[DirectedGraph, DiscoveryTrace]:
    """Learn the local-independence graph by constraint-based edge deletion.

    A failed fit keeps the edge (conservative) and logs a warning. All tests
    on one sequence share a feature-stream cache, which is what keeps the
    sweep affordable; the subset scheme itself never repeats an effective
    hypothesis, so no result cache is needed.
    """
    config = config or CAConfig()
    d = seq.d
    if d < 2:
        raise ValueError("need at least two marks to learn a graph")
    max_cond = config.max_conditioning
    if max_cond is None:
        max_cond = max(d - 2, 0)
    priority = config.vertex_priority
    if priority is None:
        priority = tuple(range(d))
    if sorted(priority) != list(range(d)):
        raise ValueError(f"vertex_priority must be a permutation of 0..{d - 1}")
    rank = {v: i for i, v in enumerate(priority)}

    builder = config.test.make_builder(seq)
    records: list[TraceRecord] = []
    graph = DirectedGraph.complete(d)

    def action_of(p: float | None) -> str:
        if p is None:
            return "error"
        return "remove" if p >= config.alpha else "keep"

    def run_test(j: int, k: int, C: tuple[int, ...]) -> float | None:
        try:
            res = test_local_independence(seq, j, k, C, config.test, builder=builder)
            p: float | None = res.p_value
            detail = res.flag
        except (PointProcessError, np.linalg.LinAlgError) as exc:
            warnings.warn(
                f"test {j} -> {k} | {C} failed ({exc}); keeping the edge",
                stacklevel=3,
            )
            p = None
            detail = str(exc)
        records.append(TraceRecord(j, k, C, p, action_of(p), detail=detail))
        return p

    level = 0
    while level <= max_cond:
        scan = sorted(
            ((j, k) for j, k in graph.edges if j != k),
            key=lambda e: (rank[e[0]], rank[e[1]]),
        )
        for j, k in scan:
            if not graph.has_edge(j, k):
                continue
            pool = sorted(
                (v for v in graph.parents(k) if v not in (j, k)),
                key=rank.__getitem__,
            )
            if len(pool) < level:
                continue
            for C in combinations(pool, level):
                p = run_test(j, k, tuple(C))
                if p is not None and p >= config.alpha:
                    graph = graph.without_edge(j, k)
                    break
        deeper = any(
            len([v for v in graph.parents(k) if v not in (j, k)]) > level
            for j, k in graph.edges
            if j != k
        )
        if not deeper:
            break
        level += 1

    trace = DiscoveryTrace(records=tuple(records), graph=graph)
    assert trace.replay(d).edges == graph.edges
    return graph, trace


def shd(g1: DirectedGraph, g2: DirectedGraph) -> int:
    """Structural Hamming distance, self-loops excluded.

    Each unordered pair contributes the number of directed mismatches, except
    that a pure reversal (one graph has only j->k, the other only k->j)
    counts once.
    """
    if g1.d != g2.d:
        raise DimensionMismatchError(f"graphs have d = {g1.d} and d = {g2.d}")
    total = 0
    for a in range(g1.d):
        for b in range(a + 1, g1.d):
            s1 = (g1.has_edge(a, b), g1.has_edge(b, a))
            s2 = (g2.has_edge(a, b), g2.has_edge(b, a))
            mism = (s1[0] != s2[0]) + (s1[1] != s2[1])
            if mism == 2 and s1 in ((True, False), (False, True)) and s2 == s1[::-1]:
                total += 1
            else:
                total += mism
    return total
