"""Mixed graphs with per-edge costs, incidence matrices and prior builders."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

ORIENTED = "oriented"
AS_WRITTEN = "as-written"
CONVENTIONS = (ORIENTED, AS_WRITTEN)

DEFAULT_SAME_COST = 0.01
DEFAULT_DIFF_COST = 0.02


class GraphError(ValueError):
    """Raised when a graph or node distribution violates a structural requirement."""


@dataclass(frozen=True)
class Edge:
    u: int
    v: int
    cost: float = 1.0
    directed: bool = False

    @property
    def tail(self) -> int:
        # directed edges keep their orientation; undirected ones point low -> high id
        return self.u if self.directed else min(self.u, self.v)

    @property
    def head(self) -> int:
        return self.v if self.directed else max(self.u, self.v)


@dataclass(frozen=True)
class Graph:
    """Immutable connected mixed graph on nodes ``0..n-1``.

    ``labels`` is either ``None`` or a tuple with one entry per node, where an
    entry may itself be ``None`` for an unlabeled node.
    """

    n: int
    edges: tuple[Edge, ...]
    labels: tuple | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "edges", tuple(self.edges))
        if self.labels is not None:
            object.__setattr__(self, "labels", tuple(self.labels))
        validate(self)

    @classmethod
    def from_edges(
        cls,
        n: int,
        edges: Iterable[tuple],
        labels: Sequence | None = None,
    ) -> "Graph":
        """Build from ``(u, v)``, ``(u, v, cost)`` or ``(u, v, cost, directed)`` tuples."""
        out = []
        for item in edges:
            if isinstance(item, Edge):
                out.append(item)
                continue
            u, v, *rest = item
            cost = float(rest[0]) if len(rest) > 0 else 1.0
            directed = bool(rest[1]) if len(rest) > 1 else False
            out.append(Edge(int(u), int(v), cost, directed))
        return cls(n, tuple(out), None if labels is None else tuple(labels))

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def costs(self) -> np.ndarray:
        return np.array([e.cost for e in self.edges], dtype=float)

    @cached_property
    def directed_mask(self) -> np.ndarray:
        return np.array([e.directed for e in self.edges], dtype=bool)

    @cached_property
    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=float)
        for e in self.edges:
            deg[e.u] += 1
            deg[e.v] += 1
        return deg

    @cached_property
    def neighbors(self) -> tuple[tuple[int, ...], ...]:
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for e in self.edges:
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
        return tuple(tuple(sorted(a)) for a in adj)

    @property
    def has_directed(self) -> bool:
        return bool(self.directed_mask.any())

    def incidence(self, convention: str = ORIENTED) -> np.ndarray:
        """Dense incidence matrix; see :func:`build_incidence`."""
        return _incidence_cache(self, convention)

    def slab_bounds(self, convention: str = ORIENTED) -> tuple[np.ndarray, np.ndarray]:
        """Lower/upper bounds on ``F t`` describing the dual-feasible set.

        Directed edges only carry flow along their orientation, so their lower
        bound is ``-inf``.
        """
        upper = self.costs.copy()
        lower = -self.costs.copy()
        lower[self.directed_mask] = -np.inf
        return lower, upper

    def with_costs(self, costs: Sequence[float]) -> "Graph":
        if len(costs) != self.m:
            raise GraphError(f"expected {self.m} costs, got {len(costs)}")
        edges = tuple(
            Edge(e.u, e.v, float(c), e.directed) for e, c in zip(self.edges, costs)
        )
        return Graph(self.n, edges, self.labels)

    def induced_subgraph(self, nodes: Iterable[int]) -> tuple[list[int], list[Edge]]:
        """Kept node ids (sorted) and the edges with both endpoints kept.

        The result is returned as plain data since an induced subgraph need
        not be connected.
        """
        keep = sorted(set(int(v) for v in nodes))
        ks = set(keep)
        return keep, [e for e in self.edges if e.u in ks and e.v in ks]


def validate(graph: Graph) -> None:
    if graph.n < 1:
        raise GraphError("graph must have at least one node")
    for i, e in enumerate(graph.edges):
        if not (0 <= e.u < graph.n and 0 <= e.v < graph.n):
            raise GraphError(f"edge {i} ({e.u}, {e.v}) has an endpoint out of range")
        if e.u == e.v:
            raise GraphError(f"edge {i} is a self-loop on node {e.u}")
        if not np.isfinite(e.cost) or e.cost <= 0:
            raise GraphError(f"edge {i} ({e.u}, {e.v}) has non-positive cost {e.cost}")
    if graph.labels is not None and len(graph.labels) != graph.n:
        raise GraphError(f"expected {graph.n} labels, got {len(graph.labels)}")
    comps = components(graph.n, [(e.u, e.v) for e in graph.edges])
    if len(comps) > 1:
        desc = "; ".join(
            "{" + ", ".join(map(str, c[:6])) + (", ..." if len(c) > 6 else "") + "}"
            for c in comps
        )
        raise GraphError(f"graph skeleton is disconnected: {len(comps)} components {desc}")


def components(n: int, pairs: Sequence[tuple[int, int]]) -> list[list[int]]:
    """Connected components of the undirected skeleton, each sorted, ordered by min id."""
    if n == 0:
        return []
    if pairs:
        rows, cols = zip(*pairs)
    else:
        rows, cols = (), ()
    adj = sparse.coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    _, lab = connected_components(adj, directed=False)
    groups: dict[int, list[int]] = {}
    for v, c in enumerate(lab):
        groups.setdefault(int(c), []).append(v)
    return sorted(groups.values(), key=lambda c: c[0])


def _incidence_cache(graph: Graph, convention: str) -> np.ndarray:
    cache = graph.__dict__.setdefault("_incidence", {})
    if convention not in cache:
        mat = build_incidence(graph, convention)
        mat.flags.writeable = False
        cache[convention] = mat
    return cache[convention]


def build_incidence(graph: Graph, convention: str = ORIENTED) -> np.ndarray:
    """Edge-by-node incidence matrix.

    ``oriented``: row ``e`` has -1 at the tail and +1 at the head, with
    undirected edges oriented from the lower to the higher node id.
    ``as-written``: undirected rows have +1 at both endpoints. Directed rows
    are signed in both conventions.
    """
    if convention not in CONVENTIONS:
        raise GraphError(f"unknown convention {convention!r}")
    F = np.zeros((graph.m, graph.n))
    for i, e in enumerate(graph.edges):
        if e.directed or convention == ORIENTED:
            F[i, e.tail] = -1.0
            F[i, e.head] = 1.0
        else:
            F[i, e.u] = 1.0
            F[i, e.v] = 1.0
    return F


def stationary_prior(graph: Graph) -> np.ndarray:
    """Degree-proportional prior ``deg(v) / sum(deg)``."""
    deg = graph.degrees
    isolated = np.flatnonzero(deg == 0)
    if isolated.size:
        raise GraphError(f"isolated nodes have no stationary mass: {isolated.tolist()}")
    return deg / deg.sum()


def label_costs(
    graph: Graph,
    same_cost: float = DEFAULT_SAME_COST,
    diff_cost: float = DEFAULT_DIFF_COST,
) -> Graph:
    """Assign ``same_cost`` to edges joining equal labels and ``diff_cost`` otherwise."""
    if same_cost <= 0 or diff_cost <= 0:
        raise GraphError("label costs must be positive")
    if graph.labels is None or any(lab is None for lab in graph.labels):
        missing = (
            list(range(graph.n))
            if graph.labels is None
            else [v for v, lab in enumerate(graph.labels) if lab is None]
        )
        raise GraphError(f"label costs need a label on every node; missing {missing[:10]}")
    lab = graph.labels
    return graph.with_costs(
        [same_cost if lab[e.u] == lab[e.v] else diff_cost for e in graph.edges]
    )


def check_distribution(rho: np.ndarray, n: int, name: str = "rho", atol: float = 1e-12) -> np.ndarray:
    """Validate membership in the probability simplex over ``n`` nodes."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (n,):
        raise GraphError(f"{name} must have shape ({n},), got {rho.shape}")
    if not np.all(np.isfinite(rho)) or np.any(rho < 0):
        raise GraphError(f"{name} must be finite and nonnegative")
    if abs(rho.sum() - 1.0) > max(atol, 1e-12 * n):
        raise GraphError(f"{name} must sum to 1, sums to {rho.sum()!r}")
    return rho
