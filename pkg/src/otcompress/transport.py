"""Exact optimal transport between node distributions on a mixed graph.

The oriented problem is solved as an uncapacitated min-cost flow with
successive shortest paths on an integer mass grid. Node potentials of the
final residual network are optimal dual potentials, so primal and dual come
out of the same run.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse.csgraph import shortest_path

from .graph import AS_WRITTEN, CONVENTIONS, ORIENTED, Graph, GraphError, check_distribution

MASS_SCALE = 10**9
ACTIVE_TOL = 1e-9
OPTIMAL = "optimal"
INFEASIBLE = "infeasible"


class TransportError(RuntimeError):
    pass


@dataclass
class TransportSolution:
    """Flows, potentials and objective values of one transport problem.

    ``jplus[e]`` is mass moved along the stored orientation of edge ``e``
    (tail to head) and ``jminus[e]`` mass moved against it.
    """

    status: str
    convention: str
    jplus: np.ndarray
    jminus: np.ndarray
    potentials: np.ndarray
    primal_value: float
    dual_value: float
    active_edges: tuple[int, ...] = ()
    quantization_error: float = 0.0
    message: str = ""

    @property
    def feasible(self) -> bool:
        return self.status == OPTIMAL

    @property
    def value(self) -> float:
        return self.primal_value

    @property
    def net_flow(self) -> np.ndarray:
        return self.jplus - self.jminus


@dataclass
class TightnessReport:
    ok: bool
    violations: list[tuple[int, float, float]] = field(default_factory=list)


def _quantize(b: np.ndarray, scale: int) -> list[int]:
    """Round ``b * scale`` to integers with exactly zero sum (largest remainder)."""
    x = b * scale
    fl = np.floor(x)
    out = [int(v) for v in fl]
    short = -sum(out)
    if short > 0:
        order = np.argsort(-(x - fl), kind="stable")
        for i in order[:short]:
            out[int(i)] += 1
    elif short < 0:
        order = np.argsort(x - fl, kind="stable")
        for i in order[: -short]:
            out[int(i)] -= 1
    return out


def _min_cost_flow(graph: Graph, supply: list[int]):
    """Successive shortest paths on the bidirected expansion of ``graph``.

    Returns ``(flow, potentials)`` with one flow entry per arc, or ``None`` if
    some deficit cannot be reached. Arc ``2e`` runs tail->head, arc ``2e+1``
    head->tail (absent for directed edges).
    """
    n = graph.n
    # arcs[2i] = (tail, head, c), arcs[2i+1] = (head, tail, c or inf)
    arcs: list[tuple[int, int, float]] = []
    out_arcs: list[list[int]] = [[] for _ in range(n)]
    in_arcs: list[list[int]] = [[] for _ in range(n)]
    for i, e in enumerate(graph.edges):
        arcs.append((e.tail, e.head, e.cost))
        arcs.append((e.head, e.tail, e.cost) if not e.directed else (e.head, e.tail, np.inf))
    for a, (s, d, c) in enumerate(arcs):
        if np.isfinite(c):
            out_arcs[s].append(a)
            in_arcs[d].append(a)
    flow = [0] * len(arcs)
    excess = list(supply)
    pi = [0.0] * n
    inf = float("inf")

    while any(x > 0 for x in excess):
        dist = [inf] * n
        prev: list[tuple[int, bool] | None] = [None] * n
        heap = []
        for v in range(n):
            if excess[v] > 0:
                dist[v] = 0.0
                heap.append((0.0, v))
        heapq.heapify(heap)
        done = [False] * n
        target = -1
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if excess[u] < 0:
                target = u
                break
            # forward residual arcs have unbounded capacity
            for a in out_arcs[u]:
                _, v, c = arcs[a]
                nd = d + max(c + pi[u] - pi[v], 0.0)
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = (a, True)
                    heapq.heappush(heap, (nd, v))
            # reverse residual arcs exist where flow is positive
            for a in in_arcs[u]:
                if flow[a] <= 0:
                    continue
                v, _, c = arcs[a]
                nd = d + max(-c + pi[u] - pi[v], 0.0)
                if nd < dist[v]:
                    dist[v] = nd
                    prev[v] = (a, False)
                    heapq.heappush(heap, (nd, v))
        if target < 0:
            return None
        dt = dist[target]
        for v in range(n):
            pi[v] += min(dist[v], dt)
        # walk back to find the source and bottleneck
        bottleneck = -excess[target]
        v = target
        path = []
        # sources start at distance 0 and reduced costs are clamped at 0,
        # so they never acquire a predecessor
        while prev[v] is not None:
            a, fwd = prev[v]
            path.append((a, fwd))
            if not fwd:
                bottleneck = min(bottleneck, flow[a])
            v = arcs[a][0] if fwd else arcs[a][1]
        source = v
        bottleneck = min(bottleneck, excess[source])
        for a, fwd in path:
            flow[a] += bottleneck if fwd else -bottleneck
        excess[source] -= bottleneck
        excess[target] += bottleneck
    return flow, np.array(pi)


def ot_distance(
    graph: Graph,
    rho0,
    rho1,
    convention: str = ORIENTED,
    scale: int = MASS_SCALE,
) -> TransportSolution:
    """Optimal transport cost from ``rho0`` to ``rho1`` with flows and potentials."""
    rho0 = check_distribution(rho0, graph.n, "rho0", atol=1e-9)
    rho1 = check_distribution(rho1, graph.n, "rho1", atol=1e-9)
    if convention == AS_WRITTEN:
        return _ot_lp(graph, rho0, rho1)
    if convention != ORIENTED:
        raise GraphError(f"unknown convention {convention!r}")

    supply = _quantize(rho0 - rho1, scale)
    res = _min_cost_flow(graph, supply)
    m = graph.m
    if res is None:
        nan = np.full(m, np.nan)
        return TransportSolution(
            INFEASIBLE, convention, nan, nan.copy(), np.full(graph.n, np.nan),
            np.nan, np.nan, message="some demand is unreachable along edge orientations",
        )
    flow, pi = res
    net = [flow[2 * i] - flow[2 * i + 1] for i in range(m)]
    jplus = np.array([max(x, 0) for x in net], dtype=float) / scale
    jminus = np.array([max(-x, 0) for x in net], dtype=float) / scale
    t = pi - pi[0]
    F = graph.incidence(ORIENTED)
    quant = float(np.max(np.abs(F.T @ (jplus - jminus) - (rho1 - rho0)), initial=0.0))
    return _finish(graph, convention, jplus, jminus, t, rho0, rho1, quant)


def _finish(graph, convention, jplus, jminus, t, rho0, rho1, quant):
    c = graph.costs
    primal = float(c @ (jplus + jminus))
    dual = float(t @ (rho1 - rho0))
    active = tuple(int(i) for i in np.flatnonzero(jplus + jminus > ACTIVE_TOL))
    return TransportSolution(OPTIMAL, convention, jplus, jminus, t, primal, dual, active, quant)


def balance_matrix(graph: Graph, convention: str = ORIENTED) -> tuple[np.ndarray, np.ndarray]:
    """Matrix ``B`` with ``B @ [J+, J-] = rho1 - rho0`` and a mask of fixed-zero columns.

    Under the as-written convention undirected rows are taken literally,
    ``F^T (J- - J+)`` with unsigned ``F``. Directed edges always move mass
    from tail to head and never carry ``J-``.
    """
    if convention not in CONVENTIONS:
        raise GraphError(f"unknown convention {convention!r}")
    directed = graph.directed_mask
    if convention == ORIENTED:
        F = graph.incidence(ORIENTED)
        B = np.hstack([F.T, -F.T])
    else:
        F = graph.incidence(AS_WRITTEN)
        col_plus = np.where(directed[:, None], F, -F)
        col_minus = np.where(directed[:, None], -F, F)
        B = np.hstack([col_plus.T, col_minus.T])
    fixed = np.concatenate([np.zeros(graph.m, bool), directed])
    return B, fixed


def _ot_lp(graph: Graph, rho0: np.ndarray, rho1: np.ndarray) -> TransportSolution:
    m = graph.m
    A, fixed = balance_matrix(graph, AS_WRITTEN)
    c = np.concatenate([graph.costs, graph.costs])
    bounds = [(0, 0) if f else (0, None) for f in fixed]
    res = linprog(c, A_eq=A, b_eq=rho1 - rho0, bounds=bounds, method="highs")
    if res.status == 2:
        nan = np.full(m, np.nan)
        return TransportSolution(
            INFEASIBLE, AS_WRITTEN, nan, nan.copy(), np.full(graph.n, np.nan),
            np.nan, np.nan, message="balance constraints are infeasible",
        )
    if res.status != 0:
        raise TransportError(f"LP solver failed: {res.message}")
    x = res.x
    jp, jm = x[:m].copy(), x[m:].copy()
    # cancel opposing flow; both directions enter the balance with opposite signs
    both = np.minimum(jp, jm)
    jp -= both
    jm -= both
    t = np.asarray(res.eqlin.marginals, dtype=float)
    quant = float(np.max(np.abs(A @ np.concatenate([jp, jm]) - (rho1 - rho0)), initial=0.0))
    return _finish(graph, AS_WRITTEN, jp, jm, t, rho0, rho1, quant)


def dual_objective(t, rho0, rho1, graph: Graph, convention: str = ORIENTED, tol: float = 1e-9) -> float:
    """``t . (rho1 - rho0)`` after checking that ``t`` is dual feasible."""
    t = np.asarray(t, dtype=float)
    F = graph.incidence(convention)
    lo, hi = graph.slab_bounds(convention)
    ft = F @ t
    bad = np.flatnonzero((ft > hi + tol) | (ft < lo - tol))
    if bad.size:
        e = int(bad[0])
        edge = graph.edges[e]
        raise GraphError(
            f"potentials violate edge {e} ({edge.u}, {edge.v}): F t = {ft[e]:.6g}, cost {edge.cost:.6g}"
        )
    return float(t @ (np.asarray(rho1, float) - np.asarray(rho0, float)))


def shortest_path_metric(graph: Graph) -> np.ndarray:
    """All-pairs shortest path distances; directed edges are one-way."""
    W = np.full((graph.n, graph.n), np.inf)
    for e in graph.edges:
        W[e.tail, e.head] = min(W[e.tail, e.head], e.cost)
        if not e.directed:
            W[e.head, e.tail] = min(W[e.head, e.tail], e.cost)
    W[~np.isfinite(W)] = 0.0  # csgraph treats zeros as missing edges
    return shortest_path(W, method="D", directed=True)


def w1_oracle(graph: Graph, rho0, rho1) -> float:
    """Transport cost via a dense transportation LP over shortest-path distances.

    Independent of the flow solver; intended for small graphs in tests.
    """
    rho0 = np.asarray(rho0, float)
    rho1 = np.asarray(rho1, float)
    n = graph.n
    D = shortest_path_metric(graph)
    pairs = [(i, j) for i in range(n) for j in range(n) if np.isfinite(D[i, j])]
    cost = np.array([D[i, j] for i, j in pairs])
    A = np.zeros((2 * n, len(pairs)))
    for k, (i, j) in enumerate(pairs):
        A[i, k] = 1.0
        A[n + j, k] = 1.0
    res = linprog(cost, A_eq=A, b_eq=np.concatenate([rho0, rho1]), bounds=(0, None), method="highs")
    if res.status != 0:
        return float("inf")
    return float(res.fun)


def check_active_tightness(solution: TransportSolution, graph: Graph, tol: float = 1e-6) -> TightnessReport:
    """Every edge carrying flow must sit on the boundary of its dual slab."""
    F = graph.incidence(solution.convention)
    ft = np.abs(F @ solution.potentials)
    violations = []
    for e in solution.active_edges:
        c = graph.edges[e].cost
        if abs(ft[e] - c) > tol:
            violations.append((e, float(ft[e]), float(c)))
    return TightnessReport(not violations, violations)
