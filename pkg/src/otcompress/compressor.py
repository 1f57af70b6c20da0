"""Support-constrained compression by a relaxed saddle-point problem.

The selector ``eps`` in ``[0,1]^n`` with ``sum(eps) <= k`` is driven by
projected extragradient (Mirror Prox with Euclidean geometry) on

    psi(eps, t, zeta) = -1/(2 lam) sum_{t_v + zeta <= 0} eps_v (t_v + zeta)^2
                        - t . rho0 - zeta

minimized in ``eps`` and maximized over dual-feasible potentials ``t`` and a
free scalar ``zeta``. The averaged selector is rounded to ``k`` nodes and the
target distribution is read off the potentials.
"""

from __future__ import annotations

import itertools
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .graph import ORIENTED, Graph, check_distribution, stationary_prior
from .projections import SlabProjector, project_capped_box
from .transport import balance_matrix, check_active_tightness, ot_distance

log = logging.getLogger(__name__)

DEFAULT_STEPS = (0.1, 0.1, 0.1)
DEFAULT_T = 25
ZETA_LIMIT = 1e6
MASS_SLACK = 0.05
CERT_MARGIN = 1e-6
TIE_DECIMALS = 12


class SolverError(RuntimeError):
    """A numerical stage diverged or failed to reach its tolerance."""


@dataclass
class SaddleState:
    epsilon: np.ndarray
    t: np.ndarray
    zeta: float
    steps: tuple[float, float, float] = DEFAULT_STEPS
    iteration: int = 0


@dataclass
class MirrorProxResult:
    state: SaddleState
    epsilon_avg: np.ndarray
    objective_trace: list[float]
    lower_bounds: list[float]
    upper_bounds: list[float] = field(default_factory=list)

    @property
    def best_gap_trace(self) -> list[float]:
        """Running ``min(upper) - max(lower)``; only filled when upper bounds were tracked."""
        out = []
        lo, hi = -np.inf, np.inf
        for lb, ub in zip(self.lower_bounds, self.upper_bounds):
            lo, hi = max(lo, lb), min(hi, ub)
            out.append(hi - lo)
        return out


@dataclass
class Certificate:
    exact: bool
    gamma: float | None = None
    margin: float | None = None
    reason: str = ""
    scores: np.ndarray | None = None

    def __str__(self) -> str:
        if self.exact:
            return f"Exact(gamma={self.gamma:.6g})"
        return f"NotCertified({self.reason})"


@dataclass
class Recovery:
    rho1: np.ndarray
    raw_mass: float
    degenerate: bool
    renormalized: bool
    resolved: bool = False


@dataclass
class DualSolution:
    """Maximizer of ``psi(eps, ., .)`` over potentials and ``zeta`` for a fixed selector."""

    t: np.ndarray
    zeta: float
    rho: np.ndarray
    value: float
    residual: float
    iterations: int
    converged: bool
    method: str


@dataclass
class BruteForceResult:
    support: tuple[int, ...]
    value: float
    rho1: np.ndarray
    candidate: tuple[int, ...]
    ties: list[tuple[int, ...]]


@dataclass
class CompressionReport:
    n: int
    k: int
    lam: float
    T: int
    steps: tuple[float, float, float]
    convention: str
    support: tuple[int, ...]
    selected: tuple[int, ...]
    rho0: np.ndarray
    rho1: np.ndarray
    epsilon_avg: np.ndarray
    objective_trace: list[float]
    certificate: Certificate | None
    transport_cost: float
    objective_value: float
    recovery: Recovery
    kept_edges: tuple[int, ...]
    tight: bool
    wall_time: float


# --- objective -----------------------------------------------------------


def psi_value(eps, t, zeta: float, rho0, lam: float) -> float:
    if lam <= 0:
        raise ValueError("lambda must be positive")
    eps, t, rho0 = (np.asarray(a, dtype=float) for a in (eps, t, rho0))
    s = t + zeta
    low = s <= 0
    return float(-np.sum(eps[low] * s[low] ** 2) / (2 * lam) - t @ rho0 - zeta)


def psi_gradients(eps, t, zeta: float, rho0, lam: float):
    """Gradients of ``psi`` in ``(eps, t, zeta)``; continuous across ``t_v = -zeta``."""
    if lam <= 0:
        raise ValueError("lambda must be positive")
    eps, t, rho0 = (np.asarray(a, dtype=float) for a in (eps, t, rho0))
    s = np.minimum(t + zeta, 0.0)
    g_eps = -(s**2) / (2 * lam)
    g_t = -eps * s / lam - rho0
    g_zeta = float(-np.sum(eps * s) / lam - 1.0)
    return g_eps, g_t, g_zeta


def selector_lower_bound(t, zeta: float, rho0, lam: float, k: int) -> float:
    """``min psi(eps, t, zeta)`` over the relaxed budget set (a bound on the saddle value)."""
    s = np.minimum(np.asarray(t) + zeta, 0.0)
    q = np.sort(s**2 / (2 * lam))[::-1]
    return float(-q[:k].sum() - np.dot(t, rho0) - zeta)


# --- dual subproblem for a fixed selector -------------------------------


def _best_zeta(t: np.ndarray, eps: np.ndarray, lam: float) -> float:
    """``zeta`` with ``sum eps_v (-(t_v + zeta))_+ = lam``, i.e. unit recovered mass."""
    pos = eps > 0
    a = -t[pos]
    e = eps[pos]
    order = np.argsort(-a, kind="stable")
    a, e = a[order], e[order]
    z = (np.cumsum(e * a) - lam) / np.cumsum(e)
    j = int(np.flatnonzero(z < a)[-1])
    return float(z[j])


def _dual_pieces(t, eps, rho0, lam):
    zeta = _best_zeta(t, eps, lam)
    rho = eps * np.maximum(-(t + zeta), 0.0) / lam
    return zeta, rho, psi_value(eps, t, zeta, rho0, lam)


def _polish_dual(t, zeta, eps, rho0, lam, proj: SlabProjector, tol=1e-10):
    """Solve the KKT system on the guessed active pattern; ``None`` if the guess fails."""
    n = t.size
    F, lo, hi = proj.F, proj.lo, proj.hi
    ft = F @ t
    near = 1e-7 * np.maximum(1.0, np.abs(hi))
    up = np.flatnonzero(np.abs(ft - hi) <= near)
    down = np.flatnonzero(np.abs(ft - lo) <= near)
    idx = np.concatenate([up, down])
    sgn = np.concatenate([np.ones(up.size), -np.ones(down.size)])
    b = np.concatenate([hi[up], lo[down]])
    s = t + zeta
    mass = (eps > 0) & (s < -1e-9)
    w = np.where(mass, eps / lam, 0.0)
    na = idx.size
    # unknowns [t, zeta, mu]
    A = np.zeros((n + 1 + na, n + 1 + na))
    rhs = np.zeros(n + 1 + na)
    A[:n, :n] = -np.diag(w)
    A[:n, n] = -w
    A[:n, n + 1 :] = -F[idx].T
    rhs[:n] = rho0
    A[n, :n] = -w
    A[n, n] = -w.sum()
    rhs[n] = 1.0
    A[n + 1 :, :n] = F[idx]
    rhs[n + 1 :] = b
    sol = np.linalg.lstsq(A, rhs, rcond=None)[0]
    if np.max(np.abs(A @ sol - rhs)) > tol:
        return None
    t2, z2, mu = sol[:n], float(sol[n]), sol[n + 1 :]
    s2 = t2 + z2
    ok = (
        proj.violation(t2) <= tol
        and np.all(mu * sgn >= -tol)
        and np.all(s2[mass] <= tol)
        and np.all(s2[(eps > 0) & ~mass] >= -tol)
    )
    return (t2, z2) if ok else None


def maximize_potentials(
    graph: Graph,
    rho0,
    eps,
    lam: float = 1.0,
    convention: str = ORIENTED,
    tol: float = 1e-8,
    max_iter: int = 20_000,
    t0=None,
    polish_every: int = 25,
) -> DualSolution:
    """Maximize ``psi(eps, t, zeta)`` over dual-feasible ``t`` and free ``zeta``.

    ``zeta`` is eliminated exactly (unit recovered mass), leaving a smooth
    concave problem in ``t`` solved by accelerated projected gradient ascent.
    The iterate is periodically polished by solving the KKT system on its
    active pattern. ``residual`` is the norm of the gradient mapping.
    """
    rho0 = np.asarray(rho0, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if not np.any(eps > 0):
        raise ValueError("selector must have a positive entry")
    proj = SlabProjector(graph, convention)
    step = lam / float(eps.max())

    def grad(t):
        zeta, rho, val = _dual_pieces(t, eps, rho0, lam)
        return zeta, rho, val, rho - rho0

    def residual(t):
        *_, g = grad(t)
        return float(np.linalg.norm(t - proj(t + step * g)) / step)

    t = proj(np.zeros(graph.n) if t0 is None else np.asarray(t0, float))
    _, _, val, _ = grad(t)
    z, theta = t.copy(), 1.0
    res = np.inf
    for it in range(1, max_iter + 1):
        *_, g = grad(z)
        t_new = proj(z + step * g)
        _, _, val_new, _ = grad(t_new)
        if val_new < val:
            # function-value restart
            z, theta = t.copy(), 1.0
            *_, g = grad(z)
            t_new = proj(z + step * g)
            _, _, val_new, _ = grad(t_new)
        theta_new = 0.5 * (1 + math.sqrt(1 + 4 * theta * theta))
        z = t_new + ((theta - 1) / theta_new) * (t_new - t)
        t, val, theta = t_new, val_new, theta_new
        if it % polish_every == 0:
            zeta = _best_zeta(t, eps, lam)
            pol = _polish_dual(t, zeta, eps, rho0, lam, proj)
            if pol is not None:
                tp, _ = pol
                rp = residual(tp)
                if rp <= tol:
                    zeta, rho, val = _dual_pieces(tp, eps, rho0, lam)
                    return DualSolution(tp, zeta, rho, val, rp, it, True, "polished")
            res = residual(t)
            if res <= tol:
                zeta, rho, val = _dual_pieces(t, eps, rho0, lam)
                return DualSolution(t, zeta, rho, val, res, it, True, "gradient")
    zeta, rho, val = _dual_pieces(t, eps, rho0, lam)
    return DualSolution(t, zeta, rho, val, residual(t), max_iter, False, "gradient")


# --- Mirror Prox -----------------------------------------------------------


def mirror_prox(
    graph: Graph,
    rho0,
    k: int,
    lam: float = 1.0,
    T: int = DEFAULT_T,
    steps: tuple[float, float, float] = DEFAULT_STEPS,
    convention: str = ORIENTED,
    track_gap: bool = False,
    callback=None,
) -> MirrorProxResult:
    """Projected extragradient on ``psi``: descent in ``eps``, ascent in ``(t, zeta)``.

    Runs iterations ``0..T`` and returns the final state together with the
    step-weighted average of the intermediate selectors of iterations ``1..T``.
    ``callback(it, eps, t, zeta)`` sees every iterate after its update.
    """
    n = graph.n
    rho0 = check_distribution(rho0, n, "rho0", atol=1e-9)
    if not 1 <= k <= n:
        raise ValueError(f"budget k={k} must lie in [1, {n}]")
    if lam <= 0:
        raise ValueError("lambda must be positive")
    if T < 1:
        raise ValueError("T must be at least 1")
    a, b, g = steps
    if min(steps) <= 0:
        raise ValueError("step sizes must be positive")

    proj_t = SlabProjector(graph, convention)
    eps = np.full(n, k / n)
    t = np.zeros(n)
    zeta = 0.0
    acc = np.zeros(n)
    weight = 0.0
    trace, lower, upper = [], [], []

    for it in range(T + 1):
        ge, gt, gz = psi_gradients(eps, t, zeta, rho0, lam)
        eps_h = project_capped_box(eps - a * ge, k)
        t_h = proj_t(t + b * gt)
        zeta_h = zeta + g * gz
        ge, gt, gz = psi_gradients(eps_h, t_h, zeta_h, rho0, lam)
        eps = project_capped_box(eps - a * ge, k)
        t = proj_t(t + b * gt)
        zeta = zeta + g * gz
        for name, val in (("epsilon", eps), ("t", t), ("zeta", zeta)):
            if not np.all(np.isfinite(val)):
                raise SolverError(f"non-finite {name} at iteration {it}")
        if abs(zeta) > ZETA_LIMIT:
            raise SolverError(f"zeta diverged at iteration {it}: {zeta:.3e}")
        if callback is not None:
            callback(it, eps, t, zeta)
        if it >= 1:
            acc += a * eps_h
            weight += a
        trace.append(psi_value(eps, t, zeta, rho0, lam))
        lower.append(selector_lower_bound(t, zeta, rho0, lam, k))
        if track_gap and np.any(eps > 0):
            upper.append(maximize_potentials(graph, rho0, eps, lam, convention, t0=t).value)

    state = SaddleState(eps, t, zeta, tuple(steps), T + 1)
    return MirrorProxResult(state, acc / weight, trace, lower, upper)


# --- rounding and recovery -------------------------------------------------


def round_topk(epsilon_avg, k: int, rho0=None) -> tuple[int, ...]:
    """Indices of the ``k`` largest selector entries, ignoring zeros.

    Entries equal to 12 decimals are tied; ties go to larger ``rho0``, then to
    the smaller node id.
    """
    e = np.round(np.asarray(epsilon_avg, dtype=float), TIE_DECIMALS)
    r = np.zeros_like(e) if rho0 is None else np.asarray(rho0, dtype=float)
    ids = np.arange(e.size)
    order = np.lexsort((ids, -r, -e))
    picked = [int(v) for v in order[:k] if e[v] > 0]
    return tuple(sorted(picked))


def recover_rho1(epsilon, t, zeta: float, lam: float, delta: float = MASS_SLACK) -> Recovery:
    """Target distribution ``(eps / lam) * max(-(t + zeta), 0)`` from a saddle point.

    The raw vector is renormalized when its mass is within ``delta`` of one.
    Otherwise ``renormalized`` is False and the caller should re-solve.
    """
    eps = np.asarray(epsilon, dtype=float)
    rho = eps * np.maximum(-(np.asarray(t, dtype=float) + zeta), 0.0) / lam
    mass = float(rho.sum())
    if mass <= 0:
        return Recovery(rho, mass, True, False)
    if abs(mass - 1.0) <= delta:
        return Recovery(rho / mass, mass, False, True)
    return Recovery(rho, mass, False, False)


# --- certificate -----------------------------------------------------------


def certify(
    graph: Graph,
    rho0,
    support,
    lam: float = 1.0,
    convention: str = ORIENTED,
    tol: float = 1e-8,
    margin: float = CERT_MARGIN,
    dual: DualSolution | None = None,
) -> Certificate:
    """Check the separation condition proving the relaxation recovers ``support``.

    Solves the restricted dual on ``support``; with ``nu`` chosen optimally the
    per-node score is ``max(-(t_v + zeta), 0)``. The support is certified if a
    threshold ``gamma`` separates in-support scores (above) from the rest
    (below) by at least ``margin`` on both sides.
    """
    rho0 = np.asarray(rho0, dtype=float)
    support = sorted(set(int(v) for v in support))
    if not support:
        return Certificate(False, reason="empty support")
    ind = np.zeros(graph.n)
    ind[support] = 1.0
    if dual is None:
        dual = maximize_potentials(graph, rho0, ind, lam, convention, tol=tol)
    if not dual.converged:
        return Certificate(False, reason=f"solver (residual {dual.residual:.2e})")
    scores = np.maximum(-(dual.t + dual.zeta), 0.0)
    inside = scores[ind > 0]
    outside = scores[ind == 0]
    floor = float(outside.max()) if outside.size else 0.0
    lo_in = float(inside.min())
    gamma = 0.5 * (floor + lo_in)
    gap = lo_in - gamma
    if gap < margin:
        return Certificate(
            False,
            reason=f"no separating gamma (min in-support {lo_in:.3e}, max outside {floor:.3e})",
            scores=scores,
        )
    return Certificate(True, gamma, gap, scores=scores)


# --- brute force oracle --------------------------------------------------


def _restricted_qp(graph: Graph, rho0: np.ndarray, support, lam: float, convention: str):
    """``min W(rho0, rho) + lam/2 |rho|^2`` over distributions on ``support`` (interior point)."""
    import clarabel

    B, fixed = balance_matrix(graph, convention)
    keep = np.flatnonzero(~fixed)
    B = B[:, keep]
    cost = np.concatenate([graph.costs, graph.costs])[keep]
    S = list(support)
    ns, nf = len(S), keep.size
    nv = ns + nf
    # B J - E_S rho = -rho0 ; 1' rho = 1 ; rho, J >= 0
    E = np.zeros((graph.n, ns))
    E[S, range(ns)] = 1.0
    A_eq = np.vstack([np.hstack([-E, B]), np.concatenate([np.ones(ns), np.zeros(nf)])[None, :]])
    b_eq = np.concatenate([-rho0, [1.0]])
    A = sparse.csc_matrix(np.vstack([A_eq, -np.eye(nv)]))
    b = np.concatenate([b_eq, np.zeros(nv)])
    P = sparse.csc_matrix(sparse.diags(np.concatenate([np.full(ns, lam), np.zeros(nf)])))
    q = np.concatenate([np.zeros(ns), cost])
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_gap_abs = 1e-11
    settings.tol_gap_rel = 1e-11
    settings.tol_feas = 1e-11
    solver = clarabel.DefaultSolver(
        P, q, A, b, [clarabel.ZeroConeT(A_eq.shape[0]), clarabel.NonnegativeConeT(nv)], settings
    )
    sol = solver.solve()
    if str(sol.status) not in ("Solved", "AlmostSolved"):
        return np.inf, None
    x = np.asarray(sol.x)
    rho = np.zeros(graph.n)
    rho[S] = np.maximum(x[:ns], 0.0)
    return float(sol.obj_val), rho


def compress_bruteforce(
    graph: Graph,
    rho0,
    k: int,
    lam: float = 1.0,
    convention: str = ORIENTED,
    mass_tol: float = 1e-6,
    tie_tol: float = 1e-9,
) -> BruteForceResult:
    """Exhaustive minimizer of the support-constrained problem on small graphs.

    Widening a support never raises the optimum, so only ``min(k, n)``-subsets
    are enumerated; the returned ``support`` is where the optimal distribution
    of the best subset carries more than ``mass_tol``.
    """
    n = graph.n
    if n > 10:
        raise ValueError("brute force is limited to 10 nodes")
    rho0 = np.asarray(rho0, dtype=float)
    size = min(k, n)
    results = []
    for S in itertools.combinations(range(n), size):
        val, rho = _restricted_qp(graph, rho0, S, lam, convention)
        if rho is not None:
            results.append((val, S, rho))
    if not results:
        raise SolverError("no support admits a feasible transport")
    best_val, best_S, best_rho = min(results, key=lambda r: (r[0], r[1]))
    supp = tuple(int(v) for v in np.flatnonzero(best_rho > mass_tol))
    ties = []
    for val, S, rho in results:
        if val <= best_val + tie_tol:
            s = tuple(int(v) for v in np.flatnonzero(rho > mass_tol))
            if s not in ties:
                ties.append(s)
    rho1 = np.where(best_rho > mass_tol, best_rho, 0.0)
    rho1 /= rho1.sum()
    return BruteForceResult(supp, best_val, rho1, best_S, sorted(ties))


# --- pipeline --------------------------------------------------------------


def compress(
    graph: Graph,
    rho0=None,
    k: int = 1,
    lam: float = 1.0,
    T: int = DEFAULT_T,
    steps: tuple[float, float, float] = DEFAULT_STEPS,
    convention: str = ORIENTED,
    run_certificate: bool = True,
    refine: bool = False,
) -> CompressionReport:
    """Select at most ``k`` nodes and a target distribution supported on them.

    The distribution is read off the final saddle state and renormalized when
    its mass is within 5% of one; otherwise, or always with ``refine``, it is
    recomputed by solving the restricted problem on the selected nodes.
    """
    start = time.perf_counter()
    if rho0 is None:
        rho0 = stationary_prior(graph)
    rho0 = check_distribution(rho0, graph.n, "rho0", atol=1e-9)
    mp = mirror_prox(graph, rho0, k, lam, T, steps, convention)
    selected = round_topk(mp.epsilon_avg, k, rho0)
    ind = np.zeros(graph.n)
    ind[list(selected)] = 1.0

    st = mp.state
    rec = recover_rho1(ind, st.t, st.zeta, lam)
    dual = None
    if refine or not rec.renormalized:
        log.info(
            "recovered mass %.4f outside tolerance%s; re-solving on the selected nodes",
            rec.raw_mass,
            " (degenerate)" if rec.degenerate else "",
        )
        dual = maximize_potentials(graph, rho0, ind, lam, convention, t0=st.t)
        if not dual.converged:
            log.warning("restricted re-solve stopped at residual %.2e", dual.residual)
        rho = dual.rho / dual.rho.sum()
        rec = Recovery(rho, rec.raw_mass, rec.degenerate, True, resolved=True)

    rho1 = rec.rho1
    support = tuple(int(v) for v in np.flatnonzero(rho1 > 0))
    cert = certify(graph, rho0, support, lam, convention) if run_certificate else None
    sol = ot_distance(graph, rho0, rho1, convention)
    tight = check_active_tightness(sol, graph).ok if sol.feasible else False
    keep = set(support)
    kept_ids = tuple(i for i, e in enumerate(graph.edges) if e.u in keep and e.v in keep)
    return CompressionReport(
        n=graph.n,
        k=k,
        lam=lam,
        T=T,
        steps=tuple(steps),
        convention=convention,
        support=support,
        selected=selected,
        rho0=rho0,
        rho1=rho1,
        epsilon_avg=mp.epsilon_avg,
        objective_trace=mp.objective_trace,
        certificate=cert,
        transport_cost=float(sol.primal_value),
        objective_value=float(sol.primal_value + 0.5 * lam * rho1 @ rho1),
        recovery=rec,
        kept_edges=kept_ids,
        tight=tight,
        wall_time=time.perf_counter() - start,
    )
