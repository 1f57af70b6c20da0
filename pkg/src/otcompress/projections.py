"""Euclidean projections used by the saddle-point solver.

* :func:`project_diag_simplex` -- onto ``{x : x * eps in simplex}`` by a sort.
* :func:`project_slabs` -- onto ``{t : lo <= F t <= hi}``, the dual-feasible
  potentials of a graph.
* :func:`project_capped_box` -- onto ``{e in [0, 1]^n : sum(e) <= k}``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .graph import ORIENTED, Graph

log = logging.getLogger(__name__)

ZERO_WEIGHT = 1e-15


class ProjectionError(RuntimeError):
    pass


def _check_weights(eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.ndim != 1 or eps.size == 0:
        raise ValueError("eps must be a non-empty vector")
    if np.any(~np.isfinite(eps)) or np.any(eps < 0) or np.any(eps > 1):
        raise ValueError("eps entries must lie in [0, 1]")
    if not np.any(eps > ZERO_WEIGHT):
        raise ValueError("eps must have at least one positive entry")
    return eps


def project_diag_simplex(y, eps) -> np.ndarray:
    """Solve ``min 0.5 ||x - y||^2  s.t.  x * eps in simplex`` exactly.

    Coordinates with zero weight are unconstrained and returned unchanged.
    The remaining ones are sorted by ``y_j / eps_j`` (stable, so ties keep
    index order) and a single multiplier ``alpha`` shifts them along ``eps``:
    ``x_j = max(y_j + alpha * eps_j, 0)``.
    """
    y = np.asarray(y, dtype=float)
    eps = _check_weights(eps)
    if y.shape != eps.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs eps {eps.shape}")
    x = y.copy()
    pos = eps > ZERO_WEIGHT
    yp, ep = y[pos], eps[pos]
    order = np.argsort(-(yp / ep), kind="stable")
    ys, es = yp[order], ep[order]
    num = 1.0 - np.cumsum(es * ys)
    den = np.cumsum(es * es)
    b = ys + es * num / den
    if not b[0] > 0:
        raise ProjectionError("leading breakpoint is not positive; weights are degenerate")
    ell = int(np.flatnonzero(b > 0)[-1])
    sel_y, sel_e = ys[: ell + 1], es[: ell + 1]
    # recompute on the selected block rather than reuse the running sums
    alpha = (1.0 - np.dot(sel_e, sel_y)) / np.dot(sel_e, sel_e)
    x[pos] = np.maximum(yp + alpha * ep, 0.0)
    return x


def project_diag_simplex_oracle(y, eps) -> np.ndarray:
    """Brute-force reference for :func:`project_diag_simplex` (``d <= 12``).

    Every nonempty subset of positive-weight coordinates is tried as the
    positive support; each gives a closed-form candidate and the feasible one
    nearest to ``y`` wins.
    """
    y = np.asarray(y, dtype=float)
    eps = _check_weights(eps)
    if y.size > 12:
        raise ValueError("oracle enumerates subsets; use d <= 12")
    idx = np.flatnonzero(eps > ZERO_WEIGHT)
    yv, e = y[idx], eps[idx]
    m = idx.size
    masks = ((np.arange(1, 2**m)[:, None] >> np.arange(m)) & 1).astype(bool)
    ey = masks @ (e * yv)
    ee = masks @ (e * e)
    alpha = (1.0 - ey) / ee
    cand = np.where(masks, yv + alpha[:, None] * e, 0.0)
    feasible = np.all(cand >= -1e-12, axis=1)
    dist = np.sum((cand - yv) ** 2, axis=1)
    dist[~feasible] = np.inf
    best = cand[int(np.argmin(dist))]
    x = y.copy()
    x[idx] = np.maximum(best, 0.0)
    return x


def project_capped_box(y, k: float) -> np.ndarray:
    """Project onto ``{e in [0,1]^n : sum(e) <= k}`` by a breakpoint scan.

    If clipping to the box already meets the budget that is the answer;
    otherwise ``sum(clip(y - tau, 0, 1)) = k`` is piecewise linear in ``tau``
    with breakpoints at ``y_j`` and ``y_j - 1`` and is solved exactly.
    """
    y = np.asarray(y, dtype=float)
    x = np.clip(y, 0.0, 1.0)
    if x.sum() <= k:
        return x
    ys = np.sort(y)
    csum = np.concatenate([[0.0], np.cumsum(ys)])
    n = ys.size

    def total(tau):
        lo = np.searchsorted(ys, tau, side="right")
        hi = np.searchsorted(ys, tau + 1.0, side="left")
        return (n - hi) + (csum[hi] - csum[lo]) - tau * (hi - lo)

    bps = np.unique(np.concatenate([ys, ys - 1.0]))
    bps = np.concatenate([[0.0], bps[bps > 0]])
    f = total(bps)
    j = int(np.argmax(f <= k))  # f is non-increasing and vanishes at max(y)
    t0, t1, f0, f1 = bps[j - 1], bps[j], f[j - 1], f[j]
    tau = t1 if f0 == f1 else t0 + (f0 - k) * (t1 - t0) / (f0 - f1)
    return np.clip(y - tau, 0.0, 1.0)


def _lipschitz(F: np.ndarray, iters: int = 300, seed: int = 0) -> float:
    """Largest eigenvalue of ``F^T F`` by power iteration, padded and capped."""
    if F.size == 0:
        return 1.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(F.shape[1])
    lam = 0.0
    for _ in range(iters):
        w = F.T @ (F @ v)
        nrm = np.linalg.norm(w)
        if nrm == 0:
            return 1.0
        lam = float(v @ w / (v @ v))
        v = w / nrm
    gersh = float(np.max(np.abs(F.T @ F).sum(axis=1)))
    return min(1.05 * lam, gersh) if lam > 0 else gersh


@dataclass
class SlabInfo:
    method: str
    iterations: int
    violation: float
    active: dict


class SlabProjector:
    """Projection onto the dual-feasible potentials of one graph.

    Keeps the last active set so consecutive, nearby projections (as in an
    iterative solver) usually finish with a single linear solve.
    """

    def __init__(
        self,
        graph: Graph,
        convention: str = ORIENTED,
        tol: float = 1e-10,
        max_iter: int = 10_000,
    ):
        self.graph = graph
        self.F = np.asarray(graph.incidence(convention))
        self.lo, self.hi = graph.slab_bounds(convention)
        self.tol = tol
        self.max_iter = max_iter
        self._L: float | None = None
        self.active: dict[int, int] = {}
        self.last: SlabInfo | None = None
        self._last_t = np.zeros(graph.n)

    @property
    def L(self) -> float:
        if self._L is None:
            self._L = _lipschitz(self.F)
        return self._L

    def violation(self, t: np.ndarray) -> float:
        ft = self.F @ t
        return float(np.max(np.maximum(ft - self.hi, self.lo - ft), initial=0.0))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        scale = max(1.0, float(np.max(np.abs(y), initial=0.0)))
        if self.violation(y) <= 0.0:
            self.active = {}
            self.last = SlabInfo("identity", 0, 0.0, {})
            return y.copy()
        ft = self.F @ y
        start = dict(self.active)
        start.update({int(e): 1 for e in np.flatnonzero(ft > self.hi)})
        start.update({int(e): -1 for e in np.flatnonzero(ft < self.lo)})
        t = self._active_set(y, start, scale)
        if t is not None:
            return t
        t = self._dual_gradient(y, scale)
        if t is not None:
            return t
        t = self._dykstra(y, scale)
        if t is not None:
            return t
        raise ProjectionError(
            f"slab projection did not converge in {self.max_iter} iterations "
            f"(violation {self.violation(self._last_t):.3e})"
        )

    def _solve_equality(self, y, active):
        idx = np.array(sorted(active), dtype=int)
        sgn = np.array([active[e] for e in idx])
        b = np.where(sgn > 0, self.hi[idx], self.lo[idx])
        FA = self.F[idx]
        mu = np.linalg.lstsq(FA @ FA.T, FA @ y - b, rcond=None)[0]
        t = y - FA.T @ mu
        return idx, sgn, b, mu, t

    def _active_set(self, y, active, scale, max_rounds: int = 60):
        seen = set()
        feas_tol = 1e-12 * scale
        for rounds in range(max_rounds):
            if not active:
                return None
            key = tuple(sorted(active.items()))
            if key in seen:
                return None
            seen.add(key)
            idx, sgn, b, mu, t = self._solve_equality(y, active)
            ft = self.F @ t
            eq_res = np.max(np.abs(ft[idx] - b))
            wrong = mu * sgn < -feas_tol
            up = ft > self.hi + feas_tol
            down = ft < self.lo - feas_tol
            if eq_res <= feas_tol and not wrong.any() and not up.any() and not down.any():
                self.active = {int(e): int(s) for e, s, m in zip(idx, sgn, mu) if abs(m) > 0}
                self.last = SlabInfo("active-set", rounds + 1, self.violation(t), dict(self.active))
                return t
            new = {int(e): int(s) for e, s, w in zip(idx, sgn, wrong) if not w}
            new.update({int(e): 1 for e in np.flatnonzero(up)})
            new.update({int(e): -1 for e in np.flatnonzero(down)})
            if eq_res > feas_tol and new == active:
                return None
            active = new
        return None

    def _prox(self, z, s):
        hi, lo = self.hi, self.lo
        with np.errstate(invalid="ignore"):
            out = np.where(z > s * hi, z - s * hi, 0.0)
            out = np.where(z < s * lo, z - s * lo, out)
        return out

    def _dual_gradient(self, y, scale, polish_every: int = 100):
        """Accelerated proximal gradient on the edge multipliers, with restarts."""
        F = self.F
        s = 1.0 / self.L
        fy = F @ y
        mu = np.zeros(F.shape[0])
        z = mu.copy()
        theta = 1.0
        t = y.copy()
        for it in range(1, self.max_iter + 1):
            t_z = y - F.T @ z
            mu_new = self._prox(z + s * (F @ t_z), s)
            theta_new = 0.5 * (1 + np.sqrt(1 + 4 * theta**2))
            # gradient-based restart keeps the sequence monotone in practice
            if (z - mu_new) @ (mu_new - mu) > 0:
                theta_new = 1.0
                z = mu_new.copy()
            else:
                z = mu_new + ((theta - 1) / theta_new) * (mu_new - mu)
            mu, theta = mu_new, theta_new
            t = y - F.T @ mu
            self._last_t = t
            if it % polish_every == 0:
                active = {int(e): (1 if mu[e] > 0 else -1) for e in np.flatnonzero(mu)}
                out = self._active_set(y, active, scale)
                if out is not None:
                    self.last = SlabInfo("dual-gradient+active-set", it, self.violation(out), dict(self.active))
                    return out
                ft = fy - F @ (F.T @ mu)
                viol = max(0.0, float(np.max(np.maximum(ft - self.hi, self.lo - ft))))
                slack = np.where(mu > 0, self.hi - ft, np.where(mu < 0, ft - self.lo, 0.0))
                comp = float(np.sum(np.abs(mu) * np.abs(slack)))
                if viol <= self.tol * scale and comp <= self.tol * scale:
                    self.active = {int(e): (1 if mu[e] > 0 else -1) for e in np.flatnonzero(mu)}
                    self.last = SlabInfo("dual-gradient", it, viol, dict(self.active))
                    return t
        return None

    def _dykstra(self, y, scale):
        """Dykstra's alternating projections over the individual slabs."""
        F = self.F
        norms = np.sum(F * F, axis=1)
        t = y.copy()
        incr = np.zeros_like(F)
        for it in range(1, self.max_iter + 1):
            t_prev = t.copy()
            for e in range(F.shape[0]):
                w = t + incr[e]
                fe = F[e] @ w
                step = 0.0
                if fe > self.hi[e]:
                    step = (fe - self.hi[e]) / norms[e]
                elif fe < self.lo[e]:
                    step = (fe - self.lo[e]) / norms[e]
                t_new = w - step * F[e]
                incr[e] = w - t_new
                t = t_new
            self._last_t = t
            if np.max(np.abs(t - t_prev)) <= self.tol * scale and self.violation(t) <= self.tol * scale:
                self.active = {}
                self.last = SlabInfo("dykstra", it, self.violation(t), {})
                return t
        return None


def project_slabs(y, graph: Graph, convention: str = ORIENTED, **kwargs) -> np.ndarray:
    """Euclidean projection of potentials ``y`` onto ``{t : -c <= F t <= c}``.

    Directed edges constrain only the upper side.
    """
    return SlabProjector(graph, convention, **kwargs)(y)
