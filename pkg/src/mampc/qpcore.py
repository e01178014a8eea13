"""Dense convex QP solver.

Solves ``min 1/2 v'Hv + f'v  s.t.  Aineq v <= bineq,  Aeq v = beq`` with
relaxed ADMM (equalities kept inside the x-update so every iterate satisfies
them), followed by an active-set polish that solves the KKT system exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg

from ._backend import kernels
from ._kernels_py import DIVERGED, MAX_ITER, NONFINITE, OK

OPTIMAL = "optimal"
MAX_ITER_STATUS = "max_iter"
INFEASIBLE = "infeasible"

RHO = 1.0
SIGMA = 1e-6
ALPHA = 1.6
DIVERGE_AFTER = 1000
DIVERGE_LIMIT = 1e6


class QpInfeasibleError(RuntimeError):
    """Raised by callers that require an optimal QP solution."""


@dataclass
class QpProblem:
    """Problem data; ``H`` is symmetrized on construction.

    ``offset`` is a constant added to the reported objective.
    """

    H: np.ndarray
    f: np.ndarray
    Aineq: Optional[np.ndarray] = None
    bineq: Optional[np.ndarray] = None
    Aeq: Optional[np.ndarray] = None
    beq: Optional[np.ndarray] = None
    offset: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        d = H.shape[0]
        if H.shape != (d, d):
            raise ValueError(f"H must be square, got {H.shape}")
        self.H = 0.5 * (H + H.T)
        self.f = np.asarray(self.f, dtype=float).reshape(d)
        self.Aineq, self.bineq = _constraint_pair(self.Aineq, self.bineq, d, "ineq")
        self.Aeq, self.beq = _constraint_pair(self.Aeq, self.beq, d, "eq")

    @property
    def dim(self) -> int:
        return self.H.shape[0]

    def objective(self, v) -> float:
        return float(0.5 * v @ self.H @ v + self.f @ v) + self.offset


def _constraint_pair(A, b, d, name):
    if A is None or np.size(A) == 0:
        return np.zeros((0, d)), np.zeros(0)
    A = np.asarray(A, dtype=float).reshape(-1, d)
    b = np.asarray(b, dtype=float).reshape(A.shape[0])
    return A, b


@dataclass
class QpSolution:
    v: np.ndarray
    objective: float
    kkt_residual: float
    iterations: int
    status: str
    y_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    y_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    certificate: float = 0.0
    admm_state: Optional[tuple] = None


def kkt_residual(p: QpProblem, v, y_ineq, y_eq) -> float:
    """Max of stationarity, primal, dual-sign and complementarity violations."""
    grad = p.H @ v + p.f + p.Aineq.T @ y_ineq + p.Aeq.T @ y_eq
    parts = [np.max(np.abs(grad), initial=0.0)]
    if p.Aineq.shape[0]:
        slack = p.Aineq @ v - p.bineq
        parts.append(np.max(slack, initial=0.0))
        parts.append(np.max(-y_ineq, initial=0.0))
        parts.append(np.max(np.abs(y_ineq * slack), initial=0.0))
    if p.Aeq.shape[0]:
        parts.append(np.max(np.abs(p.Aeq @ v - p.beq)))
    return float(max(parts))


def _solve_kkt(H, f, Aact, bact):
    d = H.shape[0]
    k = Aact.shape[0]
    K = np.zeros((d + k, d + k))
    K[:d, :d] = H
    K[:d, d:] = Aact.T
    K[d:, :d] = Aact
    rhs = np.concatenate([-f, bact])
    try:
        # redundant active rows make K singular; fall back to least squares
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            sol = scipy.linalg.solve(K, rhs, assume_a="sym")
        if not np.all(np.isfinite(sol)):
            raise np.linalg.LinAlgError
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    # one step of iterative refinement
    sol += np.linalg.lstsq(K, rhs - K @ sol, rcond=None)[0]
    return sol[:d], sol[d:]


def _polish(p: QpProblem, v, y_ineq, tol, max_rounds=25):
    """Active-set refinement starting from the ADMM guess."""
    if p.Aineq.shape[0]:
        slack = p.Aineq @ v - p.bineq
        active = (y_ineq > 1e-7) | (slack > -1e-7 * (1 + np.abs(p.bineq)))
    else:
        active = np.zeros(0, dtype=bool)
    q = p.Aeq.shape[0]
    best = None
    seen = set()
    for _ in range(max_rounds):
        key = active.tobytes()
        if key in seen:
            break
        seen.add(key)
        Aact = np.vstack([p.Aeq, p.Aineq[active]])
        bact = np.concatenate([p.beq, p.bineq[active]])
        v_new, lam = _solve_kkt(p.H, p.f, Aact, bact)
        y_eq = lam[:q]
        y_in = np.zeros(p.Aineq.shape[0])
        y_in[active] = lam[q:]
        res = kkt_residual(p, v_new, y_in, y_eq)
        if best is None or res < best[0]:
            best = (res, v_new, y_in, y_eq)
        if res <= tol:
            break
        slack = p.Aineq @ v_new - p.bineq if p.Aineq.shape[0] else np.zeros(0)
        worst_slack = int(np.argmax(slack)) if slack.size else -1
        worst_dual = int(np.argmin(y_in)) if y_in.size else -1
        viol = slack[worst_slack] if worst_slack >= 0 else 0.0
        neg = -y_in[worst_dual] if worst_dual >= 0 else 0.0
        if viol <= tol and neg <= tol:
            break
        active = active.copy()
        if viol >= neg:
            active[worst_slack] = True
        else:
            active[worst_dual] = False
    return best


def _infeasibility_certificate(p: QpProblem, dy, eps=1e-5) -> float:
    """Farkas test on the dual step ``dy``; positive return means infeasible.

    ``dy >= 0`` with ``Aineq' dy + Aeq' w = 0`` and ``bineq' dy + beq' w < 0``
    for some ``w`` proves the constraints inconsistent. Returns the
    normalized violation ``-(bineq' dy + beq' w) / ||dy||`` or 0.
    """
    scale = np.max(np.abs(dy), initial=0.0)
    if scale <= 1e-12:
        return 0.0
    dy = np.maximum(dy / scale, 0.0)
    g = p.Aineq.T @ dy
    rhs = p.bineq @ dy
    if p.Aeq.shape[0]:
        w = np.linalg.lstsq(p.Aeq.T, -g, rcond=None)[0]
        g = g + p.Aeq.T @ w
        rhs += p.beq @ w
    if np.max(np.abs(g), initial=0.0) <= eps and rhs < -eps:
        return float(-rhs)
    return 0.0


def qp_solve(p: QpProblem, tol: float = 1e-8, max_iter: int = 20000,
             warm_start: Optional[tuple] = None,
             trace: Optional[Callable[[int, np.ndarray, float, float], None]] = None) -> QpSolution:
    """Solve a convex QP.

    Parameters
    ----------
    p : QpProblem
    tol : float
        Bound on the reported KKT residual for ``status == "optimal"``.
    max_iter : int
        ADMM iteration budget.
    warm_start : tuple, optional
        ``(v, z, y)`` from a previous solve of a problem with the same
        constraint structure.
    trace : callable, optional
        Called as ``trace(iteration, v, objective, fixed_point_residual)``
        after each ADMM iteration, where the residual is the change in the
        splitting variable ``z + y/rho``; it is non-increasing. Forces the
        per-iteration path.

    Returns
    -------
    QpSolution
    """
    d = p.dim
    A, b = p.Aineq, p.bineq
    # drop rows with infinite bounds
    keep = np.isfinite(b)
    if not np.all(keep):
        p_reduced = QpProblem(p.H, p.f, A[keep], b[keep], p.Aeq, p.beq, p.offset)
        sol = qp_solve(p_reduced, tol, max_iter, None, trace)
        y_full = np.zeros(A.shape[0])
        y_full[keep] = sol.y_ineq
        sol.y_ineq = y_full
        return sol
    if p.Aeq.shape[0]:
        r_eq = np.linalg.matrix_rank(p.Aeq)
        if r_eq < p.Aeq.shape[0]:
            x_ls = np.linalg.lstsq(p.Aeq, p.beq, rcond=None)[0]
            if np.max(np.abs(p.Aeq @ x_ls - p.beq)) > tol:
                return QpSolution(x_ls, np.nan, np.inf, 0, INFEASIBLE,
                                  certificate=float(np.max(np.abs(p.Aeq @ x_ls - p.beq))))

    if A.shape[0] == 0:
        v, y_eq = _solve_kkt(p.H, p.f, p.Aeq, p.beq)
        y_in = np.zeros(0)
        res = kkt_residual(p, v, y_in, y_eq)
        status = OPTIMAL if res <= tol else MAX_ITER_STATUS
        if trace is not None:
            trace(1, v, p.objective(v), 0.0)
        return QpSolution(v, p.objective(v), res, 1, status, y_in, y_eq)

    q = p.Aeq.shape[0]
    K = np.zeros((d + q, d + q))
    K[:d, :d] = p.H + SIGMA * np.eye(d) + RHO * A.T @ A
    K[:d, d:] = p.Aeq.T
    K[d:, :d] = p.Aeq
    Kinv = np.linalg.inv(K)
    G = np.ascontiguousarray(Kinv[:d, :d])
    g0 = np.ascontiguousarray(Kinv[:d, d:] @ p.beq) if q else np.zeros(d)

    if warm_start is not None and len(warm_start[1]) == A.shape[0]:
        v = np.array(warm_start[0], dtype=float)
        z = np.array(warm_start[1], dtype=float)
        y = np.array(warm_start[2], dtype=float)
    else:
        v = np.zeros(d)
        z = np.minimum(A @ v, b)
        y = np.zeros(A.shape[0])
    A_c = np.ascontiguousarray(A)
    b_c = np.ascontiguousarray(b)
    f_c = np.ascontiguousarray(p.f)

    total = 0
    eps = max(tol, 1e-6)
    status_code = MAX_ITER
    best = None
    while total < max_iter:
        chunk = min(max_iter - total, 200 if best is None else 2000)
        if trace is None:
            it, status_code = kernels.admm_iterate(G, g0, A_c, b_c, f_c, v, z, y, RHO, SIGMA,
                                                   ALPHA, chunk, eps, DIVERGE_AFTER - total,
                                                   DIVERGE_LIMIT)
        else:
            it = 0
            status_code = MAX_ITER
            while it < chunk:
                zeta = z + y / RHO
                k, status_code = kernels.admm_iterate(G, g0, A_c, b_c, f_c, v, z, y, RHO, SIGMA,
                                                      ALPHA, 1, eps, DIVERGE_AFTER - total - it,
                                                      DIVERGE_LIMIT)
                it += k
                fp_res = float(np.linalg.norm(z + y / RHO - zeta))
                trace(total + it, v.copy(), p.objective(v), fp_res)
                if status_code != MAX_ITER:
                    break
        total += it
        if status_code in (DIVERGED, NONFINITE):
            break
        cand = _polish(p, v, y, tol)
        if cand is not None and (best is None or cand[0] < best[0]):
            best = cand
        if best is not None and best[0] <= tol:
            break
        y_before = y.copy()
        k, status_code = kernels.admm_iterate(G, g0, A_c, b_c, f_c, v, z, y, RHO, SIGMA, ALPHA,
                                              1, 0.0, DIVERGE_AFTER - total, DIVERGE_LIMIT)
        total += k
        cert = _infeasibility_certificate(p, y - y_before)
        if cert > 0:
            return QpSolution(v.copy(), p.objective(v), np.inf, total, INFEASIBLE,
                              y.copy(), np.zeros(q), certificate=cert)
        if status_code in (DIVERGED, NONFINITE):
            break
        if status_code == OK:
            eps = max(eps * 1e-2, 1e-12)
            if eps <= 1e-12 and best is not None:
                break

    if status_code == DIVERGED or status_code == NONFINITE:
        cert = float(np.max(A @ v - b, initial=0.0))
        return QpSolution(v.copy(), p.objective(v), np.inf, total, INFEASIBLE,
                          y.copy(), np.zeros(q), certificate=cert)
    res, v_out, y_in, y_eq = best
    status = OPTIMAL if res <= tol else MAX_ITER_STATUS
    sol = QpSolution(v_out, p.objective(v_out), res, total, status, y_in, y_eq)
    sol.admm_state = (v.copy(), z.copy(), y.copy())
    return sol
