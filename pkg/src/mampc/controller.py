"""Minimum attention MPC and the standard MPC baseline.

Decision vector layout (``StackedInput``): channel-major, so entries
``c*(n_c+n_s) .. (c+1)*(n_c+n_s)-1`` hold channel ``c`` at times
``k-n_s, ..., k+n_c-1``. The first ``n_s`` entries of each channel are the
previously applied inputs and are pinned by equality constraints.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .lti import LtiModel, lift
from .qpcore import INFEASIBLE, OPTIMAL, QpInfeasibleError, QpProblem, qp_solve

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class HorizonConfig:
    """Controller tuning.

    Bounds may be scalars (broadcast over channels) or per-channel
    sequences; infinite bounds are dropped from the QP. ``mu=None`` means
    ``10 * lam``.
    """

    n_p: int = 10
    n_c: int = 5
    n_s: int = 1
    s: int = 3
    lam: float = 1.0
    mu: Optional[float] = None
    u_min: object = -np.inf
    u_max: object = np.inf
    y_min: object = -np.inf
    y_max: object = np.inf
    eps1: float = 1e-4
    max_alt_iter: int = 50
    count_past_differences: bool = True
    warm_start: bool = False
    qp_tol: float = 1e-8
    descent_tol: float = 1e-9

    def __post_init__(self):
        if not (1 <= self.n_c <= self.n_p):
            raise ValueError(f"need 1 <= n_c <= n_p, got n_c={self.n_c}, n_p={self.n_p}")
        if self.n_s < 0:
            raise ValueError(f"n_s must be >= 0, got {self.n_s}")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.mu is not None and self.mu < 0:
            raise ValueError(f"mu must be >= 0, got {self.mu}")
        if self.eps1 <= 0:
            raise ValueError("eps1 must be positive")
        if self.max_alt_iter < 1:
            raise ValueError("max_alt_iter must be >= 1")
        if np.any(np.asarray(self.u_min, float) >= np.asarray(self.u_max, float)):
            raise ValueError("u_min must be < u_max componentwise")
        if np.any(np.asarray(self.y_min, float) >= np.asarray(self.y_max, float)):
            raise ValueError("y_min must be < y_max componentwise")

    @property
    def mu_value(self) -> float:
        return 10.0 * self.lam if self.mu is None else float(self.mu)

    def window(self) -> int:
        return self.n_c + self.n_s

    def check_sparsity(self, m: int) -> None:
        if self.s > m * (self.window() - 1):
            raise ValueError(f"s={self.s} exceeds m*(n_c+n_s-1)={m * (self.window() - 1)}")

    def input_bounds(self, m):
        return (np.broadcast_to(np.asarray(self.u_min, float), (m,)).copy(),
                np.broadcast_to(np.asarray(self.u_max, float), (m,)).copy())

    def output_bounds(self, l):
        return (np.broadcast_to(np.asarray(self.y_min, float), (l,)).copy(),
                np.broadcast_to(np.asarray(self.y_max, float), (l,)).copy())

    def shifted(self, **changes) -> "HorizonConfig":
        return replace(self, **changes)


class StackedInput:
    """Channel-major decision vector over the window ``[k-n_s, k+n_c-1]``."""

    def __init__(self, v, m: int, n_c: int, n_s: int):
        v = np.asarray(v, dtype=float).reshape(-1)
        if v.size != m * (n_c + n_s):
            raise ValueError(f"expected length {m * (n_c + n_s)}, got {v.size}")
        self.v = v
        self.m, self.n_c, self.n_s = m, n_c, n_s

    @classmethod
    def from_blocks(cls, past, free):
        """Build from time-major ``past`` (n_s x m) and ``free`` (n_c x m)."""
        past = np.asarray(past, dtype=float).reshape(-1, np.shape(free)[1])
        free = np.asarray(free, dtype=float)
        m = free.shape[1]
        return cls(np.vstack([past, free]).T.reshape(-1), m, free.shape[0], past.shape[0])

    def as_matrix(self) -> np.ndarray:
        """Time-major (n_s + n_c) x m view of the window."""
        return self.v.reshape(self.m, self.n_c + self.n_s).T

    @property
    def past(self) -> np.ndarray:
        return self.as_matrix()[: self.n_s]

    @property
    def free(self) -> np.ndarray:
        return self.as_matrix()[self.n_s:]

    def __repr__(self):
        return f"StackedInput(m={self.m}, n_c={self.n_c}, n_s={self.n_s}, v={self.v!r})"


@dataclass
class AttentionStepResult:
    u_applied: np.ndarray
    v_star: StackedInput
    v_hat: np.ndarray
    alt_iterations: int
    objective_trace: list
    converged: bool
    half_step_trace: list = field(default_factory=list)
    max_ascent: float = 0.0
    qp_iterations: int = 0

    @property
    def objective(self) -> float:
        return self.objective_trace[-1]


def build_difference_matrix(m: int, n_c: int, n_s: int) -> np.ndarray:
    """Block-diagonal successive-difference operator, one block per channel."""
    N = n_c + n_s
    if N < 2:
        raise ValueError(f"n_c + n_s must be >= 2, got {N}")
    block = np.zeros((N - 1, N))
    idx = np.arange(N - 1)
    block[idx, idx] = -1.0
    block[idx, idx + 1] = 1.0
    return np.kron(np.eye(m), block)


def best_s_sparse(w, s: int) -> np.ndarray:
    """Keep the ``s`` largest-magnitude entries of ``w`` and zero the rest.

    Ties are broken toward the lower index.
    """
    w = np.asarray(w, dtype=float)
    if not (0 <= s <= w.size):
        raise ValueError(f"need 0 <= s <= {w.size}, got {s}")
    out = np.zeros_like(w)
    if s:
        keep = np.argsort(-np.abs(w), kind="stable")[:s]
        out[keep] = w[keep]
    return out


def _sparsity_rows(cfg: HorizonConfig, m: int) -> np.ndarray:
    """Rows of the difference matrix that count toward the sparsity budget."""
    Psi = build_difference_matrix(m, cfg.n_c, cfg.n_s)
    if cfg.count_past_differences or cfg.n_s < 2:
        return Psi
    N = cfg.window()
    keep = [c * (N - 1) + t for c in range(m) for t in range(N - 1) if t + 1 >= cfg.n_s]
    return Psi[keep]


def _free_selector(m, n_c, n_s):
    """Map the channel-major window to the time-major free-input vector."""
    N = n_c + n_s
    S = np.zeros((n_c * m, m * N))
    for j in range(n_c):
        for c in range(m):
            S[j * m + c, c * N + n_s + j] = 1.0
    return S


def _reference_stack(r, n_p, l):
    r = np.asarray(r, dtype=float)
    if r.ndim == 1:
        r = np.tile(r.reshape(1, l), (n_p, 1)) if r.size == l else r.reshape(n_p, l)
    if r.shape != (n_p, l):
        raise ValueError(f"reference must be {n_p} x {l}, got {r.shape}")
    return r.reshape(-1)


def _assemble(model: LtiModel, cfg: HorizonConfig, x0, r, past, v_hat, mu, u_prev):
    m, l = model.m, model.l
    n_p, n_c, n_s = cfg.n_p, cfg.n_c, cfg.n_s
    N = n_c + n_s
    d = m * N
    x0 = np.asarray(x0, dtype=float).reshape(model.n)
    if not np.all(np.isfinite(x0)):
        raise ValueError("initial state must be finite")
    past = np.asarray(past, dtype=float).reshape(-1, m) if n_s else np.zeros((0, m))
    if past.shape[0] != n_s:
        raise ValueError(f"past must have exactly n_s={n_s} rows, got {past.shape[0]}")

    pred = lift(model, n_p, n_c)
    S = _free_selector(m, n_c, n_s)
    Gs = pred.Gamma @ S
    e = _reference_stack(r, n_p, l) - pred.Phi @ x0

    H = 2.0 * Gs.T @ Gs
    f = -2.0 * Gs.T @ e
    offset = float(e @ e)

    # input-change penalty over the free window; the change into u_k uses u_prev
    rows = []
    consts = []
    if u_prev is not None:
        u_prev = np.asarray(u_prev, dtype=float).reshape(m)
    for j in range(n_c):
        for c in range(m):
            row = np.zeros(d)
            row[c * N + n_s + j] = 1.0
            if j == 0:
                if u_prev is None:
                    continue
                consts.append(u_prev[c])
            else:
                row[c * N + n_s + j - 1] = -1.0
                consts.append(0.0)
            rows.append(row)
    if rows and cfg.lam:
        L = np.array(rows)
        cvec = np.array(consts)
        H = H + 2.0 * cfg.lam * L.T @ L
        f = f - 2.0 * cfg.lam * L.T @ cvec
        offset += cfg.lam * float(cvec @ cvec)

    if mu:
        Psi = _sparsity_rows(cfg, m)
        v_hat = np.asarray(v_hat, dtype=float).reshape(Psi.shape[0])
        H = H + 2.0 * mu * Psi.T @ Psi
        f = f - 2.0 * mu * Psi.T @ v_hat
        offset += mu * float(v_hat @ v_hat)

    Aeq = np.zeros((m * n_s, d))
    beq = np.zeros(m * n_s)
    for c in range(m):
        for t in range(n_s):
            Aeq[c * n_s + t, c * N + t] = 1.0
            beq[c * n_s + t] = past[t, c]

    umin, umax = cfg.input_bounds(m)
    ymin, ymax = cfg.output_bounds(l)
    free0 = pred.Phi @ x0
    Aineq = np.vstack([S, -S, Gs, -Gs])
    bineq = np.concatenate([
        np.tile(umax, n_c), -np.tile(umin, n_c),
        np.tile(ymax, n_p) - free0, -(np.tile(ymin, n_p) - free0),
    ])
    keep = np.isfinite(bineq)
    return QpProblem(H, f, Aineq[keep], bineq[keep], Aeq, beq, offset)


def assemble_first_step(model: LtiModel, cfg: HorizonConfig, x0, r, past, v_hat,
                        u_prev=None) -> QpProblem:
    """QP over the stacked window for a fixed sparse estimate ``v_hat``.

    The QP objective (``offset`` included) equals tracking error over
    ``y_{k+1..k+n_p}`` + ``lam`` * input changes over the free window +
    ``mu`` * ``||v_hat - Psi v||^2``. ``u_prev`` defaults to the last past
    input; with ``n_s == 0`` and no ``u_prev`` the change into ``u_k`` is
    not penalized.
    """
    if u_prev is None and cfg.n_s:
        u_prev = np.asarray(past, dtype=float).reshape(-1, model.m)[-1]
    return _assemble(model, cfg, x0, r, past, v_hat, cfg.mu_value, u_prev)


def _explicit_objective(model, cfg, x0, r, v, v_hat, u_prev):
    """Objective from residuals, independent of the assembled QP matrices."""
    m, N = model.m, cfg.window()
    pred = lift(model, cfg.n_p, cfg.n_c)
    W = v.reshape(m, N).T
    free = W[cfg.n_s:]
    y = pred.predict(x0, free.reshape(-1))
    track = float(np.sum((_reference_stack(r, cfg.n_p, model.l) - y) ** 2))
    du = np.diff(free, axis=0)
    chg = float(np.sum(du ** 2))
    if u_prev is not None:
        chg += float(np.sum((free[0] - u_prev) ** 2))
    total = track + cfg.lam * chg
    mu = cfg.mu_value
    if mu:
        Psi = _sparsity_rows(cfg, m)
        total += mu * float(np.sum((v_hat - Psi @ v) ** 2))
    return total


def _solve_or_raise(qp, tol, warm=None):
    sol = qp_solve(qp, tol=tol, warm_start=warm)
    if sol.status == INFEASIBLE:
        raise QpInfeasibleError(f"QP infeasible (certificate residual {sol.certificate:.3g})")
    if sol.status != OPTIMAL:
        logger.warning("QP stopped at %s with KKT residual %.3g", sol.status, sol.kkt_residual)
    return sol


def mampc_step(model: LtiModel, cfg: HorizonConfig, x0, r, past, v_hat0=None,
               u_prev=None) -> AttentionStepResult:
    """One receding-horizon step of the alternating minimization.

    Alternates the QP in the stacked inputs with the best ``s``-sparse
    approximation of their successive differences until the stacked input
    moves by at most ``eps1`` in the 1-norm, or ``max_alt_iter`` rounds.
    """
    m = model.m
    cfg.check_sparsity(m)
    N = cfg.window()
    past = np.asarray(past, dtype=float).reshape(-1, m) if cfg.n_s else np.zeros((0, m))
    if u_prev is None and cfg.n_s:
        u_prev = past[-1]
    Psi = _sparsity_rows(cfg, m)
    s = min(cfg.s, Psi.shape[0])
    v_hat = np.zeros(Psi.shape[0]) if v_hat0 is None else np.asarray(v_hat0, float).reshape(-1)

    half = []
    trace = []
    v_prev = None
    warm = None
    converged = False
    qp_iters = 0
    it = 0
    v = None
    for it in range(1, cfg.max_alt_iter + 1):
        qp = _assemble(model, cfg, x0, r, past, v_hat, cfg.mu_value, u_prev)
        sol = _solve_or_raise(qp, cfg.qp_tol, warm)
        warm = sol.admm_state
        qp_iters += sol.iterations
        v = sol.v
        if cfg.n_s:
            # the pinned block is exact up to round-off; snap it
            v = v.copy()
            for c in range(m):
                v[c * N:c * N + cfg.n_s] = past[:, c]
        half.append(qp.objective(v))
        v_hat = best_s_sparse(Psi @ v, s)
        half.append(_explicit_objective(model, cfg, x0, r, v, v_hat, u_prev))
        trace.append(half[-1])
        if v_prev is not None and np.sum(np.abs(v - v_prev)) <= cfg.eps1:
            converged = True
            break
        v_prev = v

    steps = np.diff(half)
    scale = max(1.0, abs(half[0]))
    max_ascent = float(np.max(steps, initial=0.0))
    if max_ascent > cfg.descent_tol * scale:
        raise AssertionError(
            f"alternating minimization ascended by {max_ascent:.3e} (tolerance {cfg.descent_tol * scale:.1e})")
    vs = StackedInput(v, m, cfg.n_c, cfg.n_s)
    return AttentionStepResult(
        u_applied=vs.free[0].copy(), v_star=vs, v_hat=v_hat, alt_iterations=it,
        objective_trace=trace, converged=converged, half_step_trace=half,
        max_ascent=max_ascent, qp_iterations=qp_iters)


def mpc_qp(model: LtiModel, cfg: HorizonConfig, x0, r, u_prev) -> QpProblem:
    """Baseline MPC QP: no sparsity window, no coupling term."""
    base = cfg.shifted(n_s=0)
    return _assemble(model, base, x0, r, np.zeros((0, model.m)), None, 0.0, u_prev)


def mpc_solve(model: LtiModel, cfg: HorizonConfig, x0, r, u_prev):
    qp = mpc_qp(model, cfg, x0, r, u_prev)
    sol = _solve_or_raise(qp, cfg.qp_tol)
    # n_s = 0: the first m entries of each channel block are u_k
    N = cfg.n_c
    u = np.array([sol.v[c * N] for c in range(model.m)])
    return u, sol, qp.objective(sol.v)


def mpc_step(model: LtiModel, cfg: HorizonConfig, x0, r, u_prev) -> np.ndarray:
    """Standard MPC input: tracking plus ``lam`` times squared input changes."""
    return mpc_solve(model, cfg, x0, r, u_prev)[0]


class ClosedLoopError(RuntimeError):
    """Failure inside the receding-horizon loop; carries the partial log."""

    def __init__(self, step, message, log=None):
        super().__init__(f"step {step}: {message}")
        self.step = step
        self.log = log


def _reference_at(r_trajectory, k, l):
    if callable(r_trajectory):
        return np.asarray(r_trajectory(k), dtype=float).reshape(l)
    r = np.asarray(r_trajectory, dtype=float).reshape(len(r_trajectory), l)
    return r[min(k, len(r) - 1)]


def closed_loop(plant, model: LtiModel, cfg: HorizonConfig, r_trajectory, N: int,
                bootstrap: int, *, x0_plant, u_init, u_offset=None, y_offset=None,
                controller: str = "mampc", header: Optional[dict] = None):
    """Receding-horizon simulation of ``plant`` under MPC or MAMPC.

    The controller model works in deviation variables (``u - u_offset``,
    ``y - y_offset``). Its state is propagated from the applied inputs and
    a constant output bias ``y_meas - y_model`` corrects the predictions.
    MAMPC runs MPC for the first ``bootstrap`` steps to fill the window of
    past inputs.

    Parameters
    ----------
    plant : PlantModel
        Advanced by ``model.dt`` per step.
    r_trajectory : array (>= N rows, l) or callable k -> l-vector
        Absolute-valued reference.
    """
    from .metrics import ClosedLoopLog

    if controller not in ("mpc", "mampc"):
        raise ValueError(f"unknown controller {controller!r}")
    if controller == "mampc" and bootstrap < cfg.n_s:
        raise ValueError(f"bootstrap={bootstrap} must be >= n_s={cfg.n_s}")
    if controller == "mampc":
        cfg.check_sparsity(model.m)
    m, l = model.m, model.l
    u_off = np.zeros(m) if u_offset is None else np.asarray(u_offset, float).reshape(m)
    y_off = np.zeros(l) if y_offset is None else np.asarray(y_offset, float).reshape(l)
    u_applied = np.asarray(u_init, dtype=float).reshape(m)
    x_plant = np.asarray(x0_plant, dtype=float)
    try:
        x_model = model.steady_state(u_applied - u_off)
    except np.linalg.LinAlgError:
        x_model = np.zeros(model.n)

    rows = {"k": [], "tag": [], "alt": [], "obj": [], "r": [], "y": [], "u": [], "asc": []}
    history = []
    v_prev = None

    def partial_log():
        return ClosedLoopLog(np.array(rows["k"], dtype=int), list(rows["tag"]),
                             np.array(rows["alt"], dtype=int), np.array(rows["obj"]),
                             np.array(rows["r"]).reshape(-1, l), np.array(rows["y"]).reshape(-1, l),
                             np.array(rows["u"]).reshape(-1, m), np.asarray(u_init, float).reshape(m),
                             dict(header or {}), np.array(rows["asc"]))

    for k in range(N):
        y_meas = np.asarray(plant.output(x_plant, u_applied), dtype=float).reshape(l)
        if not np.all(np.isfinite(y_meas)):
            raise ClosedLoopError(k, "plant output is not finite", partial_log())
        bias = (y_meas - y_off) - (model.C @ x_model + model.D @ (u_applied - u_off))
        r_now = _reference_at(r_trajectory, k, l)
        r_pred = np.array([_reference_at(r_trajectory, k + i, l) for i in range(1, cfg.n_p + 1)])
        r_dev = r_pred - y_off - bias
        u_prev_dev = u_applied - u_off
        umin, umax = cfg.input_bounds(m)
        ymin, ymax = cfg.output_bounds(l)
        cfg_dev = cfg.shifted(u_min=umin - u_off, u_max=umax - u_off,
                              y_min=ymin - y_off - bias, y_max=ymax - y_off - bias)
        try:
            if controller == "mpc" or k < bootstrap:
                u_dev, _, obj = mpc_solve(model, cfg_dev, x_model, r_dev, u_prev_dev)
                tag, alt, asc = "mpc", 0, 0.0
                v_prev = None
            else:
                past = (np.array(history[-cfg.n_s:]) - u_off) if cfg.n_s else np.zeros((0, m))
                v_hat0 = None
                if cfg.warm_start and v_prev is not None:
                    W = v_prev.as_matrix()
                    shifted = np.vstack([W[1:], W[-1:]])
                    v_hat0 = _sparsity_rows(cfg, m) @ shifted.T.reshape(-1)
                res = mampc_step(model, cfg_dev, x_model, r_dev, past, v_hat0=v_hat0, u_prev=u_prev_dev)
                u_dev, tag, alt, obj, asc = res.u_applied, "mampc", res.alt_iterations, res.objective, res.max_ascent
                v_prev = res.v_star
        except (QpInfeasibleError, AssertionError, ValueError) as exc:
            raise ClosedLoopError(k, str(exc), partial_log()) from exc

        u_new = u_dev + u_off
        rows["k"].append(k)
        rows["tag"].append(tag)
        rows["alt"].append(alt)
        rows["obj"].append(obj)
        rows["r"].append(r_now)
        rows["y"].append(y_meas)
        rows["u"].append(u_new)
        rows["asc"].append(asc)
        history.append(u_new)
        u_applied = u_new
        try:
            x_plant = plant.advance(x_plant, u_applied, model.dt)
        except Exception as exc:
            raise ClosedLoopError(k, f"plant simulation failed: {exc}", partial_log()) from exc
        if not np.all(np.isfinite(x_plant)):
            raise ClosedLoopError(k, "plant state is not finite", partial_log())
        x_model = model.A @ x_model + model.B @ (u_applied - u_off)
    return partial_log()
