"""Discrete-time linear state-space models and horizon lifting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg


def _as_matrix(name, M, shape=None):
    M = np.atleast_2d(np.asarray(M, dtype=float))
    if M.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={M.ndim}")
    if shape is not None and M.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise ValueError(f"{name} contains non-finite entries")
    return M


@dataclass(frozen=True)
class LtiModel:
    """Discrete-time model ``x+ = A x + B u``, ``y = C x + D u``.

    Attributes
    ----------
    A, B, C, D : ndarray
        System matrices with shapes (n, n), (n, m), (l, n), (l, m).
    dt : float
        Sample time in seconds.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    dt: float = 1.0

    def __post_init__(self):
        A = _as_matrix("A", self.A)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError(f"A must be square, got {A.shape}")
        B = np.asarray(self.B, dtype=float).reshape(n, -1)
        B = _as_matrix("B", B)
        m = B.shape[1]
        C = _as_matrix("C", np.asarray(self.C, dtype=float).reshape(-1, n))
        l = C.shape[0]
        D = _as_matrix("D", np.asarray(self.D, dtype=float).reshape(l, m), (l, m))
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        for name, M in zip("ABCD", (A, B, C, D)):
            M.setflags(write=False)
            object.__setattr__(self, name, M)
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def l(self) -> int:
        return self.C.shape[0]

    def markov_parameters(self, count: int) -> np.ndarray:
        """Impulse response ``D, CB, CAB, ...`` stacked as (count, l, m)."""
        out = np.empty((count, self.l, self.m))
        out[0] = self.D
        X = self.B.copy()
        for k in range(1, count):
            out[k] = self.C @ X
            X = self.A @ X
        return out

    def steady_state(self, u) -> np.ndarray:
        """State reached under constant input ``u`` (requires ``I - A`` invertible)."""
        u = np.asarray(u, dtype=float).reshape(self.m)
        return np.linalg.solve(np.eye(self.n) - self.A, self.B @ u)


@dataclass(frozen=True)
class LiftedPrediction:
    """Affine map ``y_stack = Phi @ x0 + Gamma @ u_free``.

    Rows are time-major: block ``i`` (``l`` rows) is the output at step
    ``k+1+i``. Columns of ``Gamma`` are time-major over the ``n_c`` free
    inputs; the last free input is held for the rest of the horizon.
    """

    Phi: np.ndarray
    Gamma: np.ndarray
    n_p: int
    n_c: int

    def predict(self, x0, u_free) -> np.ndarray:
        u_free = np.asarray(u_free, dtype=float).reshape(-1)
        return self.Phi @ np.asarray(x0, dtype=float) + self.Gamma @ u_free


def zoh_discretize(Ac, Bc, Cc, Dc, dt: float) -> LtiModel:
    """Zero-order-hold discretization via the augmented matrix exponential."""
    Ac = _as_matrix("Ac", Ac)
    n = Ac.shape[0]
    Bc = _as_matrix("Bc", np.asarray(Bc, dtype=float).reshape(n, -1))
    Cc = _as_matrix("Cc", np.asarray(Cc, dtype=float).reshape(-1, n))
    Dc = _as_matrix("Dc", np.asarray(Dc, dtype=float).reshape(Cc.shape[0], Bc.shape[1]))
    if not (np.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be positive, got {dt}")
    m = Bc.shape[1]
    M = np.zeros((n + m, n + m))
    M[:n, :n] = Ac
    M[:n, n:] = Bc
    E = scipy.linalg.expm(M * dt)
    return LtiModel(E[:n, :n], E[:n, n:], Cc.copy(), Dc.copy(), dt)


def simulate(model: LtiModel, x0, u):
    """Run the state recursion from ``x0`` under the input sequence ``u``.

    Returns ``(states, outputs)`` where ``states[t]`` is ``x_t`` (so
    ``states[0] == x0``) and ``outputs[t] = C x_t + D u_t``.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, model.m) if model.m > 1 else u[:, None]
    if u.shape[1] != model.m:
        raise ValueError(f"u must have {model.m} columns, got {u.shape[1]}")
    x = np.asarray(x0, dtype=float).reshape(model.n).copy()
    T = u.shape[0]
    states = np.empty((T, model.n))
    outputs = np.empty((T, model.l))
    for t in range(T):
        states[t] = x
        outputs[t] = model.C @ x + model.D @ u[t]
        x = model.A @ x + model.B @ u[t]
    return states, outputs


def lift(model: LtiModel, n_p: int, n_c: int) -> LiftedPrediction:
    """Stack predicted outputs ``y_{k+1..k+n_p}`` as an affine map.

    Inputs ``u_k .. u_{k+n_c-1}`` are free and ``u_{k+n_c-1}`` is held
    from step ``k+n_c`` onward.
    """
    if not (1 <= n_c <= n_p):
        raise ValueError(f"need 1 <= n_c <= n_p, got n_c={n_c}, n_p={n_p}")
    n, m, l = model.n, model.m, model.l
    A, B, C, D = model.A, model.B, model.C, model.D
    Phi = np.empty((n_p * l, n))
    Gamma = np.zeros((n_p * l, n_c * m))
    # S[:, j-block] = d x_{k+i} / d u_free_j, propagated step by step
    S = np.zeros((n, n_c * m))
    Ai = np.eye(n)
    for i in range(1, n_p + 1):
        j_prev = min(i - 1, n_c - 1)
        S = A @ S
        S[:, j_prev * m:(j_prev + 1) * m] += B
        Ai = A @ Ai
        rows = slice((i - 1) * l, i * l)
        Phi[rows] = C @ Ai
        Gamma[rows] = C @ S
        j_now = min(i, n_c - 1)
        Gamma[rows, j_now * m:(j_now + 1) * m] += D
    return LiftedPrediction(Phi, Gamma, n_p, n_c)
