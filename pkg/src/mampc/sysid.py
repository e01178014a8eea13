"""Deterministic subspace identification from input-output data."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .lti import LtiModel, simulate


class IdentificationError(ValueError):
    """Data cannot support the requested identification."""


@dataclass(frozen=True)
class IoDataset:
    """Deviation-variable data; ``mean_u``/``mean_y`` are the removed offsets."""

    u: np.ndarray
    y: np.ndarray
    dt: float
    mean_u: np.ndarray
    mean_y: np.ndarray

    def __post_init__(self):
        if self.u.shape[0] != self.y.shape[0]:
            raise ValueError(f"u has {self.u.shape[0]} rows but y has {self.y.shape[0]}")

    @property
    def T(self) -> int:
        return self.u.shape[0]

    def restore(self):
        """Absolute-valued ``(u, y)``."""
        return self.u + self.mean_u, self.y + self.mean_y


def _columns(a):
    a = np.asarray(a, dtype=float)
    return a[:, None] if a.ndim == 1 else a


def detrend(u, y, dt: float = 1.0) -> IoDataset:
    """Remove column means and record them."""
    u = _columns(u)
    y = _columns(y)
    if u.shape[0] < 1:
        raise ValueError("need at least one sample")
    if u.shape[0] != y.shape[0]:
        raise ValueError(f"u has {u.shape[0]} rows but y has {y.shape[0]}")
    mu = u.mean(axis=0)
    my = y.mean(axis=0)
    return IoDataset(u - mu, y - my, float(dt), mu, my)


def block_hankel(data, rows: int, cols: int) -> np.ndarray:
    """Block Hankel matrix with ``rows`` block rows of the (T x p) signal."""
    p = data.shape[1]
    H = np.empty((rows * p, cols))
    for r in range(rows):
        H[r * p:(r + 1) * p] = data[r:r + cols].T
    return H


def observability_svd(data: IoDataset, block_rows: int):
    """Singular values and left vectors of the oblique projection of future
    outputs onto past data along future inputs."""
    u, y = data.u, data.y
    m, l = u.shape[1], y.shape[1]
    i = block_rows
    j = data.T - 2 * i + 1
    if j < 2 * i * (m + l):
        raise IdentificationError(
            f"{data.T} samples are too few for {i} block rows (need >= {2 * i * (m + l) + 2 * i - 1})")
    U = block_hankel(u, 2 * i, j)
    Y = block_hankel(y, 2 * i, j)
    Up, Uf = U[:i * m], U[i * m:]
    Yp, Yf = Y[:i * l], Y[i * l:]
    if np.linalg.matrix_rank(U) < 2 * i * m:
        raise IdentificationError("input is not persistently exciting (input Hankel matrix is rank deficient)")
    Wp = np.vstack([Up, Yp])
    M = np.vstack([Uf, Wp, Yf]) / np.sqrt(j)
    R = np.linalg.qr(M.T, mode="r")
    L = R.T
    ru, rw = i * m, i * (m + l)
    L22 = L[ru:ru + rw, ru:ru + rw]
    L32 = L[ru + rw:, ru:ru + rw]
    L21 = L[ru:ru + rw, :ru]
    # oblique projection expressed in the orthonormal row basis
    Ob = L32 @ np.linalg.pinv(L22) @ np.hstack([L21, L22])
    Us, s, _ = np.linalg.svd(Ob, full_matrices=False)
    return s, Us


def select_order(singular_values, max_order: Optional[int] = None) -> int:
    """Order at the largest ratio between consecutive singular values."""
    s = np.asarray(singular_values, dtype=float)
    top = len(s) - 1 if max_order is None else min(max_order, len(s) - 1)
    tiny = np.finfo(float).tiny
    ratios = s[:top] / np.maximum(s[1:top + 1], tiny)
    return int(np.argmax(ratios)) + 1


def _fit_bd(A, C, u, y, estimate_d=True):
    """Least-squares B, D and initial state given A and C."""
    T, m = u.shape
    l, n = C.shape
    cols = n + n * m + (l * m if estimate_d else 0)
    Phi = np.zeros((T, l, cols))
    At = np.eye(n)
    Z = np.zeros((m, n, n))
    for t in range(T):
        Phi[t, :, :n] = C @ At
        for b in range(m):
            Phi[t, :, n + b * n:n + (b + 1) * n] = C @ Z[b]
        if estimate_d:
            for b in range(m):
                Phi[t, :, n + n * m + b * l:n + n * m + (b + 1) * l] = u[t, b] * np.eye(l)
        At = A @ At
        for b in range(m):
            Z[b] = A @ Z[b] + u[t, b] * np.eye(n)
    theta = np.linalg.lstsq(Phi.reshape(T * l, cols), y.reshape(-1), rcond=None)[0]
    x0 = theta[:n]
    B = theta[n:n + n * m].reshape(m, n).T
    D = theta[n + n * m:].reshape(m, l).T if estimate_d else np.zeros((l, m))
    return B, D, x0


def subspace_identify(data: IoDataset, order: Optional[int] = None,
                      block_rows: Optional[int] = None, rank_tol: float = 1e-10,
                      estimate_d: bool = True) -> LtiModel:
    """Identify a discrete LTI model in the dataset's deviation variables.

    Parameters
    ----------
    data : IoDataset
    order : int, optional
        Model order. Chosen at the largest singular-value gap when omitted.
    block_rows : int, optional
        Hankel block rows; defaults to ``2 * order + 2`` (or 10 when the
        order is to be selected).
    rank_tol : float
        Relative singular-value floor below which the order is rejected.
    """
    if not np.any(data.u):
        raise IdentificationError("input is identically zero; nothing excites the system")
    if block_rows is None:
        block_rows = 2 * order + 2 if order is not None else 10
    s, Us = observability_svd(data, block_rows)
    if order is None:
        order = select_order(s, max_order=block_rows - 1)
    if order >= block_rows:
        raise IdentificationError(f"order {order} needs more than {block_rows} block rows")
    if s[order - 1] <= rank_tol * s[0]:
        raise IdentificationError(
            f"order {order} exceeds the data rank: singular values {s[order - 1]:.3e} / {s[0]:.3e} "
            f"(largest gap after order {select_order(s, block_rows - 1)})")
    l = data.y.shape[1]
    Gam = Us[:, :order] * np.sqrt(s[:order])
    C = Gam[:l]
    A = np.linalg.lstsq(Gam[:-l], Gam[l:], rcond=None)[0]
    B, D, _ = _fit_bd(A, C, data.u, data.y, estimate_d)
    return LtiModel(A, B, C, D, data.dt)


def estimate_initial_state(model: LtiModel, u, y) -> np.ndarray:
    """Least-squares initial state explaining ``y`` under ``u``."""
    u = _columns(u)
    y = _columns(y)
    _, free = simulate(model, np.zeros(model.n), u)
    O = np.empty((u.shape[0] * model.l, model.n))
    At = np.eye(model.n)
    for t in range(u.shape[0]):
        O[t * model.l:(t + 1) * model.l] = model.C @ At
        At = model.A @ At
    return np.linalg.lstsq(O, (y - free).reshape(-1), rcond=None)[0]


def vaf(y, y_hat) -> np.ndarray:
    """Variance accounted for, per output, in percent."""
    y = _columns(y)
    y_hat = _columns(y_hat)
    return 100.0 * (1.0 - np.var(y - y_hat, axis=0) / np.var(y, axis=0))


def simulation_fit(model: LtiModel, u, y) -> np.ndarray:
    """VAF of a free-run simulation with the best-fitting initial state."""
    x0 = estimate_initial_state(model, u, y)
    _, y_hat = simulate(model, x0, _columns(u))
    return vaf(y, y_hat)
