"""Closed-loop logs, sparse density of input changes, and tracking error."""

from __future__ import annotations

import io
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClosedLoopLog:
    """One row per controller sample.

    Row ``k`` holds the reference and measured output at time ``k`` and the
    input applied over ``[k, k+1)``. ``u_init`` is the input held before
    the first row.
    """

    k: np.ndarray
    tag: list
    alt_iterations: np.ndarray
    objective: np.ndarray
    r: np.ndarray
    y: np.ndarray
    u: np.ndarray
    u_init: np.ndarray
    header: dict = field(default_factory=dict)
    max_ascent: np.ndarray = None

    def __post_init__(self):
        if self.max_ascent is None:
            self.max_ascent = np.zeros(len(self.k))
        if len(self.k) and np.any(np.diff(self.k) <= 0):
            raise ValueError("time index must increase monotonically")

    def __len__(self):
        return len(self.k)

    @property
    def m(self) -> int:
        return self.u.shape[1]

    @property
    def l(self) -> int:
        return self.y.shape[1]

    def input_changes(self) -> np.ndarray:
        """``u_k - u_{k-1}`` per row; row 0 uses ``u_init``."""
        prev = np.vstack([self.u_init.reshape(1, -1), self.u[:-1]])
        return self.u - prev

    def head(self, count: int) -> "ClosedLoopLog":
        return ClosedLoopLog(self.k[:count], self.tag[:count], self.alt_iterations[:count],
                             self.objective[:count], self.r[:count], self.y[:count],
                             self.u[:count], self.u_init, dict(self.header),
                             self.max_ascent[:count])

    # ------------------------------------------------------------- CSV I/O

    def to_csv(self) -> str:
        buf = io.StringIO()
        for key in sorted(self.header):
            buf.write(f"# {key} = {self.header[key]}\n")
        buf.write("# u_init = " + ",".join(fmt(v) for v in self.u_init) + "\n")
        cols = (["k", "controller", "alt_iterations", "objective", "max_ascent"]
                + [f"r{i + 1}" for i in range(self.l)] + [f"y{i + 1}" for i in range(self.l)]
                + [f"u{i + 1}" for i in range(self.m)])
        buf.write(",".join(cols) + "\n")
        for i in range(len(self)):
            row = [str(int(self.k[i])), self.tag[i], str(int(self.alt_iterations[i])),
                   fmt(self.objective[i]), fmt(self.max_ascent[i])]
            row += [fmt(v) for v in self.r[i]] + [fmt(v) for v in self.y[i]] + [fmt(v) for v in self.u[i]]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ClosedLoopLog":
        header = {}
        u_init = None
        rows = []
        cols = None
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].partition("=")
                key, value = key.strip(), value.strip()
                if key == "u_init":
                    u_init = np.array([float(v) for v in value.split(",")])
                else:
                    header[key] = value
            elif cols is None:
                cols = line.split(",")
            elif line:
                rows.append(line.split(","))
        if cols is None or u_init is None:
            raise ValueError("not a closed-loop log: missing header or u_init")
        l = sum(c.startswith("r") for c in cols)
        m = sum(c.startswith("u") and c[1:].isdigit() for c in cols)
        k = np.array([int(r[0]) for r in rows], dtype=int)
        tag = [r[1] for r in rows]
        alt = np.array([int(r[2]) for r in rows], dtype=int)
        num = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(len(rows), 2 + 2 * l + m)
        return cls(k, tag, alt, num[:, 0], num[:, 2:2 + l], num[:, 2 + l:2 + 2 * l],
                   num[:, 2 + 2 * l:], u_init, header, num[:, 1])


def fmt(x) -> str:
    """Fixed 12-significant-digit float formatting used in every CSV."""
    return format(float(x), ".12g")


def _window(log: ClosedLoopLog, drop: int) -> slice:
    if drop < 0:
        raise ValueError("drop must be >= 0")
    if drop >= len(log):
        raise ValueError(f"drop={drop} leaves an empty window in a log of {len(log)} rows")
    return slice(drop, None)


def sparse_density(log: ClosedLoopLog, channel: int, threshold: float = 0.1,
                   drop: int = 0) -> float:
    """Fraction of retained steps whose input change exceeds ``threshold``."""
    du = log.input_changes()[_window(log, drop), channel]
    return float(np.count_nonzero(np.abs(du) > threshold) / du.size)


def tracking_error(log: ClosedLoopLog, drop: int = 0) -> float:
    """Mean over retained steps of the squared output-error norm."""
    w = _window(log, drop)
    e = log.y[w] - log.r[w]
    return float(np.mean(np.sum(e ** 2, axis=1)))


def summarize(log: ClosedLoopLog, threshold: float = 0.1, drop: int = 0) -> dict:
    out = {f"density_u{c + 1}": sparse_density(log, c, threshold, drop) for c in range(log.m)}
    out["tracking_error"] = tracking_error(log, drop)
    return out
