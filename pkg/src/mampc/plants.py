"""Nonlinear truth models: quadruple tank and SOFC stack, RK4, PRBS."""

from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, replace
from typing import Optional

import numpy as np
import scipy.optimize

from . import _kernels_py
from ._backend import kernels
from .lti import LtiModel


class PlantError(RuntimeError):
    """Raised when a simulation leaves the model's domain."""


class PlantModel:
    """Continuous-time plant ``dx/dt = f(x, u)``, ``y = g(x, u)``.

    Subclasses set ``n_x``, ``n_u``, ``n_y`` and implement ``derivative``
    and ``output``; ``advance`` integrates with RK4 in substeps of at most
    ``dt_int`` seconds.
    """

    n_x: int
    n_u: int
    n_y: int
    dt_int: float = 0.01

    def derivative(self, x, u):
        raise NotImplementedError

    def output(self, x, u):
        raise NotImplementedError

    def substeps(self, dt):
        return max(1, int(math.ceil(dt / self.dt_int - 1e-9)))

    def advance(self, x, u, dt):
        n = self.substeps(dt)
        h = dt / n
        for _ in range(n):
            x = rk4_step(self, x, u, h)
        return x

    def describe(self) -> dict:
        return {}


def rk4_step(plant: PlantModel, x, u, dt):
    """One classical Runge-Kutta step with ``u`` held over the step."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    x = np.asarray(x, dtype=float)
    k1 = plant.derivative(x, u)
    k2 = plant.derivative(x + 0.5 * dt * k1, u)
    k3 = plant.derivative(x + 0.5 * dt * k2, u)
    k4 = plant.derivative(x + dt * k3, u)
    x_next = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x_next)):
        raise PlantError("non-finite state in RK4 step")
    return x_next


class LinearPlant(PlantModel):
    """Continuous LTI plant ``dx/dt = Ac x + Bc u``, ``y = Cc x + Dc u``."""

    def __init__(self, Ac, Bc, Cc, Dc, dt_int=0.01):
        self.Ac = np.atleast_2d(np.asarray(Ac, float))
        self.Bc = np.asarray(Bc, float).reshape(self.Ac.shape[0], -1)
        self.Cc = np.asarray(Cc, float).reshape(-1, self.Ac.shape[0])
        self.Dc = np.asarray(Dc, float).reshape(self.Cc.shape[0], self.Bc.shape[1])
        self.n_x, self.n_u, self.n_y = self.Ac.shape[0], self.Bc.shape[1], self.Cc.shape[0]
        self.dt_int = dt_int

    def derivative(self, x, u):
        return self.Ac @ x + self.Bc @ np.asarray(u, float)

    def output(self, x, u):
        return self.Cc @ x + self.Dc @ np.asarray(u, float)


class DiscretePlant(PlantModel):
    """Wrap a discrete ``LtiModel`` as a plant advanced by exact recursion."""

    def __init__(self, model: LtiModel):
        self.model = model
        self.n_x, self.n_u, self.n_y = model.n, model.m, model.l
        self.dt_int = model.dt

    def advance(self, x, u, dt):
        if not math.isclose(dt, self.model.dt):
            raise ValueError("a discrete plant only advances by its own sample time")
        return self.model.A @ x + self.model.B @ np.asarray(u, float)

    def output(self, x, u):
        return self.model.C @ x + self.model.D @ np.asarray(u, float)


# ---------------------------------------------------------------- quadruple tank

@dataclass(frozen=True)
class TankParams:
    """Quadruple tank constants (cm, s). Pump gains must be calibrated."""

    A: tuple = (730.0, 730.0, 730.0, 730.0)
    a: tuple = (2.05, 2.26, 2.37, 2.07)
    g: float = 981.0
    k_c: float = 2.0
    gamma1: float = 0.3
    gamma2: float = 0.3
    k1: Optional[float] = None
    k2: Optional[float] = None

    def __post_init__(self):
        if min(self.A) <= 0 or min(self.a) <= 0:
            raise ValueError("tank and outlet areas must be positive")
        if not (0 < self.gamma1 < 1 and 0 < self.gamma2 < 1):
            raise ValueError("flow-split ratios must lie in (0, 1)")

    @property
    def minimum_phase(self) -> bool:
        return self.gamma1 + self.gamma2 < 1.0

    def packed(self) -> np.ndarray:
        if self.k1 is None or self.k2 is None:
            raise ValueError("pump gains k1, k2 are not set; run calibrate_pump_gains")
        return np.array([*self.A, *self.a, self.g, self.gamma1, self.gamma2, self.k1, self.k2])


TANK_NOMINAL_INPUT = np.array([50.0, 50.0])
TANK_NOMINAL_LEVELS = np.array([16.3, 13.7, 6.0, 8.1])


def tank_derivative(h, nu, p: TankParams) -> np.ndarray:
    """Level rates (cm/s) for valve openings ``nu`` (%); levels clamped at 0."""
    nu = np.asarray(nu, dtype=float)
    if np.any(nu < 0):
        raise ValueError(f"valve openings must be non-negative, got {nu}")
    return _kernels_py.tank_deriv(np.asarray(h, dtype=float), nu, p.packed())


def _tank_steady_levels(p: TankParams, nu, k1, k2):
    f1, f2 = k1 * nu[0], k2 * nu[1]
    q3 = (1 - p.gamma2) * f2
    q4 = (1 - p.gamma1) * f1
    q = np.array([q3 + p.gamma1 * f1, q4 + p.gamma2 * f2, q3, q4])
    return (q / np.asarray(p.a)) ** 2 / (2 * p.g)


def calibrate_pump_gains(p: TankParams, nu_ss, h_ss, method: str = "levels",
                         tol: float = 0.01):
    """Pump gains that make ``(h_ss, nu_ss)`` a steady state.

    ``method="balance"`` solves the lower-tank balances exactly,
    ``k2 = a3 sqrt(2 g h3) / ((1 - gamma2) nu2)`` and likewise for ``k1``.
    ``method="levels"`` (default) fits both gains so the steady-state
    levels they imply are closest to ``h_ss`` in least squares, starting
    from the balance solution. The four balances over-determine two gains;
    a warning reports the largest remaining level-rate residual when it
    exceeds ``tol`` (cm/s).
    """
    nu_ss = np.asarray(nu_ss, dtype=float)
    h_ss = np.asarray(h_ss, dtype=float)
    if np.any(nu_ss <= 0):
        raise ValueError("steady-state valve openings must be positive")
    if np.any(h_ss < 0):
        raise ValueError("steady-state levels must be non-negative")
    root = np.sqrt(2 * p.g * h_ss)
    a = np.asarray(p.a)
    with np.errstate(divide="ignore"):
        k2 = a[2] * root[2] / ((1 - p.gamma2) * nu_ss[1])
        k1 = a[3] * root[3] / ((1 - p.gamma1) * nu_ss[0])
    if not (np.isfinite(k1) and np.isfinite(k2)):
        raise ValueError("pump gains diverge; flow-split ratio too close to 1")
    if method == "levels":
        fit = scipy.optimize.least_squares(
            lambda k: _tank_steady_levels(p, nu_ss, k[0], k[1]) - h_ss,
            x0=[k1, k2], xtol=1e-14, ftol=1e-14, gtol=1e-14)
        k1, k2 = (float(v) for v in fit.x)
    elif method != "balance":
        raise ValueError(f"unknown calibration method {method!r}")
    residual = tank_derivative(h_ss, nu_ss, replace(p, k1=k1, k2=k2))
    worst = float(np.max(np.abs(residual)))
    if worst > tol:
        warnings.warn(f"steady state is inconsistent with the tank model: "
                      f"max |dh/dt| = {worst:.3g} cm/s at the calibrated gains",
                      stacklevel=2)
    return float(k1), float(k2)


def calibrated_tank_params() -> TankParams:
    """Default constants with gains calibrated to the 50/50 steady state."""
    p = TankParams()
    k1, k2 = calibrate_pump_gains(p, TANK_NOMINAL_INPUT, TANK_NOMINAL_LEVELS)
    return replace(p, k1=k1, k2=k2)


class QuadrupleTank(PlantModel):
    """Four-tank process; inputs are valve openings (%), outputs ``k_c * (h1, h2)``."""

    n_x, n_u, n_y = 4, 2, 2

    def __init__(self, params: Optional[TankParams] = None, dt_int: float = 1.0):
        self.params = params if params is not None else calibrated_tank_params()
        self._packed = self.params.packed()
        self.dt_int = dt_int

    def derivative(self, x, u):
        return tank_derivative(x, u, self.params)

    def output(self, x, u=None):
        return self.params.k_c * np.asarray(x, dtype=float)[:2]

    def advance(self, x, u, dt):
        u = np.asarray(u, dtype=float)
        if np.any(u < 0):
            raise ValueError(f"valve openings must be non-negative, got {u}")
        n = self.substeps(dt)
        x_next, status = kernels.tank_rk4(np.asarray(x, float), u, self._packed, dt / n, n)
        if status:
            raise PlantError("non-finite tank level")
        return x_next

    def steady_state(self, u=TANK_NOMINAL_INPUT):
        """Exact equilibrium levels for constant valve openings ``u``."""
        return _tank_steady_levels(self.params, np.asarray(u, float), self.params.k1, self.params.k2)

    def describe(self):
        return {f"tank.{k}": v for k, v in asdict(self.params).items()} | {"tank.dt_int": self.dt_int}


# ---------------------------------------------------------------------- SOFC

@dataclass(frozen=True)
class SofcParams:
    """SOFC stack parameters (SI units, pressures in Pa).

    ``cell_area``, volumes, ``diameter_ratio`` (D2/D1), inlet molar
    fractions and molar masses are not part of the stack table; the
    defaults here are artifact choices.
    """

    N_o: int = 384
    A_a: float = 0.0025
    A_c: float = 0.0025
    C_d: float = 0.75
    T: float = 1273.15
    j_L: float = 1500.0
    j_0: float = 10000.0
    F: float = 96485.0
    R: float = 8.314
    V_an: float = 0.01
    V_cat: float = 0.01
    cell_area: float = 1.0
    diameter_ratio: float = 0.5
    M_H2: float = 2.016e-3
    M_H2O: float = 18.015e-3
    M_O2: float = 31.999e-3
    M_N2: float = 28.013e-3
    P_atm: float = 101325.0
    x_H2_fuel: float = 0.9
    x_O2_air: float = 0.21
    fuel_nominal: float = 1.2
    air_nominal: float = 5.0
    current: float = 400.0

    def __post_init__(self):
        if self.T <= 0 or self.j_0 <= 0 or self.j_L <= 0:
            raise ValueError("T, j_0 and j_L must be positive")
        if not (0 < self.diameter_ratio < 1):
            raise ValueError("diameter_ratio D2/D1 must lie in (0, 1)")

    @property
    def K_r(self) -> float:
        return self.N_o / (4.0 * self.F)

    @property
    def C(self) -> float:
        return self.C_d / math.sqrt(1.0 - self.diameter_ratio ** 4)

    def packed(self) -> np.ndarray:
        prm = np.empty(_kernels_py.SOFC_NPARAM)
        prm[_kernels_py.SOFC_R] = self.R
        prm[_kernels_py.SOFC_T] = self.T
        prm[_kernels_py.SOFC_VAN] = self.V_an
        prm[_kernels_py.SOFC_VCAT] = self.V_cat
        prm[_kernels_py.SOFC_KR] = self.K_r
        prm[_kernels_py.SOFC_C] = self.C
        prm[_kernels_py.SOFC_AA] = self.A_a
        prm[_kernels_py.SOFC_AC] = self.A_c
        prm[_kernels_py.SOFC_PATM] = self.P_atm
        prm[_kernels_py.SOFC_MH2] = self.M_H2
        prm[_kernels_py.SOFC_MH2O] = self.M_H2O
        prm[_kernels_py.SOFC_MO2] = self.M_O2
        prm[_kernels_py.SOFC_MN2] = self.M_N2
        prm[_kernels_py.SOFC_XH2] = self.x_H2_fuel
        prm[_kernels_py.SOFC_XH2O] = 1.0 - self.x_H2_fuel
        prm[_kernels_py.SOFC_XO2] = self.x_O2_air
        prm[_kernels_py.SOFC_XN2] = 1.0 - self.x_O2_air
        return prm


def activation_loss(j, p: SofcParams) -> float:
    rt4f = p.R * p.T / (4.0 * p.F)
    if j <= p.j_0:
        return rt4f * j / p.j_0
    return p.R * p.T / (2.0 * p.F) * math.log(j / p.j_0) + rt4f * j / p.j_0


def ohmic_resistance(T: float) -> float:
    return 0.2 * math.exp(-2870.0 * (1.0 / 1196.15 - 1.0 / T))


def sofc_output(x, current: float, p: SofcParams) -> float:
    """Stack voltage: open-circuit potential minus ohmic, concentration and activation losses."""
    p_h2, p_h2o, p_o2, _ = (float(v) for v in x)
    if min(p_h2, p_h2o, p_o2) <= 0:
        raise PlantError(f"partial pressures must be positive, got {list(x)}")
    j = current / p.cell_area
    if j >= p.j_L:
        raise PlantError(f"current density {j:g} A/m^2 reaches the limiting density {p.j_L:g}")
    RT = p.R * p.T
    minus_dg = 188600.0 - 56.0 * (p.T - 1073.15)
    E = p.N_o / (2.0 * p.F) * (minus_dg + RT * math.log(p_h2 * math.sqrt(p_o2) / (p_h2o * math.sqrt(p.P_atm))))
    eta_ohm = ohmic_resistance(p.T) * current
    eta_conc = -RT / (4.0 * p.F) * math.log(1.0 - j / p.j_L)
    return E - eta_ohm - eta_conc - activation_loss(j, p)


def sofc_derivative(x, u, p: SofcParams) -> np.ndarray:
    """Partial-pressure rates for ``u = (fuel mol/s, air mol/s, current A)``."""
    n_fuel, n_air, current = (float(v) for v in u)
    dx, status = _kernels_py.sofc_deriv(np.asarray(x, dtype=float), n_fuel, n_air, current, p.packed())
    if status:
        raise PlantError(_SOFC_DOMAIN[status])
    return dx


_SOFC_DOMAIN = {
    -1: "anode outlet undefined: P_H2 + P_H2O <= P_atm",
    -2: "cathode outlet undefined: P_O2 + P_N2 <= P_atm",
    _kernels_py.NONFINITE: "non-finite SOFC pressure",
}


def sofc_steady_state(p: SofcParams, n_fuel=None, n_air=None, current=None) -> np.ndarray:
    """Pressures at which all four species balances vanish."""
    n_fuel = p.fuel_nominal if n_fuel is None else n_fuel
    n_air = p.air_nominal if n_air is None else n_air
    current = p.current if current is None else current
    u = (n_fuel, n_air, current)
    # guess: small overpressure split by outlet composition
    h2 = p.x_H2_fuel * n_fuel - 2 * p.K_r * current
    h2o = (1 - p.x_H2_fuel) * n_fuel + 2 * p.K_r * current
    o2 = p.x_O2_air * n_air - p.K_r * current
    n2 = (1 - p.x_O2_air) * n_air
    if h2 <= 0 or o2 <= 0:
        raise PlantError("inlet flow cannot sustain the requested current")
    an = p.P_atm * 1.003
    ca = p.P_atm * 1.05
    guess = np.array([an * h2 / (h2 + h2o), an * h2o / (h2 + h2o), ca * o2 / (o2 + n2), ca * n2 / (o2 + n2)])
    scale = p.R * p.T / min(p.V_an, p.V_cat)
    sol, info, ier, msg = scipy.optimize.fsolve(
        lambda x: sofc_derivative(x, u, p) / scale, guess, xtol=1e-13, full_output=True)
    if ier != 1:
        raise PlantError(f"SOFC steady state not found: {msg}")
    return sol


class SofcStack(PlantModel):
    """SOFC stack with inputs in percent of nominal fuel and air flow.

    The stack current is a fixed operating parameter. Output is the stack
    voltage.
    """

    n_x, n_u, n_y = 4, 2, 1

    def __init__(self, params: Optional[SofcParams] = None, dt_int: float = 5e-4):
        self.params = params if params is not None else SofcParams()
        self._packed = self.params.packed()
        self.dt_int = dt_int

    def flows(self, u):
        u = np.asarray(u, dtype=float)
        return (u[0] / 100.0 * self.params.fuel_nominal, u[1] / 100.0 * self.params.air_nominal)

    def derivative(self, x, u):
        nf, na = self.flows(u)
        return sofc_derivative(x, (nf, na, self.params.current), self.params)

    def output(self, x, u=None):
        return np.array([sofc_output(x, self.params.current, self.params)])

    def advance(self, x, u, dt):
        nf, na = self.flows(u)
        n = self.substeps(dt)
        x_next, status = kernels.sofc_rk4(np.asarray(x, float), nf, na, self.params.current,
                                          self._packed, dt / n, n)
        if status:
            raise PlantError(_SOFC_DOMAIN.get(status, "SOFC integration failed"))
        return x_next

    def steady_state(self, u=(100.0, 100.0)):
        nf, na = self.flows(u)
        return sofc_steady_state(self.params, nf, na)

    def describe(self):
        return {f"sofc.{k}": v for k, v in asdict(self.params).items()} | {"sofc.dt_int": self.dt_int}


# ---------------------------------------------------------------------- PRBS

PRBS_TAPS = {
    2: (2, 1), 3: (3, 2), 4: (4, 3), 5: (5, 3), 6: (6, 5), 7: (7, 6),
    8: (8, 6, 5, 4), 9: (9, 5), 10: (10, 7), 11: (11, 9),
    12: (12, 11, 10, 4), 13: (13, 12, 11, 8), 14: (14, 13, 12, 2),
    15: (15, 14), 16: (16, 14, 13, 11),
}


@dataclass(frozen=True)
class PrbsConfig:
    order: int = 8
    seed: int = 1
    hold: int = 1
    low: float = -1.0
    high: float = 1.0

    def __post_init__(self):
        if self.order not in PRBS_TAPS:
            raise ValueError(f"unsupported PRBS order {self.order}; have {sorted(PRBS_TAPS)}")
        if self.seed % (1 << self.order) == 0:
            raise ValueError("PRBS seed must be nonzero in the register")
        if self.hold < 1:
            raise ValueError("hold must be >= 1")
        if not self.low < self.high:
            raise ValueError("low must be < high")


def prbs_bits(order: int, seed: int, n_bits: int) -> np.ndarray:
    """Maximal-length Fibonacci LFSR bits (output is the register MSB)."""
    taps = PRBS_TAPS[order]
    mask = (1 << order) - 1
    state = seed & mask
    if state == 0:
        raise ValueError("PRBS seed must be nonzero in the register")
    bits = np.empty(n_bits, dtype=np.uint8)
    for i in range(n_bits):
        bits[i] = (state >> (order - 1)) & 1
        fb = 0
        for t in taps:
            fb ^= (state >> (t - 1)) & 1
        state = ((state << 1) & mask) | fb
    return bits


def prbs(cfg: PrbsConfig, length: int) -> np.ndarray:
    """PRBS signal of ``length`` samples; each bit held ``cfg.hold`` samples."""
    n_bits = -(-length // cfg.hold)
    bits = prbs_bits(cfg.order, cfg.seed, n_bits)
    levels = np.where(np.repeat(bits, cfg.hold)[:length] == 1, cfg.high, cfg.low)
    return levels.astype(float)
