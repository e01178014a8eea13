"""Pure-Python/numpy versions of the hot loops.

Every function here has a twin with the same signature in ``_kernels.pyx``.
Status codes returned by the loops: 0 converged/ok, 1 iteration limit,
2 diverged (dual iterate beyond the blow-up threshold), 3 non-finite value.
"""

import math

import numpy as np

OK = 0
MAX_ITER = 1
DIVERGED = 2
NONFINITE = 3

# indices into the packed SOFC parameter vector
SOFC_R, SOFC_T, SOFC_VAN, SOFC_VCAT, SOFC_KR, SOFC_C, SOFC_AA, SOFC_AC, SOFC_PATM = range(9)
SOFC_MH2, SOFC_MH2O, SOFC_MO2, SOFC_MN2 = range(9, 13)
SOFC_XH2, SOFC_XH2O, SOFC_XO2, SOFC_XN2 = range(13, 17)
SOFC_NPARAM = 17


def admm_iterate(G, g0, A, b, f, v, z, y, rho, sigma, alpha, max_iter,
                 eps, diverge_after, diverge_limit):
    """Relaxed ADMM on ``min 1/2 v'Hv + f'v  s.t. Av <= b, Aeq v = beq``.

    The equality-constrained x-update is pre-solved into ``v~ = G rhs + g0``.
    ``v``, ``z``, ``y`` are updated in place. Returns ``(iterations, status)``.
    """
    At = A.T
    for it in range(1, max_iter + 1):
        rhs = sigma * v - f + At @ (rho * z - y)
        vt = G @ rhs + g0
        zh = alpha * (A @ vt) + (1.0 - alpha) * z
        z_new = np.minimum(zh + y / rho, b)
        y += rho * (zh - z_new)
        v *= 1.0 - alpha
        v += alpha * vt
        dz = z_new - z
        z[:] = z_new
        if not np.all(np.isfinite(v)):
            return it, NONFINITE
        r_prim = np.max(np.abs(A @ v - z)) if A.shape[0] else 0.0
        r_dual = rho * np.max(np.abs(At @ dz)) if A.shape[0] else 0.0
        if r_prim <= eps and r_dual <= eps:
            return it, OK
        if it >= diverge_after and np.max(np.abs(y)) > diverge_limit:
            return it, DIVERGED
    return max_iter, MAX_ITER


def tank_deriv(h, nu, prm):
    """Quadruple-tank level derivative.

    ``prm`` packs ``[A1..A4, a1..a4, g, gamma1, gamma2, k1, k2]``.
    """
    Ar = prm[0:4]
    ar = prm[4:8]
    g, g1, g2, k1, k2 = prm[8], prm[9], prm[10], prm[11], prm[12]
    q = ar * np.sqrt(2.0 * g * np.maximum(h, 0.0))
    f1 = k1 * nu[0]
    f2 = k2 * nu[1]
    return np.array([
        (-q[0] + q[2] + g1 * f1) / Ar[0],
        (-q[1] + q[3] + g2 * f2) / Ar[1],
        (-q[2] + (1.0 - g2) * f2) / Ar[2],
        (-q[3] + (1.0 - g1) * f1) / Ar[3],
    ])


def tank_rk4(h, nu, prm, dt, nsteps):
    """Advance the tank levels ``nsteps`` RK4 steps with ``nu`` held."""
    x = np.array(h, dtype=float)
    for _ in range(nsteps):
        k1 = tank_deriv(x, nu, prm)
        k2 = tank_deriv(x + 0.5 * dt * k1, nu, prm)
        k3 = tank_deriv(x + 0.5 * dt * k2, nu, prm)
        k4 = tank_deriv(x + dt * k3, nu, prm)
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return x, NONFINITE
    return x, OK


def sofc_deriv(x, n_fuel, n_air, current, prm):
    """Partial-pressure derivative of the SOFC stack.

    Returns ``(dxdt, status)``; status is ``-1`` when the anode outlet square
    root is undefined, ``-2`` for the cathode, else 0.
    """
    p_h2, p_h2o, p_o2, p_n2 = x
    RT = prm[SOFC_R] * prm[SOFC_T]
    patm = prm[SOFC_PATM]
    arg_an = 2.0 * (p_h2 + p_h2o - patm) / (RT * (p_h2 * prm[SOFC_MH2] + p_h2o * prm[SOFC_MH2O]))
    arg_ca = 2.0 * (p_o2 + p_n2 - patm) / (RT * (p_o2 * prm[SOFC_MO2] + p_n2 * prm[SOFC_MN2]))
    if not arg_an > 0.0:
        return None, -1
    if not arg_ca > 0.0:
        return None, -2
    root_an = prm[SOFC_C] * prm[SOFC_AA] * math.sqrt(arg_an)
    root_ca = prm[SOFC_C] * prm[SOFC_AC] * math.sqrt(arg_ca)
    kri = prm[SOFC_KR] * current
    ga = RT / prm[SOFC_VAN]
    gc = RT / prm[SOFC_VCAT]
    return np.array([
        ga * (prm[SOFC_XH2] * n_fuel - root_an * p_h2 - 2.0 * kri),
        ga * (prm[SOFC_XH2O] * n_fuel - root_an * p_h2o + 2.0 * kri),
        gc * (prm[SOFC_XO2] * n_air - root_ca * p_o2 - kri),
        gc * (prm[SOFC_XN2] * n_air - root_ca * p_n2),
    ]), 0


def sofc_rk4(x, n_fuel, n_air, current, prm, dt, nsteps):
    """Advance SOFC pressures ``nsteps`` RK4 steps; inputs held."""
    x = np.array(x, dtype=float)
    for _ in range(nsteps):
        k1, s = sofc_deriv(x, n_fuel, n_air, current, prm)
        if s:
            return x, s
        k2, s = sofc_deriv(x + 0.5 * dt * k1, n_fuel, n_air, current, prm)
        if s:
            return x, s
        k3, s = sofc_deriv(x + 0.5 * dt * k2, n_fuel, n_air, current, prm)
        if s:
            return x, s
        k4, s = sofc_deriv(x + dt * k3, n_fuel, n_air, current, prm)
        if s:
            return x, s
        x = x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(np.isfinite(x)):
            return x, NONFINITE
    return x, OK
