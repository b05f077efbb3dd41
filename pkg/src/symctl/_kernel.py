"""
Compiled RK4 loop for the closed loop.

This mirrors :meth:`symctl.sim.ClosedLoop.evaluate` term for term on flat
arrays so that a 100 s run at dt = 1e-3 takes well under a second. The numpy
implementation stays the reference; tests compare the two derivatives.
"""

import numpy as np
from numba import njit

# variant codes
NOMINAL, FIXED_GAIN, STANDARD, LEAKAGE, SYM_PARAM, SYM_NONPARAM = range(6)
VARIANT_CODES = {
    "nominal": NOMINAL,
    "fixed_gain": FIXED_GAIN,
    "standard_adaptive": STANDARD,
    "standard_adaptive_leakage": LEAKAGE,
    "symbiotic_parametric": SYM_PARAM,
    "symbiotic_nonparametric": SYM_NONPARAM,
}


@njit(cache=True)
def _matvec(M, v):
    out = np.zeros(M.shape[0])
    for i in range(M.shape[0]):
        acc = 0.0
        for j in range(M.shape[1]):
            acc += M[i, j] * v[j]
        out[i] = acc
    return out


@njit(cache=True)
def _kappa_prime(kkind, a, b, rho, psi, z):
    if kkind == 0 or z >= b:
        return 1.0
    if z <= a:
        return rho
    dp = 0.0
    p = 0.0
    for k in range(psi.size - 1, -1, -1):
        dp = dp * z + p
        p = p * z + psi[k]
    return dp


@njit(cache=True)
def _derivative(y, r_sq, off, n, m, pdim, s, variant, oracle,
                A, BLam, K1, K2, A_n, B_n, P, B, B_i, x0, lam, tau,
                alpha, beta1, beta2, beta3, gamma1, gamma2,
                kkind, ka, kb, krho, psi,
                dcoef, dexps, dchan,
                bkind, bexps, bcoords, bcenters, bwidth, sig):
    # sig receives [u | u_n | u_f | u_a | u_g | e | pi] when it is long enough
    dy = np.zeros(y.size)
    x = y[off[0]:off[0] + n]
    xn = y[off[1]:off[1] + n]
    rf = y[off[2]:off[2] + pdim]
    e = x - xn

    u_n = -_matvec(K1, x) + _matvec(K2, rf)

    adaptive = variant >= STANDARD
    fixed = variant == FIXED_GAIN or variant >= SYM_PARAM
    symb = variant >= SYM_PARAM

    sigma = np.zeros(s + m)
    u_a = np.zeros(m)
    W = np.zeros((s + m, m))
    if adaptive:
        for i in range(s + m):
            for j in range(m):
                W[i, j] = y[off[5] + i * m + j]
        if bkind == 0:
            for k in range(s):
                v = 1.0
                for i in range(n):
                    v *= x[i] ** bexps[k, i]
                sigma[k] = v
        else:
            sigma[0] = 1.0
            for k in range(s - 1):
                d = x[bcoords[k]] - bcenters[k]
                sigma[k + 1] = np.exp(-0.5 * d * d / (bwidth * bwidth))
        for j in range(m):
            sigma[s + j] = u_n[j]
        for j in range(m):
            acc = 0.0
            for i in range(s + m):
                acc += W[i, j] * sigma[i]
            u_a[j] = -acc

    u_f = np.zeros(m)
    if fixed:
        q = y[off[3]:off[3] + n]
        qg = y[off[4]:off[4] + m]
        u_f = alpha * _matvec(B_i, q - (x - x0)) + qg

    Pe = _matvec(P, e)
    BtPe = np.zeros(m)
    for j in range(m):
        acc = 0.0
        for i in range(n):
            acc += B[i, j] * Pe[i]
        BtPe[j] = acc
    u_g = np.zeros(m)
    kp = 1.0
    L = np.zeros((m, m))
    if symb:
        z = 0.0
        for i in range(n):
            z += e[i] * Pe[i]
        if z < 0.0:
            z = 0.0
        kp = _kappa_prime(kkind, ka, kb, krho, psi, z)
        for i in range(m):
            for j in range(m):
                L[i, j] = y[off[6] + i * m + j]
        u_g = -(beta1 / beta2) * kp * _matvec(L, BtPe)

    delta = np.zeros(m)
    for t in range(dcoef.size):
        v = dcoef[t]
        for i in range(n):
            v *= x[i] ** dexps[t, i]
        delta[dchan[t]] += v

    u = u_n + u_f + u_a
    dx = _matvec(A, x) + _matvec(BLam, u + delta)
    dxn = _matvec(A_n, xn) + _matvec(B_n, rf)
    dy[off[0]:off[0] + n] = dx
    dy[off[1]:off[1] + n] = dxn
    for i in range(pdim):
        dy[off[2] + i] = (r_sq - rf[i]) / tau
    if fixed:
        dy[off[3]:off[3] + n] = _matvec(A_n, x) + _matvec(B_n, rf)
        dy[off[4]:off[4] + m] = u_g

    if adaptive:
        if variant == STANDARD or variant == LEAKAGE:
            c1 = beta1
            c2 = 0.0
            leak = beta2 if variant == LEAKAGE else 0.0
        else:
            c1 = beta1 * kp
            c2 = beta2 * alpha
            leak = beta3
        for i in range(s + m):
            for j in range(m):
                dy[off[5] + i * m + j] = c1 * sigma[i] * BtPe[j] - c2 * sigma[i] * u_f[j] - leak * W[i, j]
    if symb:
        for i in range(m):
            for j in range(m):
                dy[off[6] + i * m + j] = gamma1 * kp * BtPe[i] * u_f[j] - gamma2 * L[i, j]

    pi = np.zeros(m)
    for j in range(m):
        pi[j] = delta[j] + (1.0 - 1.0 / lam[j]) * u_n[j]
    if oracle:
        ufo = y[off[7]:off[7] + m]
        al = alpha if fixed else 0.0
        for j in range(m):
            dy[off[7] + j] = -al * lam[j] * (ufo[j] + u_a[j] + pi[j]) + u_g[j]
    if sig.size >= 6 * m + n:
        sig[0:m] = u
        sig[m:2 * m] = u_n
        sig[2 * m:3 * m] = u_f
        sig[3 * m:4 * m] = u_a
        sig[4 * m:5 * m] = u_g
        sig[5 * m:5 * m + n] = e
        sig[5 * m + n:6 * m + n] = pi
    return dy


@njit(cache=True)
def _square(kind, amplitude, period, t):
    if kind == 1:
        return amplitude
    ph = int(np.floor(2.0 * t / period))
    if ph % 2 == 0:
        return amplitude
    return -amplitude


@njit(cache=True, nogil=True)
def integrate(y0, nsteps, dt, stride, div_norm, ref_kind, ref_amp, ref_period,
              off, n, m, pdim, s, variant, oracle,
              A, BLam, K1, K2, A_n, B_n, P, B, B_i, x0, lam, tau,
              alpha, beta1, beta2, beta3, gamma1, gamma2,
              kkind, ka, kb, krho, psi,
              dcoef, dexps, dchan,
              bkind, bexps, bcoords, bcenters, bwidth):
    """Return ``(steps, states, failed_step)``; ``failed_step`` is -1 on success."""
    nrec = nsteps // stride + 2
    steps = np.zeros(nrec, dtype=np.int64)
    out = np.zeros((nrec, y0.size))
    out[0] = y0
    rec = 1
    y = y0.copy()
    nosig = np.zeros(0)
    for k in range(nsteps):
        t = k * dt
        r = _square(ref_kind, ref_amp, ref_period, t + 0.5 * dt)
        args = (off, n, m, pdim, s, variant, oracle, A, BLam, K1, K2, A_n, B_n, P, B, B_i, x0, lam,
                tau, alpha, beta1, beta2, beta3, gamma1, gamma2, kkind, ka, kb, krho, psi,
                dcoef, dexps, dchan, bkind, bexps, bcoords, bcenters, bwidth, nosig)
        k1 = _derivative(y, r, *args)
        k2 = _derivative(y + 0.5 * dt * k1, r, *args)
        k3 = _derivative(y + 0.5 * dt * k2, r, *args)
        k4 = _derivative(y + dt * k3, r, *args)
        y = y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        nrm = 0.0
        for i in range(y.size):
            nrm += y[i] * y[i]
        if not np.isfinite(nrm) or np.sqrt(nrm) > div_norm:
            return steps[:rec], out[:rec], k
        if (k + 1) % stride == 0 or k + 1 == nsteps:
            steps[rec] = k + 1
            out[rec] = y
            rec += 1
    return steps[:rec], out[:rec], -1


@njit(cache=True, nogil=True)
def signals(states, r_sq, off, n, m, pdim, s, variant, oracle,
            A, BLam, K1, K2, A_n, B_n, P, B, B_i, x0, lam, tau,
            alpha, beta1, beta2, beta3, gamma1, gamma2,
            kkind, ka, kb, krho, psi,
            dcoef, dexps, dchan,
            bkind, bexps, bcoords, bcenters, bwidth):
    """Rows of ``[u | u_n | u_f | u_a | u_g | e | pi]`` for each recorded state."""
    out = np.zeros((states.shape[0], 6 * m + n))
    for k in range(states.shape[0]):
        _derivative(states[k], r_sq[k], off, n, m, pdim, s, variant, oracle,
                    A, BLam, K1, K2, A_n, B_n, P, B, B_i, x0, lam, tau,
                    alpha, beta1, beta2, beta3, gamma1, gamma2,
                    kkind, ka, kb, krho, psi, dcoef, dexps, dchan,
                    bkind, bexps, bcoords, bcenters, bwidth, out[k])
    return out
