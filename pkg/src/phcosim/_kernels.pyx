# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled step kernels for the benchmark model family.

Mirrors the pure-Python solver algebra exactly (averaged discrete
gradient with exact-secant correction, damped Newton with polish phase,
reduced Douglas-Rachford inner loop, monolithic interface Newton) for
two model kinds:

* kind 0: Duffing oscillator, states (q, p), effort input;
* kind 1: linear oscillator with a series coupling element, states
  (q, p, s), flow input with feedthrough.

The hot loops run without the GIL; orchestration stays in Python.
"""

import numpy as np

from libc.float cimport DBL_EPSILON
from libc.math cimport fabs, sqrt

from .models import SolverFailure

DEF NZMAX = 5

cdef double DG_THRESH = 1e-10
cdef double NEWTON_TOL = 1e-12
cdef int NEWTON_MAX = 50
cdef int POLISH_MAX = 4
cdef double BT_FLOOR = 2.0 ** -20
cdef double POLISH_FLOOR = 1e-15

cdef double[4] GL_T
cdef double[4] GL_W
GL_T[0] = 0.06943184420297371
GL_T[1] = 0.33000947820757187
GL_T[2] = 0.6699905217924281
GL_T[3] = 0.9305681557970263
GL_W[0] = 0.17392742256872692
GL_W[1] = 0.3260725774312731
GL_W[2] = 0.3260725774312731
GL_W[3] = 0.17392742256872692


cdef struct Model:
    int kind
    int n          # state dimension; port dimension is 1 for both kinds
    double m       # mass
    double k       # grounding spring
    double knl     # cubic coefficient (kind 0)
    double cg      # grounding damper
    double kc      # coupling spring (kind 1)
    double cc      # coupling damper / feedthrough (kind 1)


cdef int model_init(Model* mod, int kind, double[:] par) except -1:
    mod.kind = kind
    mod.knl = 0.0
    mod.kc = 0.0
    mod.cc = 0.0
    if kind == 0:
        if par.shape[0] != 4:
            raise ValueError("kind 0 expects parameters (m, k, k_nl, c)")
        mod.n = 2
        mod.m = par[0]
        mod.k = par[1]
        mod.knl = par[2]
        mod.cg = par[3]
    elif kind == 1:
        if par.shape[0] != 5:
            raise ValueError("kind 1 expects parameters (m, k, c, kc, cc)")
        mod.n = 3
        mod.m = par[0]
        mod.k = par[1]
        mod.cg = par[2]
        mod.kc = par[3]
        mod.cc = par[4]
    else:
        raise ValueError(f"unknown model kind {kind}")
    return 0


cdef inline double ham(Model* mod, double* x) nogil:
    if mod.kind == 0:
        return x[1] * x[1] / (2.0 * mod.m) + 0.5 * mod.k * x[0] * x[0] \
            + 0.25 * mod.knl * x[0] * x[0] * x[0] * x[0]
    return x[1] * x[1] / (2.0 * mod.m) + 0.5 * mod.k * x[0] * x[0] \
        + 0.5 * mod.kc * x[2] * x[2]


cdef inline void grad(Model* mod, double* x, double* g) nogil:
    g[0] = mod.k * x[0] + mod.knl * x[0] * x[0] * x[0]
    g[1] = x[1] / mod.m
    if mod.kind == 1:
        g[2] = mod.kc * x[2]


cdef void dgrad(Model* mod, double* x, double* x1, double* dg,
                double* jac, bint want_jac) nogil:
    # averaged gradient along the segment plus exact-secant correction;
    # jac (n x n, row major) is d(dg)/d(x1) when requested
    cdef int n = mod.n
    cdef int i, j, q
    cdef double d[3]
    cdef double xi[3]
    cdef double g[3]
    cdef double g1[3]
    cdef double nd2 = 0.0
    cdef double c, tau, w, hq, md
    cdef double M[9]
    cdef double dc[3]
    for i in range(n):
        d[i] = x1[i] - x[i]
        nd2 += d[i] * d[i]
        g[i] = 0.0
    if want_jac:
        for i in range(n * n):
            M[i] = 0.0
    if sqrt(nd2) < DG_THRESH:
        for i in range(n):
            xi[i] = 0.5 * (x[i] + x1[i])
        grad(mod, xi, dg)
        if want_jac:
            for i in range(n * n):
                jac[i] = 0.0
            jac[0] = 0.5 * (mod.k + 3.0 * mod.knl * xi[0] * xi[0])
            jac[n + 1] = 0.5 / mod.m
            if mod.kind == 1:
                jac[8] = 0.5 * mod.kc
        return
    for q in range(4):
        tau = GL_T[q]
        w = GL_W[q]
        for i in range(n):
            xi[i] = x[i] + tau * d[i]
        hq = mod.k * xi[0] + mod.knl * xi[0] * xi[0] * xi[0]
        g[0] += w * hq
        g[1] += w * (xi[1] / mod.m)
        if mod.kind == 1:
            g[2] += w * (mod.kc * xi[2])
        if want_jac:
            M[0] += w * tau * (mod.k + 3.0 * mod.knl * xi[0] * xi[0])
            M[n + 1] += w * tau / mod.m
            if mod.kind == 1:
                M[8] += w * tau * mod.kc
    c = ham(mod, x1) - ham(mod, x)
    for i in range(n):
        c -= g[i] * d[i]
    c /= nd2
    for i in range(n):
        dg[i] = g[i] + c * d[i]
    if want_jac:
        grad(mod, x1, g1)
        for i in range(n):
            md = 0.0
            for j in range(n):
                md += M[i * n + j] * d[j]
            dc[i] = (g1[i] - md - g[i]) / nd2 - (2.0 * c / nd2) * d[i]
        for i in range(n):
            for j in range(n):
                jac[i * n + j] = M[i * n + j] + d[i] * dc[j]
            jac[i * n + i] += c


cdef void residual(Model* mod, double* x, double a_in, double ws,
                   double gamma, double dt, double* z, double* r) nogil:
    # z = (x1[0..n-1], e, f); r has n + 2 entries
    cdef int n = mod.n
    cdef double dg[3]
    cdef double e = z[n]
    cdef double f = z[n + 1]
    dgrad(mod, x, z, dg, NULL, 0)
    if mod.kind == 0:
        # (J - R) dg + G e with J = [[0,1],[-1,0]], R = diag(0, cg), G = (0,1)
        r[0] = z[0] - x[0] - dt * dg[1]
        r[1] = z[1] - x[1] - dt * (-dg[0] - mod.cg * dg[1] + e)
        r[2] = f - dg[1]
    else:
        # flow input u = f; G_in = (0,-cc,-1), G_out = (0,cc,-1), D = cc
        r[0] = z[0] - x[0] - dt * dg[1]
        r[1] = z[1] - x[1] - dt * (-dg[0] - (mod.cg + mod.cc) * dg[1] + dg[2] - mod.cc * f)
        r[2] = z[2] - x[2] - dt * (-dg[1] - f)
        r[3] = e - (mod.cc * dg[1] - dg[2]) - mod.cc * f
    r[n + 1] = a_in - ws * (e + gamma * f)


cdef void jacobian(Model* mod, double* x, double ws, double gamma,
                   double dt, double* z, double* J) nogil:
    # full (n+2) x (n+2) Jacobian of the residual, row major
    cdef int n = mod.n
    cdef int nz = n + 2
    cdef int i, j
    cdef double dg[3]
    cdef double Jdg[9]
    dgrad(mod, x, z, dg, Jdg, 1)
    for i in range(nz * nz):
        J[i] = 0.0
    if mod.kind == 0:
        # rows 0..1: d/dx1 of x1 - x - dt (J-R) dg
        J[0] = 1.0 - dt * Jdg[2]          # d r0 / d q1
        J[1] = -dt * Jdg[3]               # d r0 / d p1
        J[nz] = -dt * (-Jdg[0] - mod.cg * Jdg[2])
        J[nz + 1] = 1.0 - dt * (-Jdg[1] - mod.cg * Jdg[3])
        J[nz + 2] = -dt                   # d r1 / d e
        J[2 * nz] = -Jdg[2]               # d r2 / d q1
        J[2 * nz + 1] = -Jdg[3]
        J[2 * nz + 3] = 1.0               # d r2 / d f
    else:
        J[0] = 1.0 - dt * Jdg[3]
        J[1] = -dt * Jdg[4]
        J[2] = -dt * Jdg[5]
        J[nz] = -dt * (-Jdg[0] - (mod.cg + mod.cc) * Jdg[3] + Jdg[6])
        J[nz + 1] = 1.0 - dt * (-Jdg[1] - (mod.cg + mod.cc) * Jdg[4] + Jdg[7])
        J[nz + 2] = -dt * (-Jdg[2] - (mod.cg + mod.cc) * Jdg[5] + Jdg[8])
        J[nz + 4] = dt * mod.cc           # d r1 / d f
        J[2 * nz] = -dt * (-Jdg[3])
        J[2 * nz + 1] = -dt * (-Jdg[4])
        J[2 * nz + 2] = 1.0 - dt * (-Jdg[5])
        J[2 * nz + 4] = dt                # d r2 / d f
        J[3 * nz] = -(mod.cc * Jdg[3] - Jdg[6])
        J[3 * nz + 1] = -(mod.cc * Jdg[4] - Jdg[7])
        J[3 * nz + 2] = -(mod.cc * Jdg[5] - Jdg[8])
        J[3 * nz + 3] = 1.0               # d r3 / d e
        J[3 * nz + 4] = -mod.cc           # d r3 / d f
    J[(nz - 1) * nz + n] = -ws
    J[(nz - 1) * nz + n + 1] = -ws * gamma


cdef int lin_solve(double* A, double* b, int n) nogil:
    # in-place Gaussian elimination with partial pivoting; 0 ok, -1 singular
    cdef int i, j, p, piv
    cdef double best, tmp, factor
    for p in range(n):
        piv = p
        best = fabs(A[p * n + p])
        for i in range(p + 1, n):
            if fabs(A[i * n + p]) > best:
                best = fabs(A[i * n + p])
                piv = i
        if best == 0.0:
            return -1
        if piv != p:
            for j in range(n):
                tmp = A[p * n + j]
                A[p * n + j] = A[piv * n + j]
                A[piv * n + j] = tmp
            tmp = b[p]
            b[p] = b[piv]
            b[piv] = tmp
        for i in range(p + 1, n):
            factor = A[i * n + p] / A[p * n + p]
            if factor != 0.0:
                for j in range(p, n):
                    A[i * n + j] -= factor * A[p * n + j]
                b[i] -= factor * b[p]
    for p in range(n - 1, -1, -1):
        tmp = b[p]
        for j in range(p + 1, n):
            tmp -= A[p * n + j] * b[j]
        b[p] = tmp / A[p * n + p]
    return 0


cdef inline double norm2(double* r, int n) nogil:
    cdef double s = 0.0
    cdef int i
    for i in range(n):
        s += r[i] * r[i]
    return sqrt(s)


cdef void initial_guess(Model* mod, double* x, double a_in, double ws,
                        double gamma, double* z) nogil:
    cdef int n = mod.n
    cdef double g0[3]
    cdef double y_base, rhs
    cdef int i
    grad(mod, x, g0)
    for i in range(n):
        z[i] = x[i]
    rhs = a_in / ws
    if mod.kind == 0:
        y_base = g0[1]
        z[n] = rhs - gamma * y_base
        z[n + 1] = y_base
    else:
        y_base = mod.cc * g0[1] - g0[2]
        z[n + 1] = (rhs - y_base) / (mod.cc + gamma)
        z[n] = y_base + mod.cc * z[n + 1]


cdef double noise_floor(Model* mod, double* x, double* z) nogil:
    # attainable residual: secant-correction roundoff eps*|H| amplified by
    # 1/|delta| on the secant branch; no amplification on the midpoint branch
    cdef double d2 = 0.0
    cdef double denom
    cdef int i
    for i in range(mod.n):
        d2 += (z[i] - x[i]) * (z[i] - x[i])
    denom = sqrt(d2)
    if denom < DG_THRESH or denom > 1.0:
        denom = 1.0
    return 64.0 * DBL_EPSILON * (1.0 + fabs(ham(mod, x)) + fabs(ham(mod, z))) / denom


cdef int solve_step(Model* mod, double* x, double a_in, double dt,
                    double gamma, double ws, double* z,
                    int* iters_out, double* resid_out) nogil:
    # damped Newton with polish; 0 ok, -1 singular, -2 stalled, -3 no convergence
    cdef int n = mod.n
    cdef int nz = n + 2
    cdef double r[NZMAX]
    cdef double r_try[NZMAX]
    cdef double z_try[NZMAX]
    cdef double dz[NZMAX]
    cdef double J[25]
    cdef double rnorm, r0norm, tol, alpha, rnorm_try, floor
    cdef int it = 0
    cdef int i, j, improved
    initial_guess(mod, x, a_in, ws, gamma, z)
    residual(mod, x, a_in, ws, gamma, dt, z, r)
    rnorm = norm2(r, nz)
    r0norm = rnorm
    tol = NEWTON_TOL * (1.0 + r0norm)
    while rnorm > tol and it < NEWTON_MAX:
        jacobian(mod, x, ws, gamma, dt, z, J)
        for i in range(nz):
            dz[i] = -r[i]
        if lin_solve(J, dz, nz) != 0:
            iters_out[0] = it
            resid_out[0] = rnorm
            return -1
        alpha = 1.0
        improved = 0
        while alpha >= BT_FLOOR:
            for i in range(nz):
                z_try[i] = z[i] + alpha * dz[i]
            residual(mod, x, a_in, ws, gamma, dt, z_try, r_try)
            rnorm_try = norm2(r_try, nz)
            if rnorm_try < rnorm:
                for i in range(nz):
                    z[i] = z_try[i]
                    r[i] = r_try[i]
                rnorm = rnorm_try
                improved = 1
                break
            alpha *= 0.5
        if improved == 0:
            if rnorm <= noise_floor(mod, x, z):
                break
            iters_out[0] = it
            resid_out[0] = rnorm
            return -2
        it += 1
    if rnorm > tol and rnorm > noise_floor(mod, x, z):
        iters_out[0] = it
        resid_out[0] = rnorm
        return -3
    floor = POLISH_FLOOR * (1.0 + r0norm)
    for j in range(POLISH_MAX):
        if rnorm <= floor:
            break
        jacobian(mod, x, ws, gamma, dt, z, J)
        for i in range(nz):
            dz[i] = -r[i]
        if lin_solve(J, dz, nz) != 0:
            break
        for i in range(nz):
            z_try[i] = z[i] + dz[i]
        residual(mod, x, a_in, ws, gamma, dt, z_try, r_try)
        rnorm_try = norm2(r_try, nz)
        if rnorm_try >= rnorm:
            break
        for i in range(nz):
            z[i] = z_try[i]
            r[i] = r_try[i]
        rnorm = rnorm_try
        it += 1
    iters_out[0] = it
    resid_out[0] = rnorm
    return 0


cdef inline double wave_out(double e, double f, double ws, double gamma) nogil:
    return ws * (e - gamma * f)


cdef void _raise_step_failure(int status, double resid, int iters, int kind) except *:
    cdef str what
    if status == -1:
        what = "singular step Jacobian"
    elif status == -2:
        what = "line search stalled"
    else:
        what = "no convergence"
    raise SolverFailure(f"{what} in compiled step (kind {kind})", resid, iters)


def step_single(int kind, double[:] par, double[:] x, double a_in,
                double dt, double gamma):
    """One implicit wave-driven step; returns (x_next, e, f, b, iters, resid)."""
    cdef Model mod
    model_init(&mod, kind, par)
    if x.shape[0] != mod.n:
        raise ValueError(f"state must have length {mod.n}")
    cdef double ws = sqrt(dt / (2.0 * gamma))
    cdef double z[NZMAX]
    cdef double xl[3]
    cdef int i, iters = 0
    cdef double resid = 0.0
    for i in range(mod.n):
        xl[i] = x[i]
    cdef int status = solve_step(&mod, xl, a_in, dt, gamma, ws, z, &iters, &resid)
    if status != 0:
        _raise_step_failure(status, resid, iters, kind)
    x_next = np.empty(mod.n)
    for i in range(mod.n):
        x_next[i] = z[i]
    cdef double e = z[mod.n]
    cdef double f = z[mod.n + 1]
    return x_next, e, f, wave_out(e, f, ws, gamma), iters, resid


def frozen_map_batch(int kind, double[:] par, double[:] x, double[:] a_vals,
                     double dt, double gamma):
    """Frozen one-step wave map applied to a batch of incident waves."""
    cdef Model mod
    model_init(&mod, kind, par)
    if x.shape[0] != mod.n:
        raise ValueError(f"state must have length {mod.n}")
    cdef Py_ssize_t mcount = a_vals.shape[0]
    out = np.empty(mcount)
    cdef double[:] out_v = out
    cdef double ws = sqrt(dt / (2.0 * gamma))
    cdef double z[NZMAX]
    cdef double xl[3]
    cdef int i, iters = 0
    cdef int status = 0
    cdef double resid = 0.0
    cdef Py_ssize_t j
    for i in range(mod.n):
        xl[i] = x[i]
    with nogil:
        for j in range(mcount):
            status = solve_step(&mod, xl, a_vals[j], dt, gamma, ws, z, &iters, &resid)
            if status != 0:
                break
            out_v[j] = wave_out(z[mod.n], z[mod.n + 1], ws, gamma)
    if status != 0:
        _raise_step_failure(status, resid, iters, kind)
    return out


cdef int frozen_pair(Model* ma, Model* mb, double* xa, double* xb,
                     double* u, double dt, double gamma, double ws,
                     double* b_hat) nogil:
    # blockwise frozen map evaluation: b_hat_i = S_i(u_i)
    cdef double z[NZMAX]
    cdef int iters = 0
    cdef double resid = 0.0
    cdef int status
    status = solve_step(ma, xa, u[0], dt, gamma, ws, z, &iters, &resid)
    if status != 0:
        return status
    b_hat[0] = wave_out(z[ma.n], z[ma.n + 1], ws, gamma)
    status = solve_step(mb, xb, u[1], dt, gamma, ws, z, &iters, &resid)
    if status != 0:
        return status
    b_hat[1] = wave_out(z[mb.n], z[mb.n + 1], ws, gamma)
    return 0


cdef void dr_update(double* u, double* b_hat, double* u_next) nogil:
    # reduced Douglas-Rachford update for the two-block swap routing:
    # u+ = u + (2I - P)^{-1} (2 b_hat - u) - b_hat with (2I-P)^{-1} = (2I+P)/3
    cdef double t0 = 2.0 * b_hat[0] - u[0]
    cdef double t1 = 2.0 * b_hat[1] - u[1]
    cdef double v0 = (2.0 * t0 + t1) / 3.0
    cdef double v1 = (t0 + 2.0 * t1) / 3.0
    u_next[0] = u[0] + v0 - b_hat[0]
    u_next[1] = u[1] + v1 - b_hat[1]


def run_reduced_trajectory(int kind_a, double[:] par_a, int kind_b, double[:] par_b,
                           double[:] xa0, double[:] xb0, double[:] b0,
                           double dt, double gamma, int n_steps, int budget,
                           double eps):
    """Budgeted coupled trajectory; returns the full per-step raw arrays."""
    cdef Model ma, mb
    model_init(&ma, kind_a, par_a)
    model_init(&mb, kind_b, par_b)
    cdef double ws = sqrt(dt / (2.0 * gamma))

    xa = np.empty((n_steps + 1, ma.n))
    xb = np.empty((n_steps + 1, mb.n))
    a_arr = np.empty((n_steps, 2))
    b_arr = np.empty((n_steps, 2))
    e_arr = np.empty((n_steps, 2))
    f_arr = np.empty((n_steps, 2))
    it_arr = np.zeros((n_steps, 2), dtype=np.int32)
    rs_arr = np.zeros((n_steps, 2))
    used_arr = np.zeros(n_steps, dtype=np.int32)
    iterates = np.zeros((n_steps, budget + 1, 2))
    shadows = np.zeros((n_steps, max(budget, 1), 2))
    inner_resid = np.zeros((n_steps, max(budget, 1)))

    cdef double[:, :] xa_v = xa
    cdef double[:, :] xb_v = xb
    cdef double[:, :] a_v = a_arr
    cdef double[:, :] b_v = b_arr
    cdef double[:, :] e_v = e_arr
    cdef double[:, :] f_v = f_arr
    cdef int[:, :] it_v = it_arr
    cdef double[:, :] rs_v = rs_arr
    cdef int[:] used_v = used_arr
    cdef double[:, :, :] iter_v = iterates
    cdef double[:, :, :] shad_v = shadows
    cdef double[:, :] ir_v = inner_resid

    cdef double xal[3]
    cdef double xbl[3]
    cdef double b_prev[2]
    cdef double u[2]
    cdef double u_next[2]
    cdef double b_hat[2]
    cdef double final_shadow[2]
    cdef double a_inc[2]
    cdef double z[NZMAX]
    cdef double resid, rstep
    cdef int i, k, n, used, status, iters
    cdef int fail_status = 0
    cdef int fail_step = -1

    for i in range(ma.n):
        xal[i] = xa0[i]
        xa_v[0, i] = xa0[i]
    for i in range(mb.n):
        xbl[i] = xb0[i]
        xb_v[0, i] = xb0[i]
    b_prev[0] = b0[0]
    b_prev[1] = b0[1]

    with nogil:
        for n in range(n_steps):
            # inner loop from the warm start u0 = P b_prev
            u[0] = b_prev[1]
            u[1] = b_prev[0]
            iter_v[n, 0, 0] = u[0]
            iter_v[n, 0, 1] = u[1]
            used = 0
            final_shadow[0] = b_prev[0]
            final_shadow[1] = b_prev[1]
            for k in range(budget):
                status = frozen_pair(&ma, &mb, xal, xbl, u, dt, gamma, ws, b_hat)
                if status != 0:
                    fail_status = status
                    fail_step = n
                    break
                shad_v[n, k, 0] = b_hat[0]
                shad_v[n, k, 1] = b_hat[1]
                final_shadow[0] = b_hat[0]
                final_shadow[1] = b_hat[1]
                dr_update(u, b_hat, u_next)
                rstep = sqrt((u_next[0] - u[0]) ** 2 + (u_next[1] - u[1]) ** 2)
                ir_v[n, k] = rstep
                iter_v[n, k + 1, 0] = u_next[0]
                iter_v[n, k + 1, 1] = u_next[1]
                u[0] = u_next[0]
                u[1] = u_next[1]
                used += 1
                if rstep <= eps:
                    break
            if fail_status != 0:
                break
            used_v[n] = used
            # advance both subsystems with the routed shadow waves
            a_inc[0] = final_shadow[1]
            a_inc[1] = final_shadow[0]
            status = solve_step(&ma, xal, a_inc[0], dt, gamma, ws, z, &iters, &resid)
            if status != 0:
                fail_status = status
                fail_step = n
                break
            for i in range(ma.n):
                xal[i] = z[i]
                xa_v[n + 1, i] = z[i]
            e_v[n, 0] = z[ma.n]
            f_v[n, 0] = z[ma.n + 1]
            b_v[n, 0] = wave_out(z[ma.n], z[ma.n + 1], ws, gamma)
            it_v[n, 0] = iters
            rs_v[n, 0] = resid
            status = solve_step(&mb, xbl, a_inc[1], dt, gamma, ws, z, &iters, &resid)
            if status != 0:
                fail_status = status
                fail_step = n
                break
            for i in range(mb.n):
                xbl[i] = z[i]
                xb_v[n + 1, i] = z[i]
            e_v[n, 1] = z[mb.n]
            f_v[n, 1] = z[mb.n + 1]
            b_v[n, 1] = wave_out(z[mb.n], z[mb.n + 1], ws, gamma)
            it_v[n, 1] = iters
            rs_v[n, 1] = resid
            a_v[n, 0] = a_inc[0]
            a_v[n, 1] = a_inc[1]
            b_prev[0] = b_v[n, 0]
            b_prev[1] = b_v[n, 1]
    if fail_status != 0:
        raise SolverFailure(
            f"macro step {fail_step + 1}: compiled step solver failed", 0.0, 0
        )
    return {
        "xa": xa, "xb": xb, "a": a_arr, "b": b_arr, "e": e_arr, "f": f_arr,
        "newton_iters": it_arr, "newton_resid": rs_arr, "used": used_arr,
        "iterates": iterates, "shadows": shadows, "inner_resid": inner_resid,
    }


cdef int interface_solve(Model* ma, Model* mb, double* xa, double* xb,
                         double* b, double dt, double gamma, double ws,
                         double tol, int max_iter) nogil:
    # damped Newton on g(b) = b - S(P b) with finite-difference Jacobian,
    # falling back to the reduced fixed-point iteration; mirrors the
    # pure-Python monolithic interface solver
    cdef double u[2]
    cdef double s[2]
    cdef double r[2]
    cdef double rt[2]
    cdef double bt[2]
    cdef double J[4]
    cdef double db[2]
    cdef double u_next[2]
    cdef double b_hat[2]
    cdef double rnorm, h, alpha, rnorm_try, delta
    cdef int it, jcol, improved, status, fp

    u[0] = b[1]
    u[1] = b[0]
    status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
    if status != 0:
        return status
    r[0] = b[0] - s[0]
    r[1] = b[1] - s[1]
    rnorm = sqrt(r[0] * r[0] + r[1] * r[1])
    it = 0
    while rnorm > tol * (1.0 + sqrt(b[0] * b[0] + b[1] * b[1])) and it < max_iter:
        for jcol in range(2):
            h = 1e-6 * (1.0 + fabs(b[jcol]))
            bt[0] = b[0]
            bt[1] = b[1]
            bt[jcol] = b[jcol] + h
            u[0] = bt[1]
            u[1] = bt[0]
            status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
            if status != 0:
                return status
            rt[0] = bt[0] - s[0]
            rt[1] = bt[1] - s[1]
            bt[jcol] = b[jcol] - h
            u[0] = bt[1]
            u[1] = bt[0]
            status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
            if status != 0:
                return status
            J[jcol] = (rt[0] - (bt[0] - s[0])) / (2.0 * h)
            J[2 + jcol] = (rt[1] - (bt[1] - s[1])) / (2.0 * h)
        db[0] = -r[0]
        db[1] = -r[1]
        if lin_solve(J, db, 2) != 0:
            break
        alpha = 1.0
        improved = 0
        while alpha >= BT_FLOOR:
            bt[0] = b[0] + alpha * db[0]
            bt[1] = b[1] + alpha * db[1]
            u[0] = bt[1]
            u[1] = bt[0]
            status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
            if status != 0:
                return status
            rt[0] = bt[0] - s[0]
            rt[1] = bt[1] - s[1]
            rnorm_try = sqrt(rt[0] * rt[0] + rt[1] * rt[1])
            if rnorm_try < rnorm:
                b[0] = bt[0]
                b[1] = bt[1]
                r[0] = rt[0]
                r[1] = rt[1]
                rnorm = rnorm_try
                improved = 1
                break
            alpha *= 0.5
        if improved == 0:
            break
        it += 1
    if rnorm <= tol * (1.0 + sqrt(b[0] * b[0] + b[1] * b[1])):
        return 0
    # fixed-point fallback
    u[0] = b[1]
    u[1] = b[0]
    for fp in range(100000):
        status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, b_hat)
        if status != 0:
            return status
        dr_update(u, b_hat, u_next)
        delta = sqrt((u_next[0] - u[0]) ** 2 + (u_next[1] - u[1]) ** 2)
        u[0] = u_next[0]
        u[1] = u_next[1]
        if delta <= tol:
            break
    status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
    if status != 0:
        return status
    b[0] = s[0]
    b[1] = s[1]
    u[0] = b[1]
    u[1] = b[0]
    status = frozen_pair(ma, mb, xa, xb, u, dt, gamma, ws, s)
    if status != 0:
        return status
    r[0] = b[0] - s[0]
    r[1] = b[1] - s[1]
    rnorm = sqrt(r[0] * r[0] + r[1] * r[1])
    if rnorm <= tol * (1.0 + sqrt(b[0] * b[0] + b[1] * b[1])):
        return 0
    return -4


def run_monolithic_trajectory(int kind_a, double[:] par_a, int kind_b, double[:] par_b,
                              double[:] xa0, double[:] xb0, double[:] b0,
                              double dt, double gamma, int n_steps, double tol):
    """Reference trajectory with the interface solved at every step."""
    cdef Model ma, mb
    model_init(&ma, kind_a, par_a)
    model_init(&mb, kind_b, par_b)
    cdef double ws = sqrt(dt / (2.0 * gamma))

    xa = np.empty((n_steps + 1, ma.n))
    xb = np.empty((n_steps + 1, mb.n))
    a_arr = np.empty((n_steps, 2))
    b_arr = np.empty((n_steps, 2))
    e_arr = np.empty((n_steps, 2))
    f_arr = np.empty((n_steps, 2))
    it_arr = np.zeros((n_steps, 2), dtype=np.int32)
    rs_arr = np.zeros((n_steps, 2))
    drift = np.zeros(n_steps)

    cdef double[:, :] xa_v = xa
    cdef double[:, :] xb_v = xb
    cdef double[:, :] a_v = a_arr
    cdef double[:, :] b_v = b_arr
    cdef double[:, :] e_v = e_arr
    cdef double[:, :] f_v = f_arr
    cdef int[:, :] it_v = it_arr
    cdef double[:, :] rs_v = rs_arr
    cdef double[:] drift_v = drift

    cdef double xal[3]
    cdef double xbl[3]
    cdef double b_star[2]
    cdef double a_inc[2]
    cdef double z[NZMAX]
    cdef double resid
    cdef int i, n, status, iters
    cdef int fail_status = 0
    cdef int fail_step = -1

    for i in range(ma.n):
        xal[i] = xa0[i]
        xa_v[0, i] = xa0[i]
    for i in range(mb.n):
        xbl[i] = xb0[i]
        xb_v[0, i] = xb0[i]
    b_star[0] = b0[0]
    b_star[1] = b0[1]

    with nogil:
        for n in range(n_steps):
            status = interface_solve(&ma, &mb, xal, xbl, b_star, dt, gamma, ws, tol, 50)
            if status != 0:
                fail_status = status
                fail_step = n
                break
            a_inc[0] = b_star[1]
            a_inc[1] = b_star[0]
            status = solve_step(&ma, xal, a_inc[0], dt, gamma, ws, z, &iters, &resid)
            if status != 0:
                fail_status = status
                fail_step = n
                break
            for i in range(ma.n):
                xal[i] = z[i]
                xa_v[n + 1, i] = z[i]
            e_v[n, 0] = z[ma.n]
            f_v[n, 0] = z[ma.n + 1]
            b_v[n, 0] = wave_out(z[ma.n], z[ma.n + 1], ws, gamma)
            it_v[n, 0] = iters
            rs_v[n, 0] = resid
            status = solve_step(&mb, xbl, a_inc[1], dt, gamma, ws, z, &iters, &resid)
            if status != 0:
                fail_status = status
                fail_step = n
                break
            for i in range(mb.n):
                xbl[i] = z[i]
                xb_v[n + 1, i] = z[i]
            e_v[n, 1] = z[mb.n]
            f_v[n, 1] = z[mb.n + 1]
            b_v[n, 1] = wave_out(z[mb.n], z[mb.n + 1], ws, gamma)
            it_v[n, 1] = iters
            rs_v[n, 1] = resid
            a_v[n, 0] = a_inc[0]
            a_v[n, 1] = a_inc[1]
            drift_v[n] = sqrt((b_v[n, 0] - b_star[0]) ** 2 + (b_v[n, 1] - b_star[1]) ** 2)
            b_star[0] = b_v[n, 0]
            b_star[1] = b_v[n, 1]
    if fail_status != 0:
        raise SolverFailure(
            f"macro step {fail_step + 1}: compiled monolithic solver failed "
            f"(status {fail_status})", 0.0, 0
        )
    return {
        "xa": xa, "xb": xb, "a": a_arr, "b": b_arr, "e": e_arr, "f": f_arr,
        "newton_iters": it_arr, "newton_resid": rs_arr, "drift": drift,
    }


def dr_fixed_point_single(int kind_a, double[:] par_a, int kind_b, double[:] par_b,
                          double[:] xa, double[:] xb, double[:] u0,
                          double dt, double gamma, double tol, int max_iter):
    """Reduced fixed-point iteration to stationarity; returns u_dagger."""
    cdef Model ma, mb
    model_init(&ma, kind_a, par_a)
    model_init(&mb, kind_b, par_b)
    cdef double ws = sqrt(dt / (2.0 * gamma))
    cdef double xal[3]
    cdef double xbl[3]
    cdef double u[2]
    cdef double u_next[2]
    cdef double b_hat[2]
    cdef double delta = 0.0
    cdef int i, it, status = 0
    cdef int converged = 0
    for i in range(ma.n):
        xal[i] = xa[i]
    for i in range(mb.n):
        xbl[i] = xb[i]
    u[0] = u0[0]
    u[1] = u0[1]
    with nogil:
        for it in range(max_iter):
            status = frozen_pair(&ma, &mb, xal, xbl, u, dt, gamma, ws, b_hat)
            if status != 0:
                break
            dr_update(u, b_hat, u_next)
            delta = sqrt((u_next[0] - u[0]) ** 2 + (u_next[1] - u[1]) ** 2)
            u[0] = u_next[0]
            u[1] = u_next[1]
            if delta <= tol:
                converged = 1
                break
    if status != 0:
        raise SolverFailure("compiled fixed-point step solver failed", 0.0, 0)
    if not converged:
        raise SolverFailure("inner fixed-point iteration did not converge", delta, max_iter)
    return np.array([u[0], u[1]])


def inner_loop_single(int kind_a, double[:] par_a, int kind_b, double[:] par_b,
                      double[:] xa, double[:] xb, double[:] b_prev,
                      double dt, double gamma, int budget, double eps):
    """One warm-started reduced inner loop; returns (iterates, shadows, residuals)."""
    cdef Model ma, mb
    model_init(&ma, kind_a, par_a)
    model_init(&mb, kind_b, par_b)
    cdef double ws = sqrt(dt / (2.0 * gamma))
    iterates = np.zeros((budget + 1, 2))
    shadows = np.zeros((max(budget, 1), 2))
    resids = np.zeros(max(budget, 1))
    cdef double[:, :] iter_v = iterates
    cdef double[:, :] shad_v = shadows
    cdef double[:] res_v = resids
    cdef double xal[3]
    cdef double xbl[3]
    cdef double u[2]
    cdef double u_next[2]
    cdef double b_hat[2]
    cdef double rstep
    cdef int i, k, used = 0, status = 0
    for i in range(ma.n):
        xal[i] = xa[i]
    for i in range(mb.n):
        xbl[i] = xb[i]
    u[0] = b_prev[1]
    u[1] = b_prev[0]
    iter_v[0, 0] = u[0]
    iter_v[0, 1] = u[1]
    with nogil:
        for k in range(budget):
            status = frozen_pair(&ma, &mb, xal, xbl, u, dt, gamma, ws, b_hat)
            if status != 0:
                break
            shad_v[k, 0] = b_hat[0]
            shad_v[k, 1] = b_hat[1]
            dr_update(u, b_hat, u_next)
            rstep = sqrt((u_next[0] - u[0]) ** 2 + (u_next[1] - u[1]) ** 2)
            res_v[k] = rstep
            iter_v[k + 1, 0] = u_next[0]
            iter_v[k + 1, 1] = u_next[1]
            u[0] = u_next[0]
            u[1] = u_next[1]
            used += 1
            if rstep <= eps:
                break
    if status != 0:
        raise SolverFailure("compiled inner-loop step solver failed", 0.0, 0)
    return iterates[: used + 1], shadows[:used], resids[:used]
