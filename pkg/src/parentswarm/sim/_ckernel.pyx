# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled closed-loop kernel. Same algorithm as pyengine.PythonEngine, in typed C loops."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, tan, tanh, cosh, fabs, isfinite, M_PI

from . import problem as _pb

cnp.import_array()

cdef enum:
    OK = 0
    NONFINITE = 1
    BREACH = 2
    SINGULAR = 3
    SECANT = 4
    INERTIA = 5


cdef struct Params:
    int mode, n, hard_stop
    double J, g, g1, g2, g3, g4, g5, g6
    double theta_max, half_l, tau_max, quad, offset
    double k1, k2, a1, a2, ks, beta, gb2, gb3, gb5, hw
    double tra, trw, dsa, dsw
    double K1, K2, Kp1, Kp2, Kd1, Kd2, ksd
    double dt, falpha, eps
    double e2_0
    double G[4][4]
    double lam0[4]
    double b0[4]


cdef struct Extras:
    double tau, tau_raw, Md, Jsd, ad0, ad1, thdd, e2, theta_d
    double lam[4]


cdef inline double sech2(double x) nogil:
    cdef double c = cosh(x)
    return 1.0 / (c * c)


cdef inline double clampd(double x, double lim) nogil:
    if x > lim:
        return lim
    if x < -lim:
        return -lim
    return x


cdef inline double signd(double x) nogil:
    return (x > 0) - (x < 0)


cdef inline double hpart(double k, double w, double acc, double jerk) nogil:
    return k * sech2(k * w) * (jerk - 2.0 * k * tanh(k * w) * acc * acc)


cdef int parent_raw(Params* P, double t, double* X, double* raw, double* e2out) nogil:
    """Unclamped desired torque and e2 (both independent of theta_ddot)."""
    cdef double theta = X[0], omega = X[1]
    cdef int n = P.n
    cdef double d0, d1, d2, d3, e1, e2, Q, s, c, w
    cdef double Y[4]
    cdef double Yd[4]
    cdef double lam[4]
    cdef int i, j
    if P.mode == 0:
        raw[0] = P.k1 * theta + P.k2 * omega
        e2out[0] = 0.0
        return OK
    if fabs(theta) >= M_PI / 2:
        return SECANT
    w = P.trw
    s = sin(w * t)
    c = cos(w * t)
    d0 = P.tra * s
    d1 = P.tra * w * c
    d2 = -P.tra * w * w * s
    d3 = -P.tra * w * w * w * c
    e1 = d0 - theta
    e2 = (d1 - omega) + P.a1 * e1
    Y[0] = d2
    Y[1] = tanh(P.gb2 * d1) - tanh(P.gb3 * d1)
    Y[2] = tanh(P.gb5 * d1)
    Y[3] = d1
    Yd[0] = d3
    Yd[1] = (P.gb2 * sech2(P.gb2 * d1) - P.gb3 * sech2(P.gb3 * d1)) * d2
    Yd[2] = P.gb5 * sech2(P.gb5 * d1) * d2
    Yd[3] = d2
    Q = 0.0
    for i in range(4):
        lam[i] = P.lam0[i]
        for j in range(4):
            lam[i] += P.G[i][j] * (Yd[j] * e2 - P.b0[j]) - P.G[i][j] * X[2 + 2 * n + 1 + j]
        Q += Y[i] * lam[i]
    Q += (P.ks + 1.0) * (e2 - P.e2_0) + X[2 + 2 * n]
    raw[0] = -Q / cos(theta)
    e2out[0] = e2
    return OK


cdef int evaluate(Params* P, double t, double* X, int sat, double sgn_frozen, double* add,
                  double* m, double* c, int* is_di, double* dx, double* u0, double* u1,
                  double* veff, Extras* ex) nogil:
    cdef int n = P.n
    cdef int i, j
    cdef double theta = X[0], omega = X[1]
    cdef double* p = X + 2
    cdef double* v = X + 2 + n
    cdef double M1 = 0.0, Js = 0.0, S0 = 0.0, S1 = 0.0, S2 = 0.0, S3 = 0.0, pbar, w2, dp
    cdef double raw, tau, td0, td1, ad00, ad01, ad10, ad11
    cdef double d0 = 0.0, d1 = 0.0, d2 = 0.0, d3 = 0.0, d4 = 0.0
    cdef double e1, e1d, e2, Q, ks1, s, cth, YGYd, e2d0, Qd0, Qd1, mu1d, sn, cs, wt
    cdef double Y[4]
    cdef double Yd[4]
    cdef double Ydd[4]
    cdef double lam[4]
    cdef double GYd[4]
    cdef double e0, eJ, r0, r1, q0, q1, Jd0, Jd1, A, denom, thdd, ff, dist
    cdef double ad0, ad1, am, aj, ed0, ed1, pp2, Ca11, Ca12, Ca21, Ca22, gain, Ai, Bi, b0_, b1_
    cdef double dJ

    for i in range(n):
        M1 += m[i] * p[i]
        Js += m[i] * p[i] * p[i]
        w2 = m[i] * m[i]
        S0 += w2
        S1 += w2 * p[i]
        S2 += w2 * p[i] * p[i]
    pbar = S1 / S0
    for i in range(n):
        dp = p[i] - pbar
        S3 += m[i] * m[i] * dp * dp
    S3 *= S0
    if not (S3 > P.eps * S0 * S0 * P.half_l * P.half_l):
        return SINGULAR

    ex.lam[0] = 0.0
    ex.lam[1] = 0.0
    ex.lam[2] = 0.0
    ex.lam[3] = 0.0
    ex.e2 = 0.0
    ex.theta_d = 0.0
    mu1d = 0.0
    if P.mode == 0:
        raw = P.k1 * theta + P.k2 * omega
        tau = clampd(raw, P.tau_max)
        if sat:
            td0 = 0.0
            td1 = 0.0
        else:
            td0 = P.k1 * omega
            td1 = P.k2
    else:
        if fabs(theta) >= M_PI / 2:
            return SECANT
        wt = P.trw
        sn = sin(wt * t)
        cs = cos(wt * t)
        d0 = P.tra * sn
        d1 = P.tra * wt * cs
        d2 = -P.tra * wt * wt * sn
        d3 = -P.tra * wt * wt * wt * cs
        d4 = P.tra * wt * wt * wt * wt * sn
        e1 = d0 - theta
        e1d = d1 - omega
        e2 = e1d + P.a1 * e1
        Y[0] = d2
        Y[1] = tanh(P.gb2 * d1) - tanh(P.gb3 * d1)
        Y[2] = tanh(P.gb5 * d1)
        Y[3] = d1
        Yd[0] = d3
        Yd[1] = (P.gb2 * sech2(P.gb2 * d1) - P.gb3 * sech2(P.gb3 * d1)) * d2
        Yd[2] = P.gb5 * sech2(P.gb5 * d1) * d2
        Yd[3] = d2
        Ydd[0] = d4
        Ydd[1] = hpart(P.gb2, d1, d2, d3) - hpart(P.gb3, d1, d2, d3)
        Ydd[2] = hpart(P.gb5, d1, d2, d3)
        Ydd[3] = d3
        Q = 0.0
        for i in range(4):
            lam[i] = P.lam0[i]
            GYd[i] = 0.0
            for j in range(4):
                lam[i] += P.G[i][j] * (Yd[j] * e2 - P.b0[j]) - P.G[i][j] * X[2 + 2 * n + 1 + j]
                GYd[i] += P.G[i][j] * Yd[j]
            Q += Y[i] * lam[i]
        ks1 = P.ks + 1.0
        if P.hw > 0:
            s = clampd(e2 / P.hw, 1.0)
        else:
            s = sgn_frozen
        mu1d = ks1 * P.a2 * e2 + P.beta * s
        dx[2 + 2 * n] = mu1d
        for i in range(4):
            dx[2 + 2 * n + 1 + i] = Ydd[i] * e2 - P.a2 * Yd[i] * e2
        Q += ks1 * (e2 - P.e2_0) + X[2 + 2 * n]
        cth = cos(theta)
        raw = -Q / cth
        YGYd = 0.0
        Qd0 = 0.0
        for i in range(4):
            YGYd += Y[i] * GYd[i]
            Qd0 += Yd[i] * lam[i]
        e2d0 = d2 + P.a1 * e1d
        Qd0 += YGYd * (e2d0 + P.a2 * e2) + ks1 * e2d0 + mu1d
        Qd1 = -(YGYd + ks1)
        tau = clampd(raw, P.tau_max)
        if sat:
            td0 = 0.0
            td1 = 0.0
        else:
            td0 = -(tan(theta) * omega * Q + Qd0) / cth
            td1 = -Qd1 / cth
        for i in range(4):
            ex.lam[i] = lam[i]
        ex.e2 = e2
        ex.theta_d = d0

    dJ = 2.0 * P.quad * tau
    ad00 = td0 / P.g
    ad01 = dJ * td0
    ad10 = td1 / P.g
    ad11 = dJ * td1
    e0 = tau / P.g - M1
    eJ = P.quad * tau * tau + P.offset - Js

    # SI commands, affine in theta_ddot
    q0 = P.K1 * e0 + ad00
    q1 = P.K2 * eJ + ad01
    Jd0 = 0.0
    Jd1 = 0.0
    for i in range(n):
        r0 = m[i] * (S2 - p[i] * S1) / S3
        r1 = 0.5 * m[i] * (p[i] * S0 - S1) / S3
        if is_di[i]:
            Jd0 += 2.0 * m[i] * p[i] * v[i]
        else:
            u0[i] = r0 * q0 + r1 * q1
            u1[i] = r0 * ad10 + r1 * ad11
            Jd0 += 2.0 * m[i] * p[i] * u0[i]
            Jd1 += 2.0 * m[i] * p[i] * u1[i]

    ff = P.g1 * (tanh(P.g2 * omega) - tanh(P.g3 * omega)) + P.g4 * tanh(P.g5 * omega) + P.g6 * omega
    dist = P.dsa * sin(P.dsw * t)
    A = -cos(theta) * P.g * M1 - ff - dist
    denom = P.J + Js + omega * Jd1
    if not (denom > 0):
        return INERTIA
    thdd = (A - omega * Jd0) / denom

    ad0 = ad00 + ad10 * thdd
    ad1 = ad01 + ad11 * thdd
    am = 0.0
    aj = 0.0
    pp2 = 0.0
    for i in range(n):
        if is_di[i]:
            veff[i] = v[i]
        else:
            veff[i] = u0[i] + u1[i] * thdd
        am += m[i] * veff[i]
        aj += 2.0 * m[i] * p[i] * veff[i]
        pp2 += 2.0 * m[i] * veff[i] * veff[i]
    ed0 = ad0 - am
    ed1 = ad1 - aj

    Ca11 = 0.0
    Ca12 = 0.0
    Ca21 = 0.0
    Ca22 = 0.0
    for i in range(n):
        if is_di[i]:
            gain = c[i] + P.ksd
            Ai = m[i] * (S2 - p[i] * S1)
            Bi = 0.5 * m[i] * (p[i] * S0 - S1)
            Ca11 += gain * Ai
            Ca12 += gain * Bi
            Ca21 += p[i] * gain * Ai
            Ca22 += p[i] * gain * Bi
    Ca11 /= S3
    Ca12 /= S3
    Ca21 = 2.0 * Ca21 / S3
    Ca22 = 2.0 * Ca22 / S3
    b0_ = P.Kp1 * e0 + ((P.Kd1 - Ca11) * ed0 - Ca12 * ed1) + add[0]
    b1_ = P.Kp2 * eJ + (-Ca21 * ed0 + (P.Kd2 - Ca22) * ed1) - pp2 + add[1]

    dx[0] = omega
    dx[1] = thdd
    for i in range(n):
        if is_di[i]:
            r0 = m[i] * (S2 - p[i] * S1) / S3
            r1 = 0.5 * m[i] * (p[i] * S0 - S1) / S3
            dx[2 + i] = v[i]
            dx[2 + n + i] = ((r0 * b0_ + r1 * b1_) * m[i] + (c[i] + P.ksd) * (r0 * ad0 + r1 * ad1)
                             - P.ksd * v[i] - c[i] * v[i]) / m[i]
        else:
            dx[2 + i] = veff[i]
            dx[2 + n + i] = 0.0
    if P.mode == 0:
        for i in range(5):
            dx[2 + 2 * n + i] = 0.0

    ex.tau = tau
    ex.tau_raw = raw
    ex.Md = tau / P.g
    ex.Jsd = P.quad * tau * tau + P.offset
    ex.ad0 = ad0
    ex.ad1 = ad1
    ex.thdd = thdd
    return OK


cdef void write_row(Params* P, double[:, ::1] log, Py_ssize_t row, double t, double* X,
                    double* m, double* veff, Extras* ex, int fth, int fp) nogil:
    cdef int n = P.n
    cdef int i, k = 0
    cdef double M1 = 0.0, Js = 0.0, Jd = 0.0, Mdot = 0.0
    log[row, 0] = t
    log[row, 1] = X[0]
    log[row, 2] = X[1]
    log[row, 3] = ex.theta_d
    for i in range(n):
        log[row, 4 + i] = X[2 + i]
        log[row, 4 + n + i] = veff[i]
        M1 += m[i] * X[2 + i]
        Js += m[i] * X[2 + i] * X[2 + i]
        Jd += 2.0 * m[i] * X[2 + i] * veff[i]
        Mdot += m[i] * veff[i]
    k = 4 + 2 * n
    log[row, k] = ex.tau
    log[row, k + 1] = ex.Md
    log[row, k + 2] = ex.Jsd
    log[row, k + 3] = M1
    log[row, k + 4] = Js
    log[row, k + 5] = Jd
    log[row, k + 6] = ex.Md - M1
    log[row, k + 7] = ex.Jsd - Js
    log[row, k + 8] = ex.ad0 - Mdot
    log[row, k + 9] = ex.ad1 - Jd
    log[row, k + 10] = ex.thdd
    log[row, k + 11] = 0.0
    log[row, k + 12] = 0.0
    for i in range(4):
        log[row, k + 13 + i] = ex.lam[i]
    log[row, k + 17] = X[2 + 2 * n]
    log[row, k + 18] = fth
    log[row, k + 19] = fp


cdef int run_loop(Params* P, double[::1] X, double[::1] Xt, double[::1] k1, double[::1] k2,
                  double[::1] k3, double[::1] k4, double[::1] m, double[::1] c, int[::1] is_di,
                  double[::1] u0, double[::1] u1, double[::1] veff, long n_steps, int dec,
                  double[:, ::1] log, Py_ssize_t* rows, double* t_fail) nogil:
    cdef int n = P.n
    cdef int ns = 2 + 2 * n + 5
    cdef long k
    cdef int i, status, sat, fth, fp
    cdef double t, dt = P.dt, raw, e2, sgn_fr, h
    cdef double add[2]
    cdef double prev[2]
    cdef int have_prev = 0
    cdef Extras ex
    cdef Py_ssize_t row = 0
    add[0] = 0.0
    add[1] = 0.0
    for k in range(n_steps + 1):
        t = k * dt
        status = parent_raw(P, t, &X[0], &raw, &e2)
        if status != OK:
            t_fail[0] = t
            rows[0] = row
            return status
        sat = fabs(raw) > P.tau_max
        sgn_fr = signd(e2)
        status = evaluate(P, t, &X[0], sat, sgn_fr, add, &m[0], &c[0], &is_di[0], &k1[0],
                          &u0[0], &u1[0], &veff[0], &ex)
        if status != OK:
            t_fail[0] = t
            rows[0] = row
            return status
        if not have_prev:
            prev[0] = ex.ad0
            prev[1] = ex.ad1
            have_prev = 1
        add[0] = add[0] + P.falpha * ((ex.ad0 - prev[0]) / dt - add[0])
        add[1] = add[1] + P.falpha * ((ex.ad1 - prev[1]) / dt - add[1])
        prev[0] = ex.ad0
        prev[1] = ex.ad1
        fp = 0
        for i in range(n):
            X[2 + n + i] = veff[i]
            if fabs(X[2 + i]) > P.half_l:
                fp = 1
        fth = fabs(X[0]) > P.theta_max
        if k % dec == 0:
            write_row(P, log, row, t, &X[0], &m[0], &veff[0], &ex, fth, fp)
            row += 1
        if P.hard_stop and (fth or fp):
            t_fail[0] = t
            rows[0] = row
            return BREACH
        if k == n_steps:
            break
        # classic RK4 with sat / sign / add held fixed
        h = 0.5 * dt
        status = evaluate(P, t, &X[0], sat, sgn_fr, add, &m[0], &c[0], &is_di[0], &k1[0],
                          &u0[0], &u1[0], &veff[0], &ex)
        if status == OK:
            for i in range(ns):
                Xt[i] = X[i] + h * k1[i]
            status = evaluate(P, t + h, &Xt[0], sat, sgn_fr, add, &m[0], &c[0], &is_di[0], &k2[0],
                              &u0[0], &u1[0], &veff[0], &ex)
        if status == OK:
            for i in range(ns):
                Xt[i] = X[i] + h * k2[i]
            status = evaluate(P, t + h, &Xt[0], sat, sgn_fr, add, &m[0], &c[0], &is_di[0], &k3[0],
                              &u0[0], &u1[0], &veff[0], &ex)
        if status == OK:
            for i in range(ns):
                Xt[i] = X[i] + dt * k3[i]
            status = evaluate(P, t + dt, &Xt[0], sat, sgn_fr, add, &m[0], &c[0], &is_di[0], &k4[0],
                              &u0[0], &u1[0], &veff[0], &ex)
        if status != OK:
            t_fail[0] = t
            rows[0] = row
            return status
        for i in range(ns):
            X[i] = X[i] + (dt / 6.0) * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
            if not isfinite(X[i]):
                t_fail[0] = t + dt
                rows[0] = row
                return NONFINITE
    rows[0] = row
    return OK


cdef Params pack(prob):
    cdef Params P
    S = prob.scalars()
    P.mode = prob.mode
    P.n = prob.n
    P.hard_stop = 1 if prob.hard_stop else 0
    P.J = S[_pb.I_J]
    P.g = S[_pb.I_G]
    P.g1 = S[_pb.I_G1]
    P.g2 = S[_pb.I_G2]
    P.g3 = S[_pb.I_G3]
    P.g4 = S[_pb.I_G4]
    P.g5 = S[_pb.I_G5]
    P.g6 = S[_pb.I_G6]
    P.theta_max = S[_pb.I_THMAX]
    P.half_l = S[_pb.I_HALFL]
    P.tau_max = S[_pb.I_TAUMAX]
    P.quad = S[_pb.I_QUAD]
    P.offset = S[_pb.I_OFF]
    P.k1 = S[_pb.I_K1]
    P.k2 = S[_pb.I_K2]
    P.a1 = S[_pb.I_A1]
    P.a2 = S[_pb.I_A2]
    P.ks = S[_pb.I_KS]
    P.beta = S[_pb.I_BETA]
    P.gb2 = S[_pb.I_GB2]
    P.gb3 = S[_pb.I_GB3]
    P.gb5 = S[_pb.I_GB5]
    P.hw = S[_pb.I_HW]
    P.tra = S[_pb.I_TRA]
    P.trw = S[_pb.I_TRW]
    P.dsa = S[_pb.I_DSA]
    P.dsw = S[_pb.I_DSW]
    P.K1 = S[_pb.I_KS1]
    P.K2 = S[_pb.I_KS2]
    P.Kp1 = S[_pb.I_KP1]
    P.Kp2 = S[_pb.I_KP2]
    P.Kd1 = S[_pb.I_KD1]
    P.Kd2 = S[_pb.I_KD2]
    P.ksd = S[_pb.I_KSD]
    P.dt = S[_pb.I_DT]
    P.falpha = S[_pb.I_FALPHA]
    P.eps = S[_pb.I_EPS]
    P.e2_0 = prob.e2_0
    G = prob.gamma_matrix()
    lam0 = prob.lambda0()
    b0 = np.asarray(prob.boundary0, dtype=float)
    for i in range(4):
        P.lam0[i] = lam0[i]
        P.b0[i] = b0[i]
        for j in range(4):
            P.G[i][j] = G[i, j]
    return P


def run(prob):
    """Run the closed loop. Returns (log, status, t_fail)."""
    cdef Params P = pack(prob)
    n = prob.n
    ns = prob.n_state
    cdef double[::1] X = np.ascontiguousarray(prob.x0, dtype=float).copy()
    cdef double[::1] Xt = np.zeros(ns)
    cdef double[::1] k1 = np.zeros(ns)
    cdef double[::1] k2 = np.zeros(ns)
    cdef double[::1] k3 = np.zeros(ns)
    cdef double[::1] k4 = np.zeros(ns)
    cdef double[::1] m = np.ascontiguousarray(prob.swarm0.masses, dtype=float)
    cdef double[::1] c = np.ascontiguousarray(prob.swarm0.dampings, dtype=float)
    cdef int[::1] is_di = np.ascontiguousarray(prob.swarm0.is_di, dtype=np.intc)
    cdef double[::1] u0 = np.zeros(n)
    cdef double[::1] u1 = np.zeros(n)
    cdef double[::1] veff = np.zeros(n)
    log_arr = np.zeros((prob.n_rows, len(prob.columns)))
    cdef double[:, ::1] log = log_arr
    cdef long n_steps = prob.n_steps
    cdef int dec = prob.decimation
    cdef Py_ssize_t rows = 0
    cdef double t_fail = float("nan")
    cdef int status
    with nogil:
        status = run_loop(&P, X, Xt, k1, k2, k3, k4, m, c, is_di, u0, u1, veff, n_steps, dec,
                          log, &rows, &t_fail)
    return log_arr[:rows], int(status), t_fail
