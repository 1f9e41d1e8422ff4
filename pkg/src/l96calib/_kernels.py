"""Compiled integration kernels.

Everything here is numba-jitted and operates on plain float64 arrays; the
public wrappers in `dynamics`, `statistics`, and `objective` own validation
and all object-level conveniences.  The fast-variable field is handled as a
single flat cyclic chain of length K*J (row-major flattening of the (K, J)
array), which makes the cross-block wraparound of the fast chain a plain
index shift.

Kernels mutate their state arguments in place and return a status integer:
-1 for a clean run, otherwise the 0-based index of the first step that
produced a non-finite (or absurdly large, |v| > 1e50) component.
"""

import os

os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numpy as np
from numba import njit, prange

# Accumulation modes for the integrate kernels.
ACC_NONE = 0
ACC_SUM = 1
ACC_SUM_SQ = 2

_BLOWUP_LIMIT = 1e50


@njit(cache=True)
def full_tendency(X, Yf, F, h, c, b, kp1, km1, km2, mp1, mp2, mm1, dX, dYf):
    """Two-scale tendency; Yf is the flat cyclic fast chain of length K*J."""
    K = X.shape[0]
    KJ = Yf.shape[0]
    J = KJ // K
    hc = h * c
    for k in range(K):
        s = 0.0
        base = k * J
        for j in range(J):
            s += Yf[base + j]
        dX[k] = -X[km1[k]] * (X[km2[k]] - X[kp1[k]]) - X[k] + F - hc * (s / J)
    hJ = h / J
    for m in range(KJ):
        dYf[m] = c * (-b * Yf[mp1[m]] * (Yf[mp2[m]] - Yf[mm1[m]]) - Yf[m] + hJ * X[m // J])


@njit(cache=True)
def fast_tendency(Y, h, c, b, x_fixed, jp1, jp2, jm1, dY):
    """Single-column fast chain with the slow variable frozen at x_fixed."""
    J = Y.shape[0]
    drive = (h / J) * x_fixed
    for j in range(J):
        dY[j] = c * (-b * Y[jp1[j]] * (Y[jp2[j]] - Y[jm1[j]]) - Y[j] + drive)


@njit(cache=True)
def _cyclic_offsets(n):
    p1 = np.empty(n, np.int64)
    p2 = np.empty(n, np.int64)
    m1 = np.empty(n, np.int64)
    m2 = np.empty(n, np.int64)
    for i in range(n):
        p1[i] = (i + 1) % n
        p2[i] = (i + 2) % n
        m1[i] = (i - 1) % n
        m2[i] = (i - 2) % n
    return p1, p2, m1, m2


@njit(cache=True)
def integrate_full(X, Yf, F, h, c, b, dt, nsteps, sums, sq, acc_mode):
    """Advance the full system nsteps RK4 steps, accumulating moment sums.

    sums/sq have length 5K (blocks X, Ybar, X2, XYbar, Y2bar); they receive
    dt-weighted post-step samples when acc_mode >= ACC_SUM, plus dt-weighted
    squares when acc_mode == ACC_SUM_SQ.
    """
    K = X.shape[0]
    KJ = Yf.shape[0]
    J = KJ // K
    kp1, _, km1, km2 = _cyclic_offsets(K)
    mp1, mp2, mm1, _ = _cyclic_offsets(KJ)

    k1x = np.empty(K)
    k2x = np.empty(K)
    k3x = np.empty(K)
    k4x = np.empty(K)
    k1y = np.empty(KJ)
    k2y = np.empty(KJ)
    k3y = np.empty(KJ)
    k4y = np.empty(KJ)
    tx = np.empty(K)
    ty = np.empty(KJ)

    for n in range(nsteps):
        full_tendency(X, Yf, F, h, c, b, kp1, km1, km2, mp1, mp2, mm1, k1x, k1y)
        for i in range(K):
            tx[i] = X[i] + 0.5 * dt * k1x[i]
        for i in range(KJ):
            ty[i] = Yf[i] + 0.5 * dt * k1y[i]
        full_tendency(tx, ty, F, h, c, b, kp1, km1, km2, mp1, mp2, mm1, k2x, k2y)
        for i in range(K):
            tx[i] = X[i] + 0.5 * dt * k2x[i]
        for i in range(KJ):
            ty[i] = Yf[i] + 0.5 * dt * k2y[i]
        full_tendency(tx, ty, F, h, c, b, kp1, km1, km2, mp1, mp2, mm1, k3x, k3y)
        for i in range(K):
            tx[i] = X[i] + dt * k3x[i]
        for i in range(KJ):
            ty[i] = Yf[i] + dt * k3y[i]
        full_tendency(tx, ty, F, h, c, b, kp1, km1, km2, mp1, mp2, mm1, k4x, k4y)
        for i in range(K):
            X[i] += (dt / 6.0) * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i])
        for i in range(KJ):
            Yf[i] += (dt / 6.0) * (k1y[i] + 2.0 * k2y[i] + 2.0 * k3y[i] + k4y[i])

        ok = True
        for i in range(K):
            v = X[i]
            if not (np.isfinite(v) and abs(v) < _BLOWUP_LIMIT):
                ok = False
        for i in range(KJ):
            v = Yf[i]
            if not (np.isfinite(v) and abs(v) < _BLOWUP_LIMIT):
                ok = False
        if not ok:
            return n

        if acc_mode >= ACC_SUM:
            for k in range(K):
                base = k * J
                s = 0.0
                s2 = 0.0
                for j in range(J):
                    y = Yf[base + j]
                    s += y
                    s2 += y * y
                x = X[k]
                ybar = s / J
                y2bar = s2 / J
                sums[k] += dt * x
                sums[K + k] += dt * ybar
                sums[2 * K + k] += dt * x * x
                sums[3 * K + k] += dt * x * ybar
                sums[4 * K + k] += dt * y2bar
                if acc_mode == ACC_SUM_SQ:
                    sq[k] += dt * x * x
                    sq[K + k] += dt * ybar * ybar
                    sq[2 * K + k] += dt * (x * x) * (x * x)
                    sq[3 * K + k] += dt * (x * ybar) * (x * ybar)
                    sq[4 * K + k] += dt * y2bar * y2bar
    return -1


@njit(cache=True)
def integrate_fast(Y, h, c, b, x_fixed, dt, nsteps, sums, sq, acc_mode):
    """Advance the fast-only chain, accumulating moment_g sums.

    sums/sq have length J + J(J+1)/2: first moments Y_j, then the pair
    products Y_j Y_j' for j <= j' in row-major upper-triangle order.
    """
    J = Y.shape[0]
    jp1, jp2, jm1, _ = _cyclic_offsets(J)

    k1 = np.empty(J)
    k2 = np.empty(J)
    k3 = np.empty(J)
    k4 = np.empty(J)
    ty = np.empty(J)

    for n in range(nsteps):
        fast_tendency(Y, h, c, b, x_fixed, jp1, jp2, jm1, k1)
        for j in range(J):
            ty[j] = Y[j] + 0.5 * dt * k1[j]
        fast_tendency(ty, h, c, b, x_fixed, jp1, jp2, jm1, k2)
        for j in range(J):
            ty[j] = Y[j] + 0.5 * dt * k2[j]
        fast_tendency(ty, h, c, b, x_fixed, jp1, jp2, jm1, k3)
        for j in range(J):
            ty[j] = Y[j] + dt * k3[j]
        fast_tendency(ty, h, c, b, x_fixed, jp1, jp2, jm1, k4)
        for j in range(J):
            Y[j] += (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])

        ok = True
        for j in range(J):
            v = Y[j]
            if not (np.isfinite(v) and abs(v) < _BLOWUP_LIMIT):
                ok = False
        if not ok:
            return n

        if acc_mode >= ACC_SUM:
            for j in range(J):
                sums[j] += dt * Y[j]
                if acc_mode == ACC_SUM_SQ:
                    sq[j] += dt * Y[j] * Y[j]
            pos = J
            for j in range(J):
                for jp in range(j, J):
                    p = Y[j] * Y[jp]
                    sums[pos] += dt * p
                    if acc_mode == ACC_SUM_SQ:
                        sq[pos] += dt * p * p
                    pos += 1
    return -1


@njit(cache=True, parallel=True)
def ensemble_integrate_full(Xs, Yfs, thetas, dt, nsteps, sums, statuses):
    """Integrate M independent full-system trajectories, one per row.

    Xs: (M, K), Yfs: (M, K*J), thetas: (M, 4) rows (F, h, c, b),
    sums: (M, 5K) moment sums, statuses: (M,) per-member blow-up step.
    States and sums are updated in place; rows are fully independent, so
    the prange schedule cannot affect the results.
    """
    M = Xs.shape[0]
    for m in prange(M):
        statuses[m] = integrate_full(
            Xs[m], Yfs[m], thetas[m, 0], thetas[m, 1], thetas[m, 2], thetas[m, 3],
            dt, nsteps, sums[m], sums[m], ACC_SUM,
        )


@njit(cache=True, parallel=True)
def ensemble_integrate_fast(Ys, thetas, x_fixed, dt, nsteps, sums, statuses):
    """Fast-chain counterpart of ensemble_integrate_full; thetas rows (h, c, b)."""
    M = Ys.shape[0]
    for m in prange(M):
        statuses[m] = integrate_fast(
            Ys[m], thetas[m, 0], thetas[m, 1], thetas[m, 2], x_fixed,
            dt, nsteps, sums[m], sums[m], ACC_SUM,
        )
