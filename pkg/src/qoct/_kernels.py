"""Compiled inner loops.

Every propagation pass takes a ``step`` and a ``dip`` function so the same
loop serves grid and N-level systems.  Parameter tuples ``P`` are built in
:mod:`qoct.propagator`.

Grid params:    (V, D, kin / n, half_dt, dx, bitrev, twiddles, conj twiddles,
                 exp(-iV dt/2), D(x_0), D step, affine flag)
N-level params: (Uf, Ub, W, Q, Qh, M, dt), or (UQ, QhU, UbQ, QhUb, W, M, dt)
for a single polarization
"""

import numpy as np
from numba import njit


WORK_ROWS = 4


@njit(cache=True)
def fft_inplace(a, rev, stw):
    """Unnormalized radix-2 DFT in place.

    ``stw`` holds the twiddles of every stage back to back (size 2, 4, ... n);
    pass the conjugated table for the inverse transform.
    """
    n = a.shape[0]
    for i in range(n):
        j = rev[i]
        if i < j:
            t = a[i]
            a[i] = a[j]
            a[j] = t
    for j in range(0, n, 2):
        t = a[j + 1]
        a[j + 1] = a[j] - t
        a[j] = a[j] + t
    size = 4
    off = 1
    while size <= n:
        half = size // 2
        for start in range(0, n, size):
            for k in range(half):
                t = stw[off + k] * a[start + k + half]
                u = a[start + k]
                a[start + k + half] = u - t
                a[start + k] = u + t
        off += half
        size *= 2


_RESTART = 32  # recurrence restart length for the field phase


@njit(cache=True)
def _field_phase(eps, sgn, P, ph):
    # ph[x] = exp(-i sgn (V - sum_j D_j eps_j) dt/2)
    V = P[0]
    D = P[1]
    hdt = P[3]
    eV = P[8]
    n = V.shape[0]
    if P[11]:
        # affine dipoles: the field factor is geometric along the grid
        D0 = P[9]
        Dd = P[10]
        th0 = 0.0
        thd = 0.0
        for j in range(D.shape[0]):
            th0 += eps[j] * D0[j]
            thd += eps[j] * Dd[j]
        th0 *= sgn * hdt
        thd *= sgn * hdt
        r = complex(np.cos(thd), np.sin(thd))
        for s in range(0, n, _RESTART):
            a = th0 + s * thd
            z = complex(np.cos(a), np.sin(a))
            for x in range(s, min(s + _RESTART, n)):
                e = eV[x] if sgn > 0 else eV[x].conjugate()
                ph[x] = e * z
                z *= r
    else:
        for x in range(n):
            v = V[x]
            for j in range(D.shape[0]):
                v -= D[j, x] * eps[j]
            a = -sgn * v * hdt
            ph[x] = complex(np.cos(a), np.sin(a))


@njit(cache=True)
def grid_step(psi, out, eps, sgn, P, work):
    # exp(-iV dt/2) exp(-iT dt) exp(-iV dt/2); sgn=-1 is the exact inverse.
    # kin already carries the 1/n of the inverse transform.
    kin = P[2]
    rev = P[5]
    n = psi.shape[0]
    ph = work[0]
    _field_phase(eps, sgn, P, ph)
    for x in range(n):
        out[x] = psi[x] * ph[x]
    fft_inplace(out, rev, P[6])
    if sgn > 0:
        for m in range(n):
            out[m] *= kin[m]
    else:
        for m in range(n):
            out[m] *= kin[m].conjugate()
    fft_inplace(out, rev, P[7])
    for x in range(n):
        out[x] *= ph[x]


@njit(cache=True)
def grid_dip(chi, psi, P, out):
    D = P[1]
    dx = P[4]
    for j in range(D.shape[0]):
        s = 0j
        for x in range(psi.shape[0]):
            s += chi[x].conjugate() * D[j, x] * psi[x]
        out[j] = s * dx


@njit(cache=True)
def _matvec(A, v, out):
    n = A.shape[0]
    for r in range(n):
        s = 0j
        for c in range(A.shape[1]):
            s += A[r, c] * v[c]
        out[r] = s


@njit(cache=True)
def _dipole_kick(src, dst, tmp, W, Q, Qh, j, amp):
    # dst = exp(+i mu_j amp) src through the eigenbasis of mu_j
    _matvec(Qh[j], src, tmp)
    for r in range(tmp.shape[0]):
        a = W[j, r] * amp
        tmp[r] *= complex(np.cos(a), np.sin(a))
    _matvec(Q[j], tmp, dst)


@njit(cache=True)
def nl_step(psi, out, eps, sgn, P, work):
    Uf, Ub, W, Q, Qh, M, dt = P
    U = Uf if sgn > 0 else Ub
    a = work[0]
    b = work[1]
    tmp = work[2]
    _matvec(U, psi, a)
    m = W.shape[0]
    # symmetric ordering of the dipole kicks keeps second order for m > 1
    for j in range(m - 1):
        _dipole_kick(a, b, tmp, W, Q, Qh, j, 0.5 * sgn * eps[j] * dt)
        a, b = b, a
    _dipole_kick(a, b, tmp, W, Q, Qh, m - 1, sgn * eps[m - 1] * dt)
    a, b = b, a
    for j in range(m - 2, -1, -1):
        _dipole_kick(a, b, tmp, W, Q, Qh, j, 0.5 * sgn * eps[j] * dt)
        a, b = b, a
    _matvec(U, a, out)


@njit(cache=True)
def nl_step1(psi, out, eps, sgn, P, work):
    # single polarization: U Q diag(e^{i w mu eps dt}) Q^+ U with U Q and Q^+ U
    # premultiplied; P is indexed rather than unpacked to skip refcount traffic
    A = P[0] if sgn > 0 else P[2]
    B = P[1] if sgn > 0 else P[3]
    W = P[4]
    amp = sgn * eps[0] * P[6]
    n = psi.shape[0]
    for r in range(n):
        s = 0j
        for c in range(n):
            s += B[r, c] * psi[c]
        a = W[0, r] * amp
        work[0, r] = s * complex(np.cos(a), np.sin(a))
    for r in range(n):
        s = 0j
        for c in range(n):
            s += A[r, c] * work[0, c]
        out[r] = s


@njit(cache=True)
def nl_dip(chi, psi, P, out):
    M = P[5]
    n = psi.shape[0]
    for j in range(M.shape[0]):
        s = 0j
        for r in range(n):
            t = 0j
            for c in range(n):
                t += M[j, r, c] * psi[c]
            s += chi[r].conjugate() * t
        out[j] = s


@njit(cache=True)
def _overlap(a, b, w):
    s = 0j
    for x in range(a.shape[0]):
        s += a[x].conjugate() * b[x]
    return s * w


@njit(cache=True)
def step_once(step, psi, eps, sgn, P):
    out = np.empty_like(psi)
    work = np.empty((WORK_ROWS, psi.shape[0]), np.complex128)
    step(psi, out, eps, sgn, P, work)
    return out


@njit(cache=True)
def run_plain(step, psi, eps, sgn, P, traj):
    """Propagate with a fixed field.  eps has shape (n, n_pol).

    traj is (n+1, N) to record states or (0, N) to skip storage.
    """
    n = eps.shape[0]
    store = traj.shape[0] > 0
    work = np.empty((WORK_ROWS, psi.shape[0]), np.complex128)
    cur = psi.copy()
    nxt = np.empty_like(cur)
    if sgn > 0:
        if store:
            traj[0] = cur
        for i in range(n):
            step(cur, nxt, eps[i], 1.0, P, work)
            cur, nxt = nxt, cur
            if store:
                traj[i + 1] = cur
    else:
        if store:
            traj[n] = cur
        for i in range(n - 1, -1, -1):
            step(cur, nxt, eps[i], -1.0, P, work)
            cur, nxt = nxt, cur
            if store:
                traj[i] = cur
    return cur


@njit(cache=True)
def run_forward_fb(step, dip, psi, chi_blk, ref, a, b, inv_alpha, rapid, w, P,
                   traj, eps_out):
    """Forward pass with immediate feedback.

    Field on interval i is a*ref[i] + b*fb(chi_i, psi_i) with
    fb = -(1/alpha) Im[<psi|chi> <chi|mu|psi>] (overlap factor only if rapid).
    """
    m = ref.shape[0]
    npol = ref.shape[1]
    store = traj.shape[0] > 0
    d = np.empty(npol, np.complex128)
    work = np.empty((WORK_ROWS, psi.shape[0]), np.complex128)
    cur = psi.copy()
    nxt = np.empty_like(cur)
    if store:
        traj[0] = cur
    for i in range(m):
        dip(chi_blk[i], cur, P, d)
        ov = _overlap(cur, chi_blk[i], w) if rapid else 1.0 + 0j
        for j in range(npol):
            eps_out[i, j] = a * ref[i, j] - b * inv_alpha[j] * (d[j] * ov).imag
        step(cur, nxt, eps_out[i], 1.0, P, work)
        cur, nxt = nxt, cur
        if store:
            traj[i + 1] = cur
    return cur


@njit(cache=True)
def run_backward_fb(step, dip, chi, psi_blk, ref, a, b, inv_alpha, rapid, w, P,
                    src, h, traj, eps_out):
    """Backward pass with feedback and an optional trapezoid source.

    chi enters as the state at the block end.  Interval i uses the field from
    (chi_{i+1}, psi_{i+1}); the source update is
    chi_i = U_i^-1 (chi_{i+1} + h s_{i+1}) + h s_i.
    """
    m = ref.shape[0]
    npol = ref.shape[1]
    store = traj.shape[0] > 0
    has_src = src.shape[0] > 0
    d = np.empty(npol, np.complex128)
    work = np.empty((WORK_ROWS, chi.shape[0]), np.complex128)
    cur = chi.copy()
    nxt = np.empty_like(cur)
    if store:
        traj[m] = cur
    for i in range(m - 1, -1, -1):
        dip(cur, psi_blk[i + 1], P, d)
        ov = _overlap(psi_blk[i + 1], cur, w) if rapid else 1.0 + 0j
        for j in range(npol):
            eps_out[i, j] = a * ref[i, j] - b * inv_alpha[j] * (d[j] * ov).imag
        if has_src:
            for x in range(cur.shape[0]):
                cur[x] += h * src[i + 1, x]
        step(cur, nxt, eps_out[i], -1.0, P, work)
        cur, nxt = nxt, cur
        if has_src:
            for x in range(cur.shape[0]):
                cur[x] += h * src[i, x]
        if store:
            traj[i] = cur
    return cur


@njit(cache=True)
def tdse_residual(step, psi_blk, chi_blk, eps, P, w):
    """Sum_i <chi_{i+1}| i(psi_{i+1} - U_i psi_i)>, the discrete J3 integrand."""
    s = 0j
    work = np.empty((WORK_ROWS, psi_blk.shape[1]), np.complex128)
    up = np.empty(psi_blk.shape[1], np.complex128)
    for i in range(eps.shape[0]):
        step(psi_blk[i], up, eps[i], 1.0, P, work)
        r = 0j
        for x in range(up.shape[0]):
            r += chi_blk[i + 1, x].conjugate() * (psi_blk[i + 1, x] - up[x])
        s += 1j * r * w
    return s


@njit(cache=True)
def imag_time_solve(psi, lower, V, tk, dtau, dx, tol, max_steps, check, rev, stw, stwc):
    """Imaginary-time relaxation with Gram-Schmidt against ``lower`` states.

    Uses exp(-V dtau/2) exp(-T dtau) exp(-V dtau/2).  Returns (psi, energy,
    steps, converged).
    """
    n = psi.shape[0]
    eV = np.exp(-0.5 * dtau * V)
    eT = np.exp(-dtau * tk) / n
    psi = psi.copy()
    hp = np.empty_like(psi)
    e_old = np.inf
    energy = np.inf
    for s in range(1, max_steps + 1):
        for x in range(n):
            psi[x] *= eV[x]
        fft_inplace(psi, rev, stw)
        for m in range(n):
            psi[m] *= eT[m]
        fft_inplace(psi, rev, stwc)
        for x in range(n):
            psi[x] *= eV[x]
        for q in range(lower.shape[0]):
            c = _overlap(lower[q], psi, dx)
            for x in range(n):
                psi[x] -= c * lower[q, x]
        nrm = np.sqrt(_overlap(psi, psi, dx).real)
        for x in range(n):
            psi[x] /= nrm
        if s % check == 0:
            for x in range(n):
                hp[x] = psi[x]
            fft_inplace(hp, rev, stw)
            for m in range(n):
                hp[m] *= tk[m] / n
            fft_inplace(hp, rev, stwc)
            for x in range(n):
                hp[x] += V[x] * psi[x]
            energy = _overlap(psi, hp, dx).real
            if abs(energy - e_old) < tol:
                return psi, energy, s, True
            e_old = energy
    return psi, energy, max_steps, False


@njit(cache=True)
def rk4_two_level(ca, cb, wa, wb, mu, eps_stages, dt):
    """Classical RK4 for i c' = (H0 - mu eps) c with a 2x2 off-diagonal dipole.

    eps_stages has shape (n, 3): field at t, t+dt/2, t+dt.
    """
    n = eps_stages.shape[0]
    for i in range(n):
        e0 = eps_stages[i, 0]
        e1 = eps_stages[i, 1]
        e2 = eps_stages[i, 2]
        k1a = -1j * (wa * ca - mu * e0 * cb)
        k1b = -1j * (wb * cb - mu * e0 * ca)
        ya = ca + 0.5 * dt * k1a
        yb = cb + 0.5 * dt * k1b
        k2a = -1j * (wa * ya - mu * e1 * yb)
        k2b = -1j * (wb * yb - mu * e1 * ya)
        ya = ca + 0.5 * dt * k2a
        yb = cb + 0.5 * dt * k2b
        k3a = -1j * (wa * ya - mu * e1 * yb)
        k3b = -1j * (wb * yb - mu * e1 * ya)
        ya = ca + dt * k3a
        yb = cb + dt * k3b
        k4a = -1j * (wa * ya - mu * e2 * yb)
        k4b = -1j * (wb * yb - mu * e2 * ya)
        ca = ca + dt / 6.0 * (k1a + 2 * k2a + 2 * k3a + k4a)
        cb = cb + dt / 6.0 * (k1b + 2 * k2b + 2 * k3b + k4b)
    return ca, cb
