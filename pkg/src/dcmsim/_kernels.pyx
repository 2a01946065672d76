# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled Euler-Maruyama window kernel.

Same contract and per-step arithmetic order as ``_kernels_py.run_windows``;
loops trajectory-major so each trajectory's increments are read contiguously.
"""
import numpy as np

from .errors import NormCollapseError, NumericalBlowupError

ctypedef double complex cplx

cdef extern from "math.h" nogil:
    bint isfinite(double)


cdef inline void matvec(const cplx* op, const cplx* v, cplx* out, Py_ssize_t d) noexcept nogil:
    cdef Py_ssize_t i, k
    cdef cplx s
    for i in range(d):
        s = v[0] * op[i * d]
        for k in range(1, d):
            s = s + v[k] * op[i * d + k]
        out[i] = s


cdef inline double sqnorm(const cplx* v, Py_ssize_t d) noexcept nogil:
    cdef double s = v[0].real * v[0].real + v[0].imag * v[0].imag
    cdef Py_ssize_t k
    for k in range(1, d):
        s = s + (v[k].real * v[k].real + v[k].imag * v[k].imag)
    return s


cdef inline double quadratic_form(const cplx* op, const cplx* v, cplx* work, Py_ssize_t d) noexcept nogil:
    matvec(op, v, work, d)
    cdef cplx s = v[0].conjugate() * work[0]
    cdef Py_ssize_t k
    for k in range(1, d):
        s = s + v[k].conjugate() * work[k]
    return s.real


cdef inline void step_one(const cplx* x, cplx* xn, const cplx* h, const cplx* ops, Py_ssize_t nops,
                          const cplx* fops, const double* xi, Py_ssize_t nf,
                          const cplx* dw, double dt, Py_ssize_t d, cplx* work, cplx* drift) noexcept nogil:
    cdef Py_ssize_t i, j, m
    cdef cplx mi = -1j
    cdef cplx c
    matvec(h, x, work, d)
    for i in range(d):
        drift[i] = mi * work[i]
    for m in range(nf):
        c = mi * <cplx>xi[m]
        matvec(fops + m * d * d, x, work, d)
        for i in range(d):
            drift[i] = drift[i] + c * work[i]
    for i in range(d):
        xn[i] = x[i] + drift[i] * dt
    for j in range(nops):
        matvec(ops + j * d * d, x, work, d)
        for i in range(d):
            xn[i] = xn[i] + work[i] * dw[j]


def run_windows(x0, y0, dW, hA, hB, L, M, double dt, win_start, Py_ssize_t win_len,
                aOps, bOps, interacting, traj_ids, double norm_floor=1e-12):
    cdef cplx[:, ::1] X0 = np.ascontiguousarray(x0, dtype=np.complex128)
    cdef cplx[:, ::1] Y0 = np.ascontiguousarray(y0, dtype=np.complex128)
    cdef cplx[:, :, ::1] DW = np.ascontiguousarray(dW, dtype=np.complex128)
    cdef cplx[:, ::1] HA = np.ascontiguousarray(hA, dtype=np.complex128)
    cdef cplx[:, ::1] HB = np.ascontiguousarray(hB, dtype=np.complex128)
    cdef Py_ssize_t batch = X0.shape[0], dA = X0.shape[1], dB = Y0.shape[1]
    Lc = np.ascontiguousarray(np.reshape(L, (-1, dA, dA)), dtype=np.complex128)
    Mc = np.ascontiguousarray(np.reshape(M, (-1, dB, dB)), dtype=np.complex128)
    Ac = np.ascontiguousarray(np.reshape(aOps, (-1, dA, dA)), dtype=np.complex128)
    Bc = np.ascontiguousarray(np.reshape(bOps, (-1, dB, dB)), dtype=np.complex128)
    cdef Py_ssize_t nA = Lc.shape[0], nB = Mc.shape[0], nM = Ac.shape[0]
    cdef Py_ssize_t nch = DW.shape[2]
    # zero-length memoryviews are awkward; pad with one unused slot
    cdef cplx[:, :, ::1] LV = Lc if nA else np.zeros((1, dA, dA), np.complex128)
    cdef cplx[:, :, ::1] MV = Mc if nB else np.zeros((1, dB, dB), np.complex128)
    cdef cplx[:, :, ::1] AV = Ac if nM else np.zeros((1, dA, dA), np.complex128)
    cdef cplx[:, :, ::1] BV = Bc if nM else np.zeros((1, dB, dB), np.complex128)
    cdef long[::1] WS = np.ascontiguousarray(win_start, dtype=np.int_)
    cdef Py_ssize_t nwin = WS.shape[0]
    cdef Py_ssize_t n_steps = int(np.max(win_start)) + win_len
    if DW.shape[1] < n_steps:
        raise ValueError("not enough noise increments for the requested windows")
    cdef bint inter = bool(interacting) and nM > 0
    cdef Py_ssize_t dmax = max(dA, dB)
    cdef Py_ssize_t dz = dA * dB

    out = np.zeros((batch, nwin, dz), dtype=np.complex128)
    cdef cplx[:, :, ::1] acc = out
    cdef cplx[::1] xa = np.zeros(dA, np.complex128)
    cdef cplx[::1] xb = np.zeros(dA, np.complex128)
    cdef cplx[::1] ya = np.zeros(dB, np.complex128)
    cdef cplx[::1] yb = np.zeros(dB, np.complex128)
    cdef cplx[::1] work = np.zeros(dmax, np.complex128)
    cdef cplx[::1] drift = np.zeros(dmax, np.complex128)
    cdef double[::1] xiA = np.zeros(max(nM, 1))
    cdef double[::1] xiB = np.zeros(max(nM, 1))
    cdef cplx* x
    cdef cplx* y
    cdef cplx* xn
    cdef cplx* yn
    cdef cplx* tmp
    cdef Py_ssize_t b, i, k, m, p, q, s
    cdef double nx, ny, w
    cdef int err = 0
    cdef Py_ssize_t err_b = 0, err_i = 0
    cdef bint ok

    with nogil:
        for b in range(batch):
            x = &xa[0]
            xn = &xb[0]
            y = &ya[0]
            yn = &yb[0]
            for p in range(dA):
                x[p] = X0[b, p]
            for p in range(dB):
                y[p] = Y0[b, p]
            i = 0
            while True:
                # deposit Z_i into every window that contains step i
                for k in range(nwin):
                    s = WS[k]
                    if i >= s and i <= s + win_len:
                        w = 0.5 if (i == s or i == s + win_len) else 1.0
                        for p in range(dA):
                            for q in range(dB):
                                acc[b, k, p * dB + q] = acc[b, k, p * dB + q] + w * (x[p] * y[q])
                if i == n_steps:
                    break
                i = i + 1
                if inter:
                    nx = sqnorm(x, dA)
                    ny = sqnorm(y, dB)
                    if nx < norm_floor * dA or ny < norm_floor * dB:
                        err = 2
                        err_b = b
                        err_i = i
                        break
                    for m in range(nM):
                        xiA[m] = 0.5 * (quadratic_form(&BV[m, 0, 0], y, &work[0], dB) / ny)
                        xiB[m] = 0.5 * (quadratic_form(&AV[m, 0, 0], x, &work[0], dA) / nx)
                step_one(x, xn, &HA[0, 0], &LV[0, 0, 0], nA, &AV[0, 0, 0], &xiA[0], nM if inter else 0,
                         &DW[b, i - 1, 0], dt, dA, &work[0], &drift[0])
                step_one(y, yn, &HB[0, 0], &MV[0, 0, 0], nB, &BV[0, 0, 0], &xiB[0], nM if inter else 0,
                         &DW[b, i - 1, nA], dt, dB, &work[0], &drift[0])
                ok = True
                for p in range(dA):
                    if not (isfinite(xn[p].real) and isfinite(xn[p].imag)):
                        ok = False
                for p in range(dB):
                    if not (isfinite(yn[p].real) and isfinite(yn[p].imag)):
                        ok = False
                if not ok:
                    err = 1
                    err_b = b
                    err_i = i
                    break
                tmp = x
                x = xn
                xn = tmp
                tmp = y
                y = yn
                yn = tmp
            if err:
                break

    if err == 2:
        t = (err_i - 1) * dt
        raise NormCollapseError(f"state norm collapsed at t={t:g} (trajectory {traj_ids[err_b]}, step {err_i})",
                                t=t, trajectory=int(traj_ids[err_b]), step=int(err_i))
    if err == 1:
        t = err_i * dt
        raise NumericalBlowupError(f"non-finite state at t={t:g} (trajectory {traj_ids[err_b]}, step {err_i})",
                                   t=t, trajectory=int(traj_ids[err_b]), step=int(err_i))
    return out / win_len
