"""Pure-numpy hot loops, vectorised over a batch of trajectories.

This is the fallback for the compiled ``_kernels`` extension and the single
source of the per-step arithmetic used by :mod:`dcmsim.micro`. Matrix-vector
products are written as explicit column sums so that a batch of one gives
the same bits as a batch of many.
"""
import numpy as np

from .errors import NormCollapseError, NumericalBlowupError


def matvec(op, v):
    """``op @ v`` for every row of ``v`` (shape ``(batch, d)``)."""
    out = v[:, 0:1] * op[:, 0]
    for k in range(1, op.shape[1]):
        out = out + v[:, k : k + 1] * op[:, k]
    return out


def sqnorm(v):
    s = v[:, 0].real ** 2 + v[:, 0].imag ** 2
    for k in range(1, v.shape[1]):
        s = s + (v[:, k].real ** 2 + v[:, k].imag ** 2)
    return s


def _quadratic_form(op, v):
    w = matvec(op, v)
    s = v[:, 0].conj() * w[:, 0]
    for k in range(1, v.shape[1]):
        s = s + v[:, k].conj() * w[:, k]
    return s.real


def expectation_fields(x, y, aOps, bOps):
    """xi_A[:, m] = <B_m>_y / 2 and xi_B[:, m] = <A_m>_x / 2, shape ``(batch, M)``."""
    nx = sqnorm(x)
    ny = sqnorm(y)
    M = len(aOps)
    xiA = np.empty((x.shape[0], M))
    xiB = np.empty((x.shape[0], M))
    for m in range(M):
        xiA[:, m] = 0.5 * (_quadratic_form(bOps[m], y) / ny)
        xiB[:, m] = 0.5 * (_quadratic_form(aOps[m], x) / nx)
    return xiA, xiB


# overflow is caught by the explicit finiteness checks, so numpy need not warn
@np.errstate(over="ignore", invalid="ignore")
def euler_step(x, y, dwA, dwB, hA, hB, L, M, dt, aOps=None, bOps=None, xiA=None, xiB=None):
    """One explicit Euler-Maruyama step for a batch; fields passed in pre-evaluated."""
    driftx = -1j * matvec(hA, x)
    drifty = -1j * matvec(hB, y)
    if xiA is not None:
        for m in range(len(aOps)):
            driftx = driftx + (-1j * xiA[:, m : m + 1]) * matvec(aOps[m], x)
            drifty = drifty + (-1j * xiB[:, m : m + 1]) * matvec(bOps[m], y)
    xn = x + driftx * dt
    yn = y + drifty * dt
    for j in range(len(L)):
        xn = xn + matvec(L[j], x) * dwA[:, j : j + 1]
    for k in range(len(M)):
        yn = yn + matvec(M[k], y) * dwB[:, k : k + 1]
    return xn, yn


def _window_events(win_start, win_len, n_steps):
    events = [[] for _ in range(n_steps + 1)]
    for k, s in enumerate(win_start):
        for i in range(s, s + win_len + 1):
            w = 0.5 if i in (s, s + win_len) else 1.0
            events[i].append((k, w))
    return events


def run_windows(x0, y0, dW, hA, hB, L, M, dt, win_start, win_len, aOps, bOps,
                interacting, traj_ids, norm_floor=1e-12):
    """Integrate a batch and return trapezoidal window averages of Z = x (x) y.

    Parameters
    ----------
    x0, y0 : (batch, dA), (batch, dB) complex
    dW : (batch, n_steps, nA + nB) complex joint increments
    win_start : window left edges as step indices
    win_len : window length in steps

    Returns
    -------
    (batch, n_windows, dA*dB) complex
    """
    batch, dA = x0.shape
    dB = y0.shape[1]
    nA = L.shape[0]
    n_steps = int(max(win_start)) + int(win_len)
    if dW.shape[1] < n_steps:
        raise ValueError("not enough noise increments for the requested windows")
    interacting = bool(interacting) and len(aOps) > 0
    events = _window_events(list(map(int, win_start)), int(win_len), n_steps)
    acc = np.zeros((batch, len(win_start), dA * dB), dtype=np.complex128)
    x = np.array(x0, dtype=np.complex128)
    y = np.array(y0, dtype=np.complex128)

    def deposit(i):
        if events[i]:
            z = (x[:, :, None] * y[:, None, :]).reshape(batch, dA * dB)
            for k, w in events[i]:
                acc[:, k] += w * z

    deposit(0)
    for i in range(1, n_steps + 1):
        dw = dW[:, i - 1]
        if interacting:
            bad = (sqnorm(x) < norm_floor * dA) | (sqnorm(y) < norm_floor * dB)
            if bad.any():
                b = int(np.flatnonzero(bad)[0])
                t = (i - 1) * dt
                raise NormCollapseError(f"state norm collapsed at t={t:g} (trajectory {traj_ids[b]}, step {i})",
                                        t=t, trajectory=int(traj_ids[b]), step=i)
            xiA, xiB = expectation_fields(x, y, aOps, bOps)
            x, y = euler_step(x, y, dw[:, :nA], dw[:, nA:], hA, hB, L, M, dt, aOps, bOps, xiA, xiB)
        else:
            x, y = euler_step(x, y, dw[:, :nA], dw[:, nA:], hA, hB, L, M, dt)
        ok = np.isfinite(x).all(axis=1) & np.isfinite(y).all(axis=1)
        if not ok.all():
            b = int(np.flatnonzero(~ok)[0])
            t = i * dt
            raise NumericalBlowupError(f"non-finite state at t={t:g} (trajectory {traj_ids[b]}, step {i})",
                                       t=t, trajectory=int(traj_ids[b]), step=i)
        deposit(i)
    return acc / win_len
