"""Sliding-window averages of Z_t and the ensemble double covariance.

``C_Delta(tau)`` is the trapezoidal average of ``Z_t`` over ``[tau, tau+Delta]``
and ``C(tau) = E[C_Delta C_Delta^H]`` is its uncentered second moment,
normalised to ``rho = C / Tr C``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace

import numpy as np

from . import hilbert as hc
from .errors import InconclusiveError, ValidationError, WindowUnderflowError

MIN_WINDOW_SAMPLES = 10
MIN_SCALE_RATIO = 10.0


@dataclass(frozen=True)
class WindowConfig:
    """Scale hierarchy ``dtMicro = c_dt eps^2 << delta = c_delta eps``.

    Window left edges and the window length are snapped to the micro grid;
    ``starts``/``mids`` give the realised times.
    """

    epsilon: float
    delta: float
    dtMicro: float
    tauGrid: tuple

    def __post_init__(self):
        if not 0 < self.epsilon < 1:
            raise ValidationError(f"epsilon must lie in (0, 1), got {self.epsilon}")
        if not 0 < self.dtMicro < self.delta:
            raise ValidationError("need 0 < dtMicro < delta")
        if self.delta / self.dtMicro < MIN_SCALE_RATIO * (1 - 1e-9):
            raise ValidationError(
                f"scale separation delta/dt = {self.delta / self.dtMicro:.3g} is below {MIN_SCALE_RATIO:g}"
            )
        taus = np.asarray(self.tauGrid, dtype=float)
        if taus.ndim != 1 or taus.size == 0 or np.any(taus < 0) or np.any(np.diff(taus) <= 0):
            raise ValidationError("tauGrid must be a non-empty increasing list of non-negative times")
        object.__setattr__(self, "tauGrid", tuple(float(t) for t in taus))

    @classmethod
    def from_epsilon(cls, epsilon, c_delta, c_dt, tauGrid, dt=None):
        dt = c_dt * epsilon**2 if dt is None else dt
        return cls(float(epsilon), float(c_delta * epsilon), float(dt), tuple(tauGrid))

    @property
    def window_steps(self) -> int:
        return max(int(round(self.delta / self.dtMicro)), 1)

    @property
    def start_steps(self) -> np.ndarray:
        return np.rint(np.asarray(self.tauGrid) / self.dtMicro).astype(np.int_)

    @property
    def n_steps(self) -> int:
        return int(self.start_steps.max()) + self.window_steps

    @property
    def starts(self) -> np.ndarray:
        return self.start_steps * self.dtMicro

    @property
    def mids(self) -> np.ndarray:
        return (self.start_steps + 0.5 * self.window_steps) * self.dtMicro

    @property
    def effective_delta(self) -> float:
        return self.window_steps * self.dtMicro


def window_average(times, zs, tau: float, delta: float) -> np.ndarray:
    """Trapezoidal average of a recorded series over ``[tau, tau + delta]``.

    Raises
    ------
    WindowUnderflowError
        If fewer than 10 samples fall in the window or it is not covered.
    """
    times = np.asarray(times, dtype=float)
    zs = np.asarray(zs, dtype=np.complex128)
    tol = 1e-9 * max(1.0, abs(tau) + delta)
    sel = (times >= tau - tol) & (times <= tau + delta + tol)
    n = int(sel.sum())
    if n < MIN_WINDOW_SAMPLES:
        raise WindowUnderflowError(f"only {n} samples in window [{tau:g}, {tau + delta:g}]")
    t = times[sel]
    if t[0] > tau + tol or t[-1] < tau + delta - tol:
        raise WindowUnderflowError(f"series does not cover window [{tau:g}, {tau + delta:g}]")
    span = t[-1] - t[0]
    return np.trapezoid(zs[sel], t, axis=0) / span


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Running estimate of ``E[v v^H]`` with Welford moments for standard errors.

    ``sumSq`` holds per-entry sums of squared deviations ``|O - mean|^2``;
    ``traceMean``/``traceSumSq`` do the same for ``||v||^2`` so the trace can
    be tested for statistical resolution.
    """

    tau: float
    mean: np.ndarray
    nSamples: int = 0
    sumSq: np.ndarray = None
    traceMean: float = 0.0
    traceSumSq: float = 0.0

    @classmethod
    def empty(cls, tau: float, dim: int) -> "CovarianceEstimate":
        return cls(float(tau), np.zeros((dim, dim), np.complex128), 0, np.zeros((dim, dim)), 0.0, 0.0)

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    @property
    def se(self) -> np.ndarray:
        n = self.nSamples
        if n < 2:
            return np.full(self.mean.shape, np.inf if n == 1 else np.nan)
        return np.sqrt(self.sumSq / (n * (n - 1)))

    @property
    def max_se(self) -> float:
        return float(np.max(self.se))

    @property
    def trace_se(self) -> float:
        n = self.nSamples
        return float(np.sqrt(self.traceSumSq / (n * (n - 1)))) if n > 1 else np.inf


def _batch_moments(vs):
    vs = np.asarray(vs, dtype=np.complex128)
    outer = vs[:, :, None] * vs[:, None, :].conj()
    n = vs.shape[0]
    mean = outer.mean(axis=0)
    ssq = (np.abs(outer - mean) ** 2).sum(axis=0)
    tr = (vs.real**2 + vs.imag**2).sum(axis=1)
    tmean = float(tr.mean())
    tssq = float(((tr - tmean) ** 2).sum())
    return n, mean, ssq, tmean, tssq


def _combine(a: CovarianceEstimate, n, mean, ssq, tmean, tssq) -> CovarianceEstimate:
    # Chan et al. pairwise update
    if n == 0:
        return a
    if a.nSamples == 0:
        return replace(a, mean=mean, nSamples=n, sumSq=ssq, traceMean=tmean, traceSumSq=tssq)
    na = a.nSamples
    tot = na + n
    d = mean - a.mean
    td = tmean - a.traceMean
    return replace(
        a,
        mean=a.mean + d * (n / tot),
        nSamples=tot,
        sumSq=a.sumSq + ssq + np.abs(d) ** 2 * (na * n / tot),
        traceMean=a.traceMean + td * (n / tot),
        traceSumSq=a.traceSumSq + tssq + td**2 * (na * n / tot),
    )


def accumulate(estimate: CovarianceEstimate, cDelta) -> CovarianceEstimate:
    """Rank-one Welford update with ``cDelta cDelta^H`` (no centering)."""
    v = hc.as_vector(cDelta)
    if v.shape[0] != estimate.dim:
        raise ValidationError(f"vector of length {v.shape[0]} for a {estimate.dim}-dim estimate")
    return _combine(estimate, *_batch_moments(v[None, :]))


def accumulate_batch(estimate: CovarianceEstimate, vs) -> CovarianceEstimate:
    vs = np.asarray(vs, dtype=np.complex128)
    if vs.ndim != 2 or vs.shape[1] != estimate.dim:
        raise ValidationError("batch must have shape (n, dim)")
    if vs.shape[0] == 0:
        return estimate
    return _combine(estimate, *_batch_moments(vs))


def merge(a: CovarianceEstimate, b: CovarianceEstimate) -> CovarianceEstimate:
    if not np.isclose(a.tau, b.tau, rtol=0, atol=1e-12):
        raise ValidationError(f"cannot merge estimates at tau={a.tau} and tau={b.tau}")
    if a.dim != b.dim:
        raise ValidationError("cannot merge estimates of different dimension")
    if a.nSamples == 0:
        return b
    return _combine(a, b.nSamples, b.mean, b.sumSq, b.traceMean, b.traceSumSq)


def estimates_from_samples(cdelta, taus, batch: int = 4096) -> list:
    """One estimate per tau from window vectors of shape ``(n, n_tau, dim)``."""
    cdelta = np.asarray(cdelta)
    out = []
    for k, tau in enumerate(taus):
        est = CovarianceEstimate.empty(tau, cdelta.shape[2])
        for s in range(0, cdelta.shape[0], batch):
            est = accumulate_batch(est, cdelta[s : s + batch, k])
        out.append(est)
    return out


@dataclass
class DensityPoint:
    tau: float
    rho: np.ndarray
    c: np.ndarray
    trace: float
    min_eigenvalue: float
    max_se: float
    hermitian_residual: float
    trace_se: float = 0.0


def density_point(est: CovarianceEstimate, resolve_trace: bool = True) -> DensityPoint:
    c = est.mean
    norm = float(np.linalg.norm(c))
    resid = float(np.linalg.norm(c - c.conj().T)) / norm if norm > 0 else 0.0
    ch = hc.hermitian_part(c)
    tr = float(np.trace(ch).real)
    if resolve_trace and est.nSamples > 1 and np.isfinite(est.trace_se) and abs(tr) <= 5 * est.trace_se:
        raise InconclusiveError(f"Tr C = {tr:.3e} is not resolved (SE {est.trace_se:.3e}) at tau={est.tau:g}")
    rho = hc.normalize_to_density(ch)
    return DensityPoint(est.tau, rho, ch, tr, hc.min_eigenvalue(ch), est.max_se, resid, est.trace_se)


def density_series(estimates) -> list:
    """Hermitian-symmetrised, unit-trace density operators, one per estimate."""
    return [density_point(e) for e in estimates]


# -- export -------------------------------------------------------------------

def fmt(x: float) -> str:
    return format(float(x), ".17g")


def _entry_names(prefix, d):
    names = []
    for i in range(d):
        for j in range(d):
            names += [f"{prefix}_re_{i}_{j}", f"{prefix}_im_{i}_{j}"]
    return names


def series_rows(points, source: str = "pipeline", include_c: bool = True):
    d = points[0].rho.shape[0]
    header = ["tau"]
    if include_c:
        header += _entry_names("C", d)
    header += _entry_names("rho", d) + ["trace", "min_eigenvalue", "max_SE", "source"]
    rows = []
    for p in points:
        row = [fmt(p.tau)]
        if include_c:
            for z in np.asarray(p.c).ravel():
                row += [fmt(z.real), fmt(z.imag)]
        for z in np.asarray(p.rho).ravel():
            row += [fmt(z.real), fmt(z.imag)]
        row += [fmt(p.trace), fmt(p.min_eigenvalue), fmt(p.max_se), source]
        rows.append(row)
    return header, rows


def write_series_csv(path, points, source: str = "pipeline", metadata=None):
    header, rows = series_rows(points, source)
    with open(path, "w", newline="") as fh:
        if metadata is not None:
            fh.write("# " + json.dumps(metadata, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def series_json(points, source: str = "pipeline", metadata=None) -> dict:
    return {
        "source": source,
        "metadata": metadata or {},
        "series": [
            {
                "tau": p.tau,
                "C": hc.format_matrix(p.c),
                "rho": hc.format_matrix(p.rho),
                "trace": p.trace,
                "min_eigenvalue": p.min_eigenvalue,
                "max_SE": p.max_se,
                "hermitian_residual": p.hermitian_residual,
            }
            for p in points
        ],
    }
