"""Monte-Carlo vs reference comparisons, epsilon sweeps and noise diagnostics.

The pipeline's ``rho(tau)`` comes from windows ``[tau, tau + Delta]``; it is
compared with the reference at the realised window midpoint, where the
trapezoidal window average is a second-order estimate of the state.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hilbert as hc
from .coarse import WindowConfig, density_series, estimates_from_samples
from .ensemble import InitialCondition, simulate_windows
from .errors import InconclusiveError, ValidationError
from .micro import SystemSpec, build_system, projector_collapse_residual
from .noise import NoiseModel, RngStream, sample_increment_block
from .reference import VARIANTS, integrate_master, master_spec

MIN_ENSEMBLE = 100
RESOLVE_SIGMAS = 5.0
# below this an error is roundoff, whatever the standard error says
ABS_ERROR_FLOOR = 1e-12
N_BOOTSTRAP = 200


@dataclass(frozen=True)
class SweepConfig:
    epsilons: tuple
    cDelta: float
    cDeltaT: float
    ensembleSize: int
    tauGrid: tuple
    referenceVariant: str = "generic_gksl"

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float)
        if eps.size < 3:
            raise ValidationError("a sweep needs at least 3 epsilon values")
        if np.any(np.diff(eps) >= 0) or np.any(eps <= 0) or np.any(eps >= 1):
            raise ValidationError("epsilons must be strictly decreasing inside (0, 1)")
        if self.referenceVariant not in VARIANTS:
            raise ValidationError(f"unknown reference variant {self.referenceVariant!r}")
        for e in eps:
            self.window(e)  # validates scale separation

    def window(self, eps) -> WindowConfig:
        return WindowConfig.from_epsilon(eps, self.cDelta, self.cDeltaT, self.tauGrid)


@dataclass
class PointResult:
    epsilon: float
    window: WindowConfig
    points: list
    reference: list
    errors: np.ndarray
    rho_se: np.ndarray
    cdelta: np.ndarray = field(repr=False, default=None)
    variant: str = "generic_gksl"

    @property
    def error(self) -> float:
        return float(np.max(self.errors))

    @property
    def max_se(self) -> float:
        return float(np.max(self.rho_se))

    @property
    def resolved(self) -> bool:
        return self.error > max(RESOLVE_SIGMAS * self.max_se, ABS_ERROR_FLOOR)

    @property
    def rhos(self):
        return [p.rho for p in self.points]

    @property
    def taus(self) -> np.ndarray:
        return np.array([p.tau for p in self.points])


def rho_standard_errors(cdelta) -> np.ndarray:
    """Delta-method SE of every entry of ``rho = mean(v v^H) / mean(|v|^2)``.

    Returns the max entrywise SE per tau.
    """
    n = cdelta.shape[0]
    out = np.empty(cdelta.shape[1])
    if n < 2:
        out[:] = np.inf
        return out
    for k in range(cdelta.shape[1]):
        v = cdelta[:, k]
        outer = v[:, :, None] * v[:, None, :].conj()
        tr = (v.real**2 + v.imag**2).sum(axis=1)
        tbar = tr.mean()
        rho = outer.mean(axis=0) / tbar
        psi = (outer - rho * tr[:, None, None]) / tbar
        var = (np.abs(psi - psi.mean(axis=0)) ** 2).sum(axis=0) / (n - 1)
        out[k] = np.sqrt(var.max() / n)
    return out


def _rho_from_samples(v):
    c = np.einsum("nti,ntj->tij", v, v.conj()) / v.shape[0]
    c = 0.5 * (c + np.conj(np.swapaxes(c, 1, 2)))
    tr = np.trace(c, axis1=1, axis2=2).real
    return c / tr[:, None, None]


def reference_at_midpoints(spec: SystemSpec, window: WindowConfig, variant: str, rho0):
    ms = master_spec(spec, variant)
    res = integrate_master(rho0, ms, np.concatenate([[0.0], window.mids]))
    return res.rhos[1:]


def run_point(spec: SystemSpec, window: WindowConfig, ensembleSize: int, referenceVariant: str = "generic_gksl",
              initial: InitialCondition | None = None, seed: int = 0, mode: str | None = None,
              backend: str | None = None, workers: int = 1, first_index: int = 0) -> PointResult:
    """Micro -> windows -> rho_MC, against the reference, at one scale point.

    The error metric is ``sup_tau ||rho_MC(tau) - rho_ref(tau_mid)||_F``.
    """
    if ensembleSize < MIN_ENSEMBLE:
        raise ValidationError(f"ensembleSize must be >= {MIN_ENSEMBLE}")
    if initial is None:
        raise ValidationError("an initial condition is required")
    dA, dB = spec.dims.dimA, spec.dims.dimB
    cdelta = simulate_windows(spec, window, ensembleSize, seed, initial, mode=mode, backend=backend,
                              workers=workers, first_index=first_index)
    points = density_series(estimates_from_samples(cdelta, window.tauGrid))
    ref = reference_at_midpoints(spec, window, referenceVariant, initial.rho0(dA, dB))
    errors = np.array([np.linalg.norm(p.rho - r) for p, r in zip(points, ref)])
    return PointResult(window.epsilon, window, points, ref, errors, rho_standard_errors(cdelta),
                       cdelta, referenceVariant)


def bootstrap_errors(point: PointResult, rng: np.random.Generator, n_boot: int = N_BOOTSTRAP) -> np.ndarray:
    v = point.cdelta
    n = v.shape[0]
    ref = np.array(point.reference)
    out = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        rho = _rho_from_samples(v[idx])
        out[b] = np.max(np.linalg.norm(rho - ref, axis=(1, 2)))
    return out


def fit_loglog(eps, errs):
    slope, intercept = np.polyfit(np.log(eps), np.log(errs), 1)
    return float(slope), float(np.exp(intercept))


@dataclass
class ScalingReport:
    perEpsilon: list
    fittedSlope: float
    slopeCI: tuple
    prefactor: float
    used: list
    variant: str = "generic_gksl"
    points: list = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "perEpsilon": self.perEpsilon,
            "fittedSlope": self.fittedSlope,
            "slopeCI": list(self.slopeCI),
            "prefactor": self.prefactor,
            "usedEpsilons": self.used,
            "referenceVariant": self.variant,
        }


def run_sweep(sweep: SweepConfig, spec: SystemSpec, initial: InitialCondition, seed: int = 0,
              mode: str | None = None, backend: str | None = None, workers: int = 1,
              n_boot: int = N_BOOTSTRAP) -> ScalingReport:
    """Run every epsilon, then fit ``log error = log K + slope log eps``.

    Only points whose error exceeds ``5 maxSE`` enter the fit. The slope
    interval is a percentile bootstrap over trajectories.

    Raises
    ------
    InconclusiveError
        If fewer than two points are statistically resolved.
    """
    points = []
    for p, eps in enumerate(sweep.epsilons):
        points.append(run_point(spec, sweep.window(eps), sweep.ensembleSize, sweep.referenceVariant, initial,
                                seed, mode, backend, workers, first_index=p * 10**9))
    rows = [{
        "epsilon": pt.epsilon, "delta": pt.window.effective_delta, "dt": pt.window.dtMicro,
        "error": pt.error, "maxSE": pt.max_se, "resolved": pt.resolved,
    } for pt in points]
    used = [pt for pt in points if pt.resolved]
    if len(used) < 2:
        exc = InconclusiveError(
            f"only {len(used)} of {len(points)} sweep points exceed 5 SE; increase ensembleSize"
        )
        # callers still want the per-point data for the report
        exc.rows, exc.points = rows, points
        raise exc
    eps = np.array([pt.epsilon for pt in used])
    slope, pref = fit_loglog(eps, [pt.error for pt in used])
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(2**31,))))
    boots = np.array([bootstrap_errors(pt, rng, n_boot) for pt in used])  # (n_used, n_boot)
    slopes = [fit_loglog(eps, np.maximum(boots[:, b], 1e-300))[0] for b in range(n_boot)]
    ci = (float(np.percentile(slopes, 2.5)), float(np.percentile(slopes, 97.5)))
    return ScalingReport(rows, slope, ci, pref, [float(e) for e in eps], sweep.referenceVariant, points)


def bias_envelope(calibration_eps, calibration_errors, order: float = 2.0):
    """Envelope ``K eps^order`` with K the largest ``error / eps^order`` seen on calibration points."""
    k = max(e / x**order for x, e in zip(calibration_eps, calibration_errors))
    return lambda eps: k * eps**order


def markov_diagnostics(model: NoiseModel, dt: float, lags: int, nSamples: int, stream: RngStream,
                       chunk: int = 100_000) -> list:
    """Empirical ``E[dW(t) dW(t + k dt)^H]`` for ``k = 0..lags`` from one increment sequence.

    Each row holds the estimate, its per-entry SE and the white-noise
    expectation (``Sigma dt`` at lag 0, zero otherwise). The sequence is
    drawn in chunks, so memory does not grow with ``nSamples``.
    """
    if lags < 0:
        raise ValidationError("lags must be >= 0")
    n = model.n
    s1 = np.zeros((lags + 1, n, n), dtype=np.complex128)
    s2 = np.zeros((lags + 1, n, n))
    tail = sample_increment_block(model, dt, stream, lags) if lags else np.zeros((0, n), np.complex128)
    done = 0
    while done < nSamples:
        m = min(chunk, nSamples - done)
        # seq[i] is increment done+i; the first `lags` rows were drawn in the previous round
        seq = np.concatenate([tail, sample_increment_block(model, dt, stream, m)])
        a = seq[:m]
        for k in range(lags + 1):
            prod = a[:, :, None] * seq[k : k + m, None, :].conj()
            s1[k] += prod.sum(axis=0)
            s2[k] += (np.abs(prod) ** 2).sum(axis=0)
        tail = seq[m:]
        done += m
    rows = []
    for k in range(lags + 1):
        mean = s1[k] / nSamples
        if nSamples > 1:
            var = np.maximum(s2[k] / nSamples - np.abs(mean) ** 2, 0.0) * nSamples / (nSamples - 1)
            se = np.sqrt(var / nSamples)
        else:
            se = np.full(mean.shape, np.inf)
        expected = model.joint * dt if k == 0 else np.zeros_like(model.joint)
        rows.append({"lag": k, "mean": mean, "se": se, "expected": expected})
    return rows


def eigenvector_initial(spec: SystemSpec) -> InitialCondition:
    """Product state of eigenvectors of the first interaction pair."""
    a, b = spec.interaction[0]
    _, ua = np.linalg.eigh(a)
    _, ub = np.linalg.eigh(b)
    return InitialCondition("fixed", ua[:, -1], ub[:, -1])


def interaction_emergence_test(spec: SystemSpec, window: WindowConfig, ensembleSize: int,
                               initial: InitialCondition, seed: int = 0, backend: str | None = None,
                               workers: int = 1, compare_eigen: bool = True) -> dict:
    """xi-feedback pipeline against von Neumann dynamics with the explicit interaction.

    Also reports the transverse residual of the initial states and, with
    ``compare_eigen``, the same error for eigenvector initial states.
    """
    if not spec.interaction:
        raise ValidationError("interaction_emergence_test needs a non-empty interaction")
    if not spec.noise.is_zero:
        raise ValidationError("interaction_emergence_test isolates the feedback: noise must be zero")
    pt = run_point(spec, window, ensembleSize, "von_neumann", initial, seed, "interacting", backend, workers)
    report = {
        "epsilon": window.epsilon,
        "error": pt.error,
        "maxSE": pt.max_se,
        "point": pt,
    }
    if initial.kind == "fixed":
        report["transverse_residual"] = [
            {"A": projector_collapse_residual(initial.x, a), "B": projector_collapse_residual(initial.y, b)}
            for a, b in spec.interaction
        ]
    if compare_eigen:
        eig = run_point(spec, window, ensembleSize, "von_neumann", eigenvector_initial(spec), seed,
                        "interacting", backend, workers)
        report["eigen_error"] = eig.error
        report["eigen_maxSE"] = eig.max_se
        report["reduction_factor"] = pt.error / eig.error if eig.error > 0 else np.inf
    return report


def decay_rate(point: PointResult, dims: hc.HilbertDims, rng: np.random.Generator | None = None,
               n_boot: int = N_BOOTSTRAP):
    """Fitted exponential decay rate of ``|rho_A[0, 1]|`` over tau, with bootstrap SE."""
    def rate(rhos):
        r01 = [abs(hc.partial_trace(r, dims, "A")[0, 1]) for r in rhos]
        return -np.polyfit(point.taus, np.log(r01), 1)[0]

    est = float(rate(point.rhos))
    if rng is None:
        rng = np.random.default_rng(0)
    v = point.cdelta
    n = v.shape[0]
    boots = [rate(_rho_from_samples(v[rng.integers(0, n, n)])) for _ in range(n_boot)]
    return est, float(np.std(boots, ddof=1))
