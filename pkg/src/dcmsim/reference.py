"""Deterministic master equations the Monte-Carlo pipeline is compared against.

Variants
--------
generic_gksl
    ``-i[H, rho] + sum_n g_n (V_n rho V_n^H - {V_n^H V_n, rho}/2)`` with
    channels from :func:`extract_channels`.
interacting_eq60
    The interacting master equation taken term by term: commutator with the
    total Hamiltonian, a sigmaAB-weighted sandwich ``(L_j(x)M_k) rho
    (L_j(x)M_k)^H`` and sigmaAA / sigmaBB anticommutator drains. It carries
    no local sandwich terms and is not trace preserving in general.
von_neumann
    ``-i[H, rho]`` only.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import hilbert as hc
from .errors import ConfigError, ValidationError
from .micro import SystemSpec

VARIANTS = ("generic_gksl", "interacting_eq60", "von_neumann")
RATE_CLIP = 1e-12
STEP_FACTOR = 0.01


@dataclass(frozen=True, eq=False)
class LindbladChannels:
    gammas: np.ndarray
    vOps: np.ndarray  # (n, d, d)

    def __len__(self):
        return len(self.gammas)


@dataclass(frozen=True, eq=False)
class MasterEquationSpec:
    hTot: np.ndarray
    channels: LindbladChannels
    variant: str = "generic_gksl"
    # blocks kept for the term-by-term variant
    sigmaAA: np.ndarray = None
    sigmaBB: np.ndarray = None
    sigmaAB: np.ndarray = None
    lEmb: np.ndarray = None  # L_j (x) I
    mEmb: np.ndarray = None  # I (x) M_k
    crossOps: np.ndarray = None  # L_j (x) M_k, indexed [j, k]

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValidationError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        h = hc.as_square(self.hTot, "hTot")
        if not hc.assert_hermitian(h, 1e-10):
            raise ValidationError("hTot is not Hermitian")

    @property
    def dim(self) -> int:
        return self.hTot.shape[0]


def embedded_channel_operators(spec: SystemSpec) -> np.ndarray:
    """``{L_j (x) I} + {I (x) M_k}`` in joint-covariance order."""
    dA, dB = spec.dims.dimA, spec.dims.dimB
    ops = [hc.embed_A(l, dB) for l in spec.lOps] + [hc.embed_B(m, dA) for m in spec.mOps]
    d = dA * dB
    return np.array(ops, dtype=np.complex128).reshape(-1, d, d)


def extract_channels(spec: SystemSpec, tol: float = RATE_CLIP) -> LindbladChannels:
    """Diagonalise the joint noise covariance over the embedded channel operators.

    With ``Sigma = U diag(g) U^H`` the channels are ``V_n = sum_a U[a, n] E_a``
    with rate ``g_n``, so ``sum_n g_n V_n C V_n^H = sum_ab Sigma_ab E_a C E_b^H``.
    Rates at or below ``tol`` are dropped.
    """
    ops = embedded_channel_operators(spec)
    sigma = spec.noise.joint
    d = spec.dims.composite
    if sigma.size == 0 or not np.any(sigma):
        return LindbladChannels(np.zeros(0), np.zeros((0, d, d), np.complex128))
    evals, evecs = np.linalg.eigh(sigma)
    keep = evals > tol
    v = np.einsum("an,aij->nij", evecs[:, keep], ops)
    return LindbladChannels(evals[keep].copy(), v)


def channel_gram(gammas, vOps) -> np.ndarray:
    vec = np.asarray(vOps).reshape(len(gammas), -1)
    return np.einsum("n,ni,nj->ij", np.asarray(gammas), vec, vec.conj())


def sigma_weighted_gram(spec: SystemSpec) -> np.ndarray:
    ops = embedded_channel_operators(spec)
    vec = ops.reshape(ops.shape[0], -1)
    return np.einsum("ab,ai,bj->ij", spec.noise.joint, vec, vec.conj())


def master_spec(spec: SystemSpec, variant: str = "generic_gksl") -> MasterEquationSpec:
    """Reference equation for a system; H_tot includes the interaction pairs."""
    d = spec.dims.composite
    channels = extract_channels(spec) if variant == "generic_gksl" else LindbladChannels(
        np.zeros(0), np.zeros((0, d, d), np.complex128))
    dA, dB = spec.dims.dimA, spec.dims.dimB
    lEmb = np.array([hc.embed_A(l, dB) for l in spec.lOps]).reshape(-1, d, d)
    mEmb = np.array([hc.embed_B(m, dA) for m in spec.mOps]).reshape(-1, d, d)
    cross = np.array([[np.kron(l, m) for m in spec.mOps] for l in spec.lOps]).reshape(
        len(spec.lOps), len(spec.mOps), d, d)
    n = spec.noise
    return MasterEquationSpec(spec.h_tot, channels, variant, n.sigmaAA, n.sigmaBB, n.sigmaAB, lEmb, mEmb, cross)


def _dissipator(rho, g, v):
    vd = v.conj().T
    return g * (v @ rho @ vd - 0.5 * (vd @ v @ rho + rho @ vd @ v))


def gksl_rhs(rho, spec: MasterEquationSpec) -> np.ndarray:
    rho = hc.as_square(rho, "rho")
    if rho.shape != spec.hTot.shape:
        raise ValidationError(f"rho has shape {rho.shape}, generator acts on {spec.hTot.shape}")
    h = spec.hTot
    out = -1j * (h @ rho - rho @ h)
    if spec.variant == "generic_gksl":
        for g, v in zip(spec.channels.gammas, spec.channels.vOps):
            out += _dissipator(rho, g, v)
    elif spec.variant == "interacting_eq60":
        nA, nB = spec.crossOps.shape[:2]
        for j in range(nA):
            for k in range(nB):
                s = spec.sigmaAB[j, k]
                if s != 0:
                    x = spec.crossOps[j, k]
                    out += s * (x @ rho @ x.conj().T)
        for sig, emb in ((spec.sigmaAA, spec.lEmb), (spec.sigmaBB, spec.mEmb)):
            for a in range(len(emb)):
                for b in range(len(emb)):
                    s = sig[a, b]
                    if s != 0:
                        k = emb[b].conj().T @ emb[a]
                        out -= 0.5 * s * (k @ rho + rho @ k)
    return out


def generator_matrix(spec: MasterEquationSpec) -> np.ndarray:
    """Superoperator of :func:`gksl_rhs` acting on row-major ``vec(rho)``."""
    d = spec.dim
    g = np.empty((d * d, d * d), dtype=np.complex128)
    for idx in range(d * d):
        e = np.zeros(d * d, dtype=np.complex128)
        e[idx] = 1.0
        g[:, idx] = gksl_rhs(e.reshape(d, d), spec).ravel()
    return g


def generator_norm(spec: MasterEquationSpec) -> float:
    return float(np.linalg.norm(generator_matrix(spec), 2))


@dataclass
class IntegrationResult:
    taus: np.ndarray
    rhos: list
    step: float
    symmetrizations: int = 0

    def __iter__(self):
        return iter(zip(self.taus, self.rhos))

    def __len__(self):
        return len(self.taus)


def integrate_master(rho0, spec: MasterEquationSpec, tauGrid, max_step: float | None = None,
                     validate: bool = True) -> IntegrationResult:
    """Fixed-step classical RK4 from ``tauGrid[0]`` through every grid point.

    The step is at most ``min(grid spacing, 0.01 / ||generator||)``; each grid
    interval is split into equal substeps below that bound.

    Raises
    ------
    ConfigError
        If ``max_step`` exceeds the stability guard.
    ValidationError
        If ``rho0`` is not a unit-trace Hermitian PSD matrix (to 1e-10).
    """
    rho0 = hc.as_square(rho0, "rho0")
    if validate:
        if abs(np.trace(rho0) - 1) > 1e-10 or not hc.assert_hermitian(rho0, 1e-10) or not hc.assert_psd(rho0, 1e-10):
            raise ValidationError("rho0 must be a unit-trace Hermitian PSD matrix")
    taus = np.asarray(tauGrid, dtype=float)
    if taus.ndim != 1 or taus.size == 0 or np.any(np.diff(taus) <= 0):
        raise ValidationError("tauGrid must be strictly increasing")
    G = generator_matrix(spec)
    gnorm = float(np.linalg.norm(G, 2))
    guard = STEP_FACTOR / gnorm if gnorm > 0 else np.inf
    spacing = float(np.min(np.diff(taus))) if taus.size > 1 else np.inf
    bound = min(guard, spacing)
    if max_step is not None:
        if max_step > guard:
            raise ConfigError(f"step {max_step:g} exceeds the RK4 guard 0.01/||generator|| = {guard:g}")
        bound = min(bound, max_step)
    d = spec.dim
    v = rho0.ravel().copy()
    rhos = [rho0.copy()]
    symm = 0
    used = 0.0
    for k in range(1, taus.size):
        span = taus[k] - taus[k - 1]
        nsub = 1 if not np.isfinite(bound) else max(int(np.ceil(span / bound - 1e-12)), 1)
        h = span / nsub
        used = max(used, h)
        for _ in range(nsub):
            k1 = G @ v
            k2 = G @ (v + 0.5 * h * k1)
            k3 = G @ (v + 0.5 * h * k2)
            k4 = G @ (v + h * k3)
            v = v + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            m = v.reshape(d, d)
            if np.max(np.abs(m - m.conj().T)) > 1e-12:
                v = (0.5 * (m + m.conj().T)).ravel()
                symm += 1
        rhos.append(v.reshape(d, d).copy())
    return IntegrationResult(taus, rhos, used, symm)


def positivity_monitor(series, variant: str = "generic_gksl", neg_tol: float = 1e-8) -> dict:
    """Per-tau trace deviation, Hermiticity residual, min eigenvalue and purity.

    ``flagged`` is set when any min eigenvalue drops below ``-neg_tol``.
    """
    rows = []
    for tau, rho in series:
        rho = np.asarray(rho)
        rows.append({
            "tau": float(tau),
            "trace_deviation": float(abs(np.trace(rho) - 1)),
            "hermitian_residual": hc.hermitian_residual(rho),
            "min_eigenvalue": hc.min_eigenvalue(rho),
            "purity": float(np.trace(rho @ rho).real),
        })
    min_eig = min(r["min_eigenvalue"] for r in rows)
    return {
        "variant": variant,
        "rows": rows,
        "max_trace_deviation": max(r["trace_deviation"] for r in rows),
        "max_hermitian_residual": max(r["hermitian_residual"] for r in rows),
        "min_eigenvalue": min_eig,
        "flagged": bool(min_eig < -neg_tol),
    }
