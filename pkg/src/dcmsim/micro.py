"""Microscopic SDEs for the subsystem states X_t, Y_t and the tensor process Z_t.

Free dynamics::

    dX = -i H_A X dt + sum_j L_j X dW_Aj
    dY = -i H_B Y dt + sum_k M_k Y dW_Bk

The interacting scheme adds ``-i sum_m xi_Am A_m X dt`` (and the mirror term
for Y) with the state-dependent fields ``xi_Am = <B_m>_Y / 2`` and
``xi_Bm = <A_m>_X / 2``, frozen at the start of each step.

All steppers are explicit Euler-Maruyama.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import hilbert as hc
from ._kernels_py import euler_step, expectation_fields
from .errors import NormCollapseError, NumericalBlowupError, ValidationError
from .noise import NoiseModel, RngStream, sample_increments

HERMITIAN_TOL = 1e-10
NORM_FLOOR = 1e-12
STABILITY_FACTOR = 0.1
MODES = ("free", "interacting")


@dataclass(frozen=True, eq=False)
class SystemSpec:
    dims: hc.HilbertDims
    hA: np.ndarray
    hB: np.ndarray
    lOps: np.ndarray  # (nA, dimA, dimA)
    mOps: np.ndarray  # (nB, dimB, dimB)
    interaction: tuple = ()  # ((A_m, B_m), ...)
    noise: NoiseModel = None

    @property
    def aOps(self) -> np.ndarray:
        return np.array([a for a, _ in self.interaction], dtype=np.complex128).reshape(-1, self.dims.dimA, self.dims.dimA)

    @property
    def bOps(self) -> np.ndarray:
        return np.array([b for _, b in self.interaction], dtype=np.complex128).reshape(-1, self.dims.dimB, self.dims.dimB)

    @property
    def h_local(self) -> np.ndarray:
        return hc.embed_A(self.hA, self.dims.dimB) + hc.embed_B(self.hB, self.dims.dimA)

    @property
    def h_int(self) -> np.ndarray:
        d = self.dims.composite
        h = np.zeros((d, d), dtype=np.complex128)
        for a, b in self.interaction:
            h += np.kron(a, b)
        return h

    @property
    def h_tot(self) -> np.ndarray:
        return self.h_local + self.h_int

    def hamiltonian_norm(self) -> float:
        """Largest spectral norm among H_A, H_B and H_int."""
        norms = [np.linalg.norm(self.hA, 2), np.linalg.norm(self.hB, 2)]
        if self.interaction:
            norms.append(np.linalg.norm(self.h_int, 2))
        return float(max(norms))

    def max_stable_dt(self) -> float:
        hn = self.hamiltonian_norm()
        return np.inf if hn == 0 else STABILITY_FACTOR / hn


def build_system(hA, hB, lOps: Sequence = (), mOps: Sequence = (), interaction: Sequence = (),
                 noise: NoiseModel | None = None) -> SystemSpec:
    """Validate operators and bundle them into a :class:`SystemSpec`."""
    hA = hc.as_square(hA, "hA")
    hB = hc.as_square(hB, "hB")
    dims = hc.HilbertDims(hA.shape[0], hB.shape[0])
    for name, h in (("hA", hA), ("hB", hB)):
        if not hc.assert_hermitian(h, HERMITIAN_TOL):
            raise ValidationError(f"{name} is not Hermitian (residual {hc.hermitian_residual(h):.3e})")
    L = np.array([hc.as_square(o, "L") for o in lOps], dtype=np.complex128).reshape(-1, dims.dimA, dims.dimA)
    M = np.array([hc.as_square(o, "M") for o in mOps], dtype=np.complex128).reshape(-1, dims.dimB, dims.dimB)
    pairs = []
    for m, (a, b) in enumerate(interaction):
        a = hc.as_square(a, f"A_{m}")
        b = hc.as_square(b, f"B_{m}")
        if a.shape[0] != dims.dimA or b.shape[0] != dims.dimB:
            raise ValidationError(f"interaction pair {m} has wrong dimensions")
        if not (hc.assert_hermitian(a, HERMITIAN_TOL) and hc.assert_hermitian(b, HERMITIAN_TOL)):
            raise ValidationError(f"interaction pair {m} is not Hermitian")
        pairs.append((a, b))
    if noise is None:
        from .noise import zero_noise
        noise = zero_noise(len(L), len(M))
    if len(L) != noise.nA or len(M) != noise.nB:
        raise ValidationError(
            f"{len(L)} L-operators / {len(M)} M-operators do not match "
            f"{noise.nA} A-channels / {noise.nB} B-channels"
        )
    return SystemSpec(dims, hA, hB, L, M, tuple(pairs), noise)


@dataclass(frozen=True, eq=False)
class MicroState:
    x: np.ndarray
    y: np.ndarray
    t: float = 0.0
    stream: RngStream = None
    trajectory: int = field(default=0)


def make_state(x, y, stream: RngStream, t: float = 0.0) -> MicroState:
    return MicroState(hc.as_vector(x).copy(), hc.as_vector(y).copy(), float(t), stream, stream.streamIndex)


def tensor_state(state: MicroState) -> np.ndarray:
    return hc.tensor_product_vec(state.x, state.y)


def xi_fields(x, y, spec: SystemSpec):
    """Return ``(xi_A, xi_B)`` arrays of length M for the current states."""
    xiA, xiB = expectation_fields(x[None, :], y[None, :], spec.aOps, spec.bOps)
    return xiA[0], xiB[0]


def _check_step(dt, dt_max):
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if dt_max is not None and dt > dt_max:
        raise ValidationError(f"dt={dt:g} exceeds the stability guard {dt_max:g}")


def _step(state, spec, dt, interacting, dt_max):
    _check_step(dt, dt_max)
    dwA, dwB = sample_increments(spec.noise, dt, state.stream)
    x = state.x[None, :]
    y = state.y[None, :]
    if interacting and spec.interaction:
        dA, dB = spec.dims.dimA, spec.dims.dimB
        nx = float(np.vdot(state.x, state.x).real)
        ny = float(np.vdot(state.y, state.y).real)
        if nx < NORM_FLOOR * dA or ny < NORM_FLOOR * dB:
            raise NormCollapseError(f"state norm collapsed at t={state.t:g}", t=state.t,
                                    trajectory=state.trajectory)
        xiA, xiB = expectation_fields(x, y, spec.aOps, spec.bOps)
        xn, yn = euler_step(x, y, dwA[None, :], dwB[None, :], spec.hA, spec.hB, spec.lOps, spec.mOps,
                            dt, spec.aOps, spec.bOps, xiA, xiB)
    else:
        xn, yn = euler_step(x, y, dwA[None, :], dwB[None, :], spec.hA, spec.hB, spec.lOps, spec.mOps, dt)
    t = state.t + dt
    if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(yn))):
        raise NumericalBlowupError(f"non-finite state at t={t:g} (trajectory {state.trajectory})",
                                   t=t, trajectory=state.trajectory)
    return MicroState(xn[0], yn[0], t, state.stream, state.trajectory)


def step_free(state: MicroState, spec: SystemSpec, dt: float, dt_max: float | None = None) -> MicroState:
    """One Euler-Maruyama step of the uncoupled SDEs.

    The stream inside ``state`` is advanced; the returned state shares it.
    """
    return _step(state, spec, dt, False, dt_max)


def step_interacting(state: MicroState, spec: SystemSpec, dt: float, dt_max: float | None = None) -> MicroState:
    """One Euler-Maruyama step with the xi-feedback drift (fields taken at step start).

    Raises
    ------
    NormCollapseError
        When ``||x||^2 < 1e-12 dimA`` or ``||y||^2 < 1e-12 dimB``.
    """
    return _step(state, spec, dt, True, dt_max)


def evolve_trajectory(spec: SystemSpec, initial: MicroState, dt: float, nSteps: int,
                      mode: str = "free", stride: int = 1, dt_max: float | None = None):
    """Run ``nSteps`` micro steps and record Z every ``stride`` steps.

    Returns ``(times, zs)`` where ``zs[0]`` is the initial tensor state.
    """
    if mode not in MODES:
        raise ValidationError(f"mode must be one of {MODES}")
    if nSteps < 1:
        raise ValidationError("nSteps must be >= 1")
    step = step_interacting if mode == "interacting" else step_free
    state = initial
    times = [state.t]
    zs = [tensor_state(state)]
    for n in range(1, nSteps + 1):
        try:
            state = step(state, spec, dt, dt_max)
        except NumericalBlowupError as exc:
            exc.step = n
            exc.args = (f"{exc.args[0]} at step {n}",)
            raise
        if n % stride == 0:
            times.append(state.t)
            zs.append(tensor_state(state))
    return np.array(times), np.array(zs)


class DriftOperator:
    """Deterministic Ito drift of Z: ``-i(H_A(x)I + I(x)H_B) + sum_jk G_jk L_j(x)M_k``.

    ``G`` is the cross-variation ``E[dW_A dW_B^T]/dt``, equal to sigmaAB for
    real-driven noise and zero for circular noise.
    """

    def __init__(self, matrix):
        self.matrix = matrix

    def __matmul__(self, other):
        return self.matrix @ other


def build_drift_operator(spec: SystemSpec, gamma=None) -> DriftOperator:
    g = spec.noise.gamma if gamma is None else np.asarray(gamma, dtype=np.complex128)
    mat = -1j * spec.h_local
    for j in range(spec.lOps.shape[0]):
        for k in range(spec.mOps.shape[0]):
            if g[j, k] != 0:
                mat = mat + g[j, k] * np.kron(spec.lOps[j], spec.mOps[k])
    return DriftOperator(mat)


def drift_operator_reference(spec: SystemSpec, gamma=None) -> np.ndarray:
    """Second construction of the drift via embedded operators, for cross-checks."""
    g = spec.noise.gamma if gamma is None else np.asarray(gamma, dtype=np.complex128)
    dA, dB = spec.dims.dimA, spec.dims.dimB
    out = -1j * (hc.embed_A(spec.hA, dB) + hc.embed_B(spec.hB, dA))
    cross = np.einsum("jk,jab,kcd->acbd", g, spec.lOps, spec.mOps).reshape(dA * dB, dA * dB)
    return out + cross


def projector_collapse_residual(y, b) -> float:
    """``||(I - P_y) B y|| / ||B y||``: the part of ``B y`` orthogonal to ``y``.

    Zero when ``y`` is an eigenvector of ``B``; returns 0 when ``B y = 0``.
    """
    y = hc.as_vector(y)
    b = hc.as_square(b)
    ny2 = float(np.vdot(y, y).real)
    if ny2 <= 0:
        raise ValidationError("projector_collapse_residual needs a non-zero vector")
    by = b @ y
    nby = np.linalg.norm(by)
    if nby == 0:
        return 0.0
    transverse = by - (np.vdot(y, by) / ny2) * y
    return float(np.linalg.norm(transverse) / nby)


def feedback_synthesis_residual(x, y, a, b) -> np.ndarray:
    """``[xi_A (A(x)I) + xi_B (I(x)B)] Z - (A(x)B) Z`` for one interaction pair."""
    x = hc.as_vector(x)
    y = hc.as_vector(y)
    xiA = 0.5 * (np.vdot(y, b @ y) / np.vdot(y, y)).real
    xiB = 0.5 * (np.vdot(x, a @ x) / np.vdot(x, x)).real
    z = np.kron(x, y)
    synth = xiA * (np.kron(a, np.eye(len(y))) @ z) + xiB * (np.kron(np.eye(len(x)), b) @ z)
    return synth - np.kron(a, b) @ z


def random_haar_state(dim: int, stream: RngStream) -> np.ndarray:
    z = stream.standard_normal((2, dim))
    v = z[0] + 1j * z[1]
    return v / np.linalg.norm(v)
