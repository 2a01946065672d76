"""Correlated complex Wiener channels.

The joint covariance of the A-channels and B-channels is the block matrix

    [[sigmaAA,    sigmaAB],
     [sigmaAB^H,  sigmaBB]]      (units 1/time)

and increments over a step ``dt`` are ``sqrt(dt) * F z`` with ``F F^H`` equal
to that block matrix and ``z`` a vector of independent standard variates,
real (``kind='real'``) or circularly-symmetric complex (``kind='circular'``).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import IndefiniteCovarianceError, ValidationError

INDEFINITE_RTOL = 1e-10
CLIP_FLOOR = 1e-12
NOISE_KINDS = ("real", "circular")


def _as_block(a, shape, name):
    a = np.asarray(a, dtype=np.complex128)
    if a.size == 0:
        return np.zeros(shape, dtype=np.complex128)
    a = np.atleast_2d(a)
    if a.shape != shape:
        raise ValidationError(f"noise block {name} has shape {a.shape}, expected {shape}")
    return a


@dataclass(frozen=True, eq=False)
class NoiseModel:
    nA: int
    nB: int
    sigmaAA: np.ndarray
    sigmaBB: np.ndarray
    sigmaAB: np.ndarray
    joint: np.ndarray
    jointFactor: np.ndarray
    kind: str = "real"

    @property
    def n(self) -> int:
        return self.nA + self.nB

    @property
    def is_zero(self) -> bool:
        return not np.any(self.joint)

    @property
    def pseudo_joint(self) -> np.ndarray:
        """E[dW dW^T] / dt, zero for circular noise."""
        if self.kind == "circular":
            return np.zeros_like(self.joint)
        return self.jointFactor @ self.jointFactor.T

    @property
    def gamma(self) -> np.ndarray:
        """E[dW_A dW_B^T] / dt: the cross-variation that enters the drift of Z."""
        return self.pseudo_joint[: self.nA, self.nA :]


def joint_covariance(sigmaAA, sigmaBB, sigmaAB) -> np.ndarray:
    return np.block([[sigmaAA, sigmaAB], [sigmaAB.conj().T, sigmaBB]])


def _offending_block(aa, bb, tol):
    for name, blk in (("sigmaAA", aa), ("sigmaBB", bb)):
        if blk.size and np.linalg.eigvalsh(0.5 * (blk + blk.conj().T))[0] < -tol:
            return name
    return "sigmaAB"


def build_noise_model(sigmaAA, sigmaBB, sigmaAB, kind: str = "real") -> NoiseModel:
    """Validate the joint covariance and factor it.

    Cholesky is used when the joint matrix is positive definite. Semidefinite
    inputs (perfectly correlated channels) fall back to an eigendecomposition
    with eigenvalues below ``1e-12`` zeroed.

    Raises
    ------
    IndefiniteCovarianceError
        If an eigenvalue is below ``-1e-10 * ||Sigma||``. The message names the
        offending block.
    ValidationError
        For inconsistent shapes, a non-Hermitian joint matrix, an unknown
        ``kind``, or complex covariances with ``kind='real'``.
    """
    if kind not in NOISE_KINDS:
        raise ValidationError(f"noise kind must be one of {NOISE_KINDS}, got {kind!r}")
    aa = np.atleast_2d(np.asarray(sigmaAA, dtype=np.complex128))
    bb = np.atleast_2d(np.asarray(sigmaBB, dtype=np.complex128))
    nA = aa.shape[0] if aa.size else 0
    nB = bb.shape[0] if bb.size else 0
    aa = _as_block(aa, (nA, nA), "sigmaAA")
    bb = _as_block(bb, (nB, nB), "sigmaBB")
    ab = _as_block(sigmaAB, (nA, nB), "sigmaAB")

    joint = joint_covariance(aa, bb, ab)
    scale = float(np.linalg.norm(joint))
    if np.max(np.abs(joint - joint.conj().T), initial=0.0) > 1e-10 * (1.0 + scale):
        raise ValidationError("sigmaAA and sigmaBB must be Hermitian")
    if kind == "real" and np.max(np.abs(joint.imag), initial=0.0) > 1e-12 * (1.0 + scale):
        raise ValidationError("complex noise covariances need noise kind 'circular'")

    n = nA + nB
    if n == 0:
        factor = np.zeros((0, 0), dtype=np.complex128)
    else:
        evals, evecs = np.linalg.eigh(joint)
        if evals[0] < -INDEFINITE_RTOL * scale:
            block = _offending_block(aa, bb, INDEFINITE_RTOL * scale)
            raise IndefiniteCovarianceError(
                f"joint noise covariance is indefinite (min eigenvalue {evals[0]:.3e}); "
                f"offending block: {block}"
            )
        try:
            if evals[0] <= CLIP_FLOOR * max(scale, 1.0):
                raise np.linalg.LinAlgError
            factor = np.linalg.cholesky(joint)
        except np.linalg.LinAlgError:
            clipped = np.where(evals < CLIP_FLOOR, 0.0, evals)
            factor = evecs * np.sqrt(clipped)
        if kind == "real":
            factor = factor.real.astype(np.complex128)
    joint.setflags(write=False)
    factor.setflags(write=False)
    return NoiseModel(nA, nB, aa, bb, ab, joint, factor, kind)


def zero_noise(nA: int = 0, nB: int = 0, kind: str = "real") -> NoiseModel:
    return build_noise_model(np.zeros((nA, nA)), np.zeros((nB, nB)), np.zeros((nA, nB)), kind)


class RngStream:
    """Counter-based (Philox) stream keyed by ``(seed, streamIndex)``.

    ``purpose`` separates the noise sequence from auxiliary draws such as
    random initial states, so enabling one never shifts the other.
    """

    NOISE = 0
    INITIAL = 1

    def __init__(self, seed: int, streamIndex: int = 0, purpose: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF
        self.streamIndex = int(streamIndex)
        self.purpose = int(purpose)
        key = (self.streamIndex,) if purpose == 0 else (self.streamIndex, self.purpose)
        ss = np.random.SeedSequence(self.seed, spawn_key=key)
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, purpose: int) -> "RngStream":
        return RngStream(self.seed, self.streamIndex, purpose)

    def standard_normal(self, shape):
        return self.generator.standard_normal(shape)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, streamIndex={self.streamIndex})"


def _standard_variates(kind, n, n_steps, stream):
    if kind == "circular":
        z = stream.standard_normal((n_steps, 2, n))
        return (z[:, 0, :] + 1j * z[:, 1, :]) * np.sqrt(0.5)
    return stream.standard_normal((n_steps, n)).astype(np.complex128)


def _apply_factor(z, factor):
    # explicit column sums: same arithmetic regardless of how many steps are drawn at once
    out = np.zeros(z.shape, dtype=np.complex128)
    for b in range(factor.shape[1]):
        out += z[:, b : b + 1] * factor[:, b]
    return out


def sample_increment_block(model: NoiseModel, dt: float, stream: RngStream, n_steps: int) -> np.ndarray:
    """Joint increments for ``n_steps`` consecutive steps, shape ``(n_steps, nA+nB)``.

    Equivalent, bit for bit, to ``n_steps`` calls of :func:`sample_increments`.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    z = _standard_variates(model.kind, model.n, int(n_steps), stream)
    return np.sqrt(dt) * _apply_factor(z, model.jointFactor)


def sample_increments(model: NoiseModel, dt: float, stream: RngStream):
    dw = sample_increment_block(model, dt, stream, 1)[0]
    return dw[: model.nA], dw[model.nA :]


def empirical_cross_variation(model: NoiseModel, dt: float, nSamples: int, stream: RngStream,
                              return_se: bool = False, chunk: int = 100_000):
    """Monte-Carlo estimate of ``E[dW_A dW_B^H] / dt``.

    With ``return_se`` the per-entry standard error (modulus of the complex
    sample spread) is returned as well.
    """
    nA, nB = model.nA, model.nB
    s1 = np.zeros((nA, nB), dtype=np.complex128)
    s2 = np.zeros((nA, nB))
    done = 0
    while done < nSamples:
        m = min(chunk, nSamples - done)
        dw = sample_increment_block(model, dt, stream, m)
        prod = dw[:, :nA, None] * dw[:, None, nA:].conj() / dt
        s1 += prod.sum(axis=0)
        s2 += (np.abs(prod) ** 2).sum(axis=0)
        done += m
    mean = s1 / nSamples
    if not return_se:
        return mean
    if nSamples > 1:
        var = np.maximum(s2 / nSamples - np.abs(mean) ** 2, 0.0) * nSamples / (nSamples - 1)
        se = np.sqrt(var / nSamples)
    else:
        se = np.full((nA, nB), np.inf)
    return mean, se
