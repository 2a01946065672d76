"""Trajectory ensembles: per-trajectory streams, chunking, optional worker pool.

Trajectory ``i`` always draws from ``RngStream(seed, i)``, so results do not
depend on chunk size, worker count or scheduling.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import hilbert as hc
from .coarse import WindowConfig
from .errors import ValidationError
from .kernels import get_run_windows
from .micro import NORM_FLOOR, SystemSpec, random_haar_state
from .noise import RngStream, sample_increment_block

INITIAL_KINDS = ("fixed", "random_haar")
DEFAULT_CHUNK = 1024


@dataclass(frozen=True, eq=False)
class InitialCondition:
    kind: str = "fixed"
    x: np.ndarray = None
    y: np.ndarray = None

    def __post_init__(self):
        if self.kind not in INITIAL_KINDS:
            raise ValidationError(f"initial.kind must be one of {INITIAL_KINDS}")
        if self.kind == "fixed":
            if self.x is None or self.y is None:
                raise ValidationError("fixed initial condition needs x and y")
            x = hc.as_vector(self.x)
            y = hc.as_vector(self.y)
            if np.linalg.norm(x) == 0 or np.linalg.norm(y) == 0:
                raise ValidationError("initial x and y must be non-zero")
            object.__setattr__(self, "x", x)
            object.__setattr__(self, "y", y)

    def vectors(self, seed: int, index: int, dimA: int, dimB: int):
        if self.kind == "fixed":
            return self.x, self.y
        s = RngStream(seed, index, RngStream.INITIAL)
        return random_haar_state(dimA, s), random_haar_state(dimB, s)

    def rho0(self, dimA: int, dimB: int) -> np.ndarray:
        """Exact initial density operator of the ensemble."""
        d = dimA * dimB
        if self.kind == "random_haar":
            return np.eye(d, dtype=np.complex128) / d
        z = np.kron(self.x, self.y)
        return np.outer(z, z.conj()) / np.vdot(z, z).real


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)


def _chunk(args):
    spec, window, initial, seed, start, stop, interacting, backend = args
    dA, dB = spec.dims.dimA, spec.dims.dimB
    n_steps = window.n_steps
    dt = window.dtMicro
    b = stop - start
    nch = max(spec.noise.n, 1)
    x0 = np.empty((b, dA), np.complex128)
    y0 = np.empty((b, dB), np.complex128)
    dW = np.zeros((b, n_steps, nch), np.complex128)
    for r, i in enumerate(range(start, stop)):
        x0[r], y0[r] = initial.vectors(seed, i, dA, dB)
        if not spec.noise.is_zero:
            dW[r] = sample_increment_block(spec.noise, dt, RngStream(seed, i), n_steps)
    kernel = get_run_windows(backend)
    return kernel(x0, y0, dW, spec.hA, spec.hB, spec.lOps, spec.mOps, dt,
                  window.start_steps, window.window_steps, spec.aOps, spec.bOps,
                  interacting, np.arange(start, stop), NORM_FLOOR)


def simulate_windows(spec: SystemSpec, window: WindowConfig, n_traj: int, seed: int,
                     initial: InitialCondition, mode: str | None = None, backend: str | None = None,
                     workers: int = 1, chunk: int = DEFAULT_CHUNK, first_index: int = 0) -> np.ndarray:
    """Window vectors ``C_Delta`` for every trajectory and tau: shape ``(n_traj, n_tau, dA*dB)``."""
    if mode is None:
        mode = "interacting" if spec.interaction else "free"
    if mode not in ("free", "interacting"):
        raise ValidationError(f"unknown mode {mode!r}")
    dt_max = spec.max_stable_dt()
    if window.dtMicro > dt_max:
        raise ValidationError(f"micro step {window.dtMicro:g} exceeds the stability guard {dt_max:g}")
    interacting = mode == "interacting"
    bounds = [(s, min(s + chunk, first_index + n_traj)) for s in range(first_index, first_index + n_traj, chunk)]
    jobs = [(spec, window, initial, seed, a, b, interacting, backend) for a, b in bounds]
    if workers and workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_chunk, jobs))
    else:
        parts = [_chunk(j) for j in jobs]
    return np.concatenate(parts, axis=0)
