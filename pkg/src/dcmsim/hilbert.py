"""Dense complex linear algebra on H_A, H_B and H_A (x) H_B.

Matrices and vectors are plain ``complex128`` numpy arrays. Subsystem A is
always the slow (outer) Kronecker index: entry ``i*dimB + j`` of ``x (x) y``
is ``x[i] * y[j]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTraceError, DimensionError, ValidationError

DEGENERATE_TRACE_RTOL = 1e-12


@dataclass(frozen=True)
class HilbertDims:
    dimA: int
    dimB: int

    def __post_init__(self):
        if int(self.dimA) < 1 or int(self.dimB) < 1:
            raise DimensionError(f"subsystem dimensions must be >= 1, got {self.dimA}, {self.dimB}")

    @property
    def composite(self) -> int:
        return self.dimA * self.dimB


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.complex128)
    if v.ndim != 1 or v.size == 0:
        raise DimensionError(f"expected a non-empty 1-d vector, got shape {v.shape}")
    return v


def as_square(a, name: str = "matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionError(f"{name} must be square, got shape {a.shape}")
    return a


def tensor_product_vec(x, y) -> np.ndarray:
    return np.kron(as_vector(x), as_vector(y))


def tensor_product_op(a, b) -> np.ndarray:
    """Kronecker product of two square operators, A acting on the slow index."""
    return np.kron(as_square(a, "A"), as_square(b, "B"))


def _same_square(a, b):
    a = as_square(a, "A")
    b = as_square(b, "B")
    if a.shape != b.shape:
        raise DimensionError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def commutator(a, b) -> np.ndarray:
    a, b = _same_square(a, b)
    return a @ b - b @ a


def anticommutator(a, b) -> np.ndarray:
    a, b = _same_square(a, b)
    return a @ b + b @ a


def dagger(a) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def hermitian_residual(a) -> float:
    a = as_square(a)
    return float(np.max(np.abs(a - a.conj().T)))


def hermitian_part(a) -> np.ndarray:
    a = as_square(a)
    return 0.5 * (a + a.conj().T)


def min_eigenvalue(a) -> float:
    """Smallest eigenvalue of the Hermitian part of ``a``."""
    return float(np.linalg.eigvalsh(hermitian_part(a))[0])


def assert_hermitian(a, tol: float = 1e-10) -> bool:
    return hermitian_residual(a) <= tol


def assert_psd(a, tol: float = 1e-10) -> bool:
    # asymmetry is assert_hermitian's business; only the Hermitian part counts here
    return min_eigenvalue(a) >= -tol


def normalize_to_density(c) -> np.ndarray:
    """Return ``c / Tr c``.

    Raises
    ------
    DegenerateTraceError
        If ``|Tr c| < 1e-12 * ||c||_F`` (or ``c`` is identically zero).
    """
    c = as_square(c)
    tr = np.trace(c)
    fro = np.linalg.norm(c)
    if fro == 0.0 or abs(tr) < DEGENERATE_TRACE_RTOL * fro:
        raise DegenerateTraceError(f"trace {tr:.3e} is degenerate for a matrix of norm {fro:.3e}")
    return c / tr


def partial_trace(rho, dims: HilbertDims, keep: str = "A") -> np.ndarray:
    r = np.asarray(rho).reshape(dims.dimA, dims.dimB, dims.dimA, dims.dimB)
    if keep == "A":
        return np.einsum("ijkj->ik", r)
    if keep == "B":
        return np.einsum("ijil->jl", r)
    raise ValueError("keep must be 'A' or 'B'")


def embed_A(op, dimB: int) -> np.ndarray:
    return np.kron(as_square(op), np.eye(dimB, dtype=np.complex128))


def embed_B(op, dimA: int) -> np.ndarray:
    return np.kron(np.eye(dimA, dtype=np.complex128), as_square(op))


# -- operator literals --------------------------------------------------------

PRESETS = {
    "pauli_x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "pauli_y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "pauli_z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
    # |0><1| lowers in the convention pauli_z|0> = +|0>
    "lowering": np.array([[0, 1], [0, 0]], dtype=np.complex128),
    "raising": np.array([[0, 0], [1, 0]], dtype=np.complex128),
}


def preset(name: str, dim: int = 2) -> np.ndarray:
    if name == "identity":
        return np.eye(dim, dtype=np.complex128)
    if name == "zero":
        return np.zeros((dim, dim), dtype=np.complex128)
    try:
        return PRESETS[name].copy()
    except KeyError:
        raise ValidationError(f"unknown operator preset {name!r}") from None


def _parse_entry(e):
    if isinstance(e, (list, tuple)):
        if len(e) != 2:
            raise ValidationError(f"complex literal must be [re, im], got {e!r}")
        return complex(float(e[0]), float(e[1]))
    return complex(e)


def parse_matrix(spec, dim: int | None = None) -> np.ndarray:
    """Parse an operator literal.

    Accepts a preset name, a mapping ``{preset: name, scale: s}``, or nested
    arrays whose leaves are ``[re, im]`` pairs (bare reals are allowed too).
    """
    if isinstance(spec, str):
        return preset(spec, dim or 2)
    if isinstance(spec, dict):
        base = parse_matrix(spec["preset"], dim)
        return complex(_parse_entry(spec.get("scale", 1.0))) * base
    rows = [[_parse_entry(e) for e in row] for row in spec]
    m = np.array(rows, dtype=np.complex128)
    if m.ndim != 2:
        raise ValidationError("matrix literal must be a list of rows")
    return m


def parse_vector(spec) -> np.ndarray:
    return as_vector([_parse_entry(e) for e in spec])


def format_matrix(m) -> list:
    m = np.atleast_1d(np.asarray(m, dtype=np.complex128))
    if m.ndim == 1:
        return [[float(z.real), float(z.imag)] for z in m]
    return [format_matrix(row) for row in m]
