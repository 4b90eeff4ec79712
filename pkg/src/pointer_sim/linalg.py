"""Dense linear algebra on small tensor-product Hilbert spaces.

Ordering convention: composite spaces are ``system ⊗ environment``. For a
state on dims ``(n, d)`` the amplitude of basis ket ``|i⟩|k⟩`` sits at flat
index ``i * d + k`` (row-major, matching ``np.kron``), so
``psi.reshape(n, d)[i, k]`` recovers it.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from math import prod
from typing import Sequence

import numpy as np

from .errors import CapacityError, ValidationError

DEFAULT_MAX_DIM = 4096
MAX_DIM_ENV = "POINTER_SIM_MAX_DIM"

NORM_TOL = 1e-9
HERMITIAN_TOL = 1e-12
DENSITY_TOL = 1e-10


def max_dim() -> int:
    """Current Hilbert-space cap (``POINTER_SIM_MAX_DIM`` overrides the default)."""
    raw = os.environ.get(MAX_DIM_ENV)
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError:
        raise ValidationError(f"not an integer: {raw!r}", MAX_DIM_ENV) from None
    if value < 1:
        raise ValidationError("must be positive", MAX_DIM_ENV)
    return value


def check_capacity(dim: int) -> None:
    cap = max_dim()
    if dim > cap:
        raise CapacityError(f"Hilbert dimension {dim} exceeds cap {cap}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=complex)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class StateVector:
    """Normalized ket over a tensor-product space."""

    data: np.ndarray
    dims: tuple[int, ...]

    def __post_init__(self):
        data = _frozen(self.data).reshape(-1)
        dims = tuple(int(d) for d in self.dims)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)
        if any(d < 1 for d in dims) or data.size != prod(dims):
            raise ValidationError(f"length {data.size} does not match dims {dims}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("non-finite amplitude")
        norm = np.linalg.norm(data)
        if abs(norm - 1.0) > NORM_TOL:
            raise ValidationError(f"state not normalized (norm={norm:.12g})")

    @classmethod
    def normalized(cls, data, dims: Sequence[int] | None = None) -> "StateVector":
        data = np.asarray(data, dtype=complex).reshape(-1)
        norm = np.linalg.norm(data)
        if norm == 0 or not np.isfinite(norm):
            raise ValidationError("cannot normalize a zero or non-finite vector")
        return cls(data / norm, tuple(dims) if dims is not None else (data.size,))

    @property
    def dim(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class Operator:
    """Square matrix acting on a tensor-product space."""

    data: np.ndarray
    dims: tuple[int, ...] = ()
    is_hermitian: bool = field(init=False)

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError(f"operator must be square, got shape {data.shape}")
        dims = tuple(int(d) for d in self.dims) or (data.shape[0],)
        if prod(dims) != data.shape[0]:
            raise ValidationError(f"side {data.shape[0]} does not match dims {dims}")
        if not np.all(np.isfinite(data)):
            raise ValidationError("non-finite operator entry")
        herm = bool(np.max(np.abs(data - data.conj().T), initial=0.0) <= HERMITIAN_TOL)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "is_hermitian", herm)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @classmethod
    def identity(cls, n: int) -> "Operator":
        return cls(np.eye(n), (n,))


@dataclass(frozen=True)
class DensityMatrix:
    """Hermitian, unit-trace, positive semidefinite operator."""

    data: np.ndarray

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2 or data.shape[0] != data.shape[1]:
            raise ValidationError(f"density matrix must be square, got {data.shape}")
        if np.max(np.abs(data - data.conj().T), initial=0.0) > DENSITY_TOL:
            raise ValidationError("density matrix not Hermitian")
        tr = np.trace(data)
        if abs(tr - 1.0) > DENSITY_TOL:
            raise ValidationError(f"density matrix trace {tr:.12g} != 1")
        if np.linalg.eigvalsh(data).min() < -DENSITY_TOL:
            raise ValidationError("density matrix has negative eigenvalues")
        object.__setattr__(self, "data", data)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def purity(self) -> float:
        return float(np.real(np.trace(self.data @ self.data)))


def tensor_product(a: Operator, b: Operator) -> Operator:
    """Kronecker product ``a ⊗ b`` with dims concatenated."""
    check_capacity(a.dim * b.dim)
    return Operator(np.kron(a.data, b.data), a.dims + b.dims)


def kron_states(a: StateVector, b: StateVector) -> StateVector:
    check_capacity(a.dim * b.dim)
    return StateVector(np.kron(a.data, b.data), a.dims + b.dims)


def eigh_hermitian(h: Operator | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    data = h.data if isinstance(h, Operator) else np.asarray(h, dtype=complex)
    if np.max(np.abs(data - data.conj().T), initial=0.0) > HERMITIAN_TOL:
        raise ValidationError("generator is not Hermitian")
    return np.linalg.eigh(data)


def hermitian_propagator(h: Operator, dt: float, hbar: float = 1.0) -> Operator:
    """``exp(-i h dt / hbar)`` via eigendecomposition of ``h``."""
    if not np.isfinite(dt):
        raise ValidationError("time step must be finite")
    evals, evecs = eigh_hermitian(h)
    phases = np.exp(-1j * evals * dt / hbar)
    return Operator((evecs * phases) @ evecs.conj().T, h.dims)


def inner_product(a: StateVector, b: StateVector) -> complex:
    """⟨a|b⟩, conjugate-linear in ``a``."""
    if a.dims != b.dims:
        raise ValidationError(f"dimension mismatch {a.dims} vs {b.dims}")
    return complex(np.vdot(a.data, b.data))


def partial_trace(rho: DensityMatrix, dims: Sequence[int], keep: int | Sequence[int]) -> DensityMatrix:
    """Trace out every subsystem not listed in ``keep``."""
    dims = tuple(int(d) for d in dims)
    if prod(dims) != rho.dim:
        raise ValidationError(f"dims {dims} inconsistent with density dimension {rho.dim}")
    keep = sorted({keep} if isinstance(keep, (int, np.integer)) else set(keep))
    n = len(dims)
    if not keep or keep[0] < 0 or keep[-1] >= n:
        raise ValidationError(f"keep indices {keep} out of range for {n} subsystems")

    tensor = rho.data.reshape(dims + dims)
    row = list(range(n))
    col = [n + i if i in keep else i for i in range(n)]
    out = keep + [n + i for i in keep]
    reduced = np.einsum(tensor, row + col, out)
    kept = prod(dims[i] for i in keep)
    return DensityMatrix(reduced.reshape(kept, kept))


def pure_density(state: StateVector) -> DensityMatrix:
    return DensityMatrix(np.outer(state.data, state.data.conj()))
