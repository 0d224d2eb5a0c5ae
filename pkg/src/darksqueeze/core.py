"""Truncated Hilbert-space operator algebra.

Dense complex matrices on a tensor product of declared factors. The leftmost
factor is the slowest-varying index of the Kronecker product; every other
module relies on that ordering.

Note on truncated ladder operators: ``[a, a^dagger]`` equals the identity on
Fock levels ``0..dim-2`` only. The ``(dim-1, dim-1)`` element is ``1 - dim``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Sequence, Union

import numpy as np
import scipy.linalg

DIMENSION_CAP = 50_000

HERMITIAN_TOL = 1e-12
KET_NORM_TOL = 1e-9
DENSITY_HERMITIAN_TOL = 1e-10
DENSITY_TRACE_TOL = 1e-9
DENSITY_EIG_TOL = -1e-8


class AlgebraError(ValueError):
    """Invalid construction or combination of operators and states."""


class DimensionError(AlgebraError):
    pass


class SpaceMismatchError(AlgebraError):
    pass


@dataclass(frozen=True)
class Boson:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise DimensionError(f"boson dimension must be positive, got {self.dim}")

    @property
    def size(self) -> int:
        return self.dim


@dataclass(frozen=True)
class Dicke:
    """Symmetric subspace of ``N`` two-level systems, basis ``|m>``, m = 0..N excitations."""

    N: int

    def __post_init__(self):
        if self.N < 1:
            raise DimensionError(f"Dicke factor needs N >= 1, got {self.N}")

    @property
    def size(self) -> int:
        return self.N + 1


@dataclass(frozen=True)
class Multilevel:
    """``count`` distinguishable atoms with ``levels`` states each."""

    levels: int
    count: int

    def __post_init__(self):
        if self.levels < 1 or self.count < 1:
            raise DimensionError("multilevel factor needs positive levels and count")

    @property
    def size(self) -> int:
        return self.levels ** self.count


Factor = Union[Boson, Dicke, Multilevel]


@dataclass(frozen=True)
class HilbertSpec:
    factors: tuple
    cap: int = DIMENSION_CAP

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))
        if not self.factors:
            raise DimensionError("a Hilbert space needs at least one factor")
        if self.dim > self.cap:
            raise DimensionError(
                f"total dimension {self.dim} exceeds the cap of {self.cap}"
            )

    @classmethod
    def of(cls, *factors: Factor, cap: int = DIMENSION_CAP) -> "HilbertSpec":
        return cls(tuple(factors), cap=cap)

    @property
    def dims(self) -> tuple:
        return tuple(f.size for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    def factor_levels(self, index: int) -> np.ndarray:
        """Level index of factor ``index`` for every basis state of the full space."""
        dims = self.dims
        if not 0 <= index < len(dims):
            raise AlgebraError(f"factor index {index} out of range")
        inner = int(np.prod(dims[index + 1:], dtype=np.int64))
        return (np.arange(self.dim) // inner) % dims[index]

    def boson_indices(self) -> list:
        return [i for i, f in enumerate(self.factors) if isinstance(f, Boson)]


@dataclass(frozen=True, eq=False)
class QOperator:
    space: HilbertSpec
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=complex)
        if m.shape != (self.space.dim, self.space.dim):
            raise DimensionError(
                f"matrix shape {m.shape} does not match space dimension {self.space.dim}"
            )
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.space.dim

    @property
    def dag(self) -> "QOperator":
        return QOperator(self.space, self.matrix.conj().T)

    def hermiticity_error(self) -> float:
        return float(np.max(np.abs(self.matrix - self.matrix.conj().T), initial=0.0))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return self.hermiticity_error() < tol

    def _check(self, other: "QOperator") -> None:
        if other.space != self.space:
            raise SpaceMismatchError("operators live on different spaces")

    def __add__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix + other.matrix)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix - other.matrix)
        return NotImplemented

    def __neg__(self):
        return QOperator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return QOperator(self.space, self.matrix * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, QOperator):
            self._check(other)
            return QOperator(self.space, self.matrix @ other.matrix)
        return NotImplemented

    def norm_max(self) -> float:
        return float(np.max(np.abs(self.matrix), initial=0.0))


def commutator(A: QOperator, B: QOperator) -> QOperator:
    return A @ B - B @ A


def identity(space: HilbertSpec) -> QOperator:
    return QOperator(space, np.eye(space.dim, dtype=complex))


@dataclass(frozen=True, eq=False)
class QuantumState:
    """A ket or a density matrix on ``space``."""

    space: HilbertSpec
    data: np.ndarray
    kind: str = field(default="ket")

    def __post_init__(self):
        d = np.asarray(self.data, dtype=complex)
        n = self.space.dim
        if self.kind == "ket":
            if d.shape != (n,):
                raise DimensionError(f"ket shape {d.shape} does not match dimension {n}")
            if abs(np.linalg.norm(d) - 1.0) > KET_NORM_TOL:
                raise AlgebraError("ket is not normalized")
        elif self.kind == "density":
            if d.shape != (n, n):
                raise DimensionError(f"density shape {d.shape} does not match dimension {n}")
            if np.max(np.abs(d - d.conj().T), initial=0.0) > DENSITY_HERMITIAN_TOL:
                raise AlgebraError("density matrix is not Hermitian")
            if abs(np.trace(d).real - 1.0) > DENSITY_TRACE_TOL:
                raise AlgebraError("density matrix trace differs from one")
            if np.linalg.eigvalsh(d).min() < DENSITY_EIG_TOL:
                raise AlgebraError("density matrix is not positive semidefinite")
        else:
            raise AlgebraError(f"unknown state kind {self.kind!r}")
        d.setflags(write=False)
        object.__setattr__(self, "data", d)

    @classmethod
    def ket(cls, space: HilbertSpec, vec, normalize: bool = False) -> "QuantumState":
        v = np.asarray(vec, dtype=complex)
        if normalize:
            nrm = np.linalg.norm(v)
            if nrm == 0:
                raise AlgebraError("cannot normalize the zero vector")
            v = v / nrm
        return cls(space, v, "ket")

    @classmethod
    def density(cls, space: HilbertSpec, rho) -> "QuantumState":
        return cls(space, rho, "density")

    @classmethod
    def basis(cls, space: HilbertSpec, levels: Sequence[int]) -> "QuantumState":
        """Product basis state with the given level in each factor."""
        if len(levels) != len(space.factors):
            raise DimensionError("one level per factor is required")
        idx = int(np.ravel_multi_index(tuple(levels), space.dims))
        v = np.zeros(space.dim, dtype=complex)
        v[idx] = 1.0
        return cls(space, v, "ket")

    @property
    def is_ket(self) -> bool:
        return self.kind == "ket"

    def to_density(self) -> "QuantumState":
        if not self.is_ket:
            return self
        return QuantumState(self.space, np.outer(self.data, self.data.conj()), "density")


def annihilation(dim: int) -> QOperator:
    if dim < 2:
        raise DimensionError(f"annihilation operator needs dim >= 2, got {dim}")
    m = np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)
    return QOperator(HilbertSpec.of(Boson(dim)), m)


def collective_spin_ops(N: int):
    """``(S+, S-, Sz)`` on the symmetric subspace; ``|m>`` has ``m`` excitations."""
    space = HilbertSpec.of(Dicke(N))
    m = np.arange(N + 1, dtype=float)
    sz = np.diag(m - N / 2.0).astype(complex)
    sp = np.zeros((N + 1, N + 1), dtype=complex)
    sp[np.arange(1, N + 1), np.arange(N)] = np.sqrt((m[:-1] + 1.0) * (N - m[:-1]))
    return QOperator(space, sp), QOperator(space, sp.conj().T), QOperator(space, sz)


def embed(op: QOperator, space: HilbertSpec, factor_index: int) -> QOperator:
    """Place ``op`` on factor ``factor_index`` of ``space``; identity elsewhere."""
    dims = space.dims
    if not 0 <= factor_index < len(dims):
        raise AlgebraError(f"factor index {factor_index} out of range")
    if op.dim != dims[factor_index]:
        raise DimensionError(
            f"operator dimension {op.dim} does not match factor dimension {dims[factor_index]}"
        )
    left = int(np.prod(dims[:factor_index], dtype=np.int64))
    right = int(np.prod(dims[factor_index + 1:], dtype=np.int64))
    m = op.matrix
    if right > 1:
        m = np.kron(m, np.eye(right))
    if left > 1:
        m = np.kron(np.eye(left), m)
    return QOperator(space, m)


def tensor(*ops: QOperator) -> QOperator:
    space = HilbertSpec(tuple(f for op in ops for f in op.space.factors))
    return QOperator(space, reduce(np.kron, [op.matrix for op in ops]))


def atom_operator(single: np.ndarray, factor: Multilevel, atom: int) -> np.ndarray:
    """Single-atom matrix acting on atom ``atom`` of a multilevel factor (factor-local)."""
    if single.shape != (factor.levels, factor.levels):
        raise DimensionError("single-atom operator has the wrong shape")
    if not 0 <= atom < factor.count:
        raise AlgebraError(f"atom index {atom} out of range")
    mats = [np.eye(factor.levels)] * factor.count
    mats = list(mats)
    mats[atom] = single
    return reduce(np.kron, mats).astype(complex)


def matrix_exponential(op: QOperator) -> QOperator:
    """``exp(M)``; eigendecomposition for (anti-)Hermitian input, Pade otherwise."""
    m = op.matrix
    if not np.all(np.isfinite(m)):
        raise AlgebraError("matrix exponential of non-finite entries")
    if m.size == 0:
        return op
    scale = max(np.max(np.abs(m)), 1.0)
    if np.max(np.abs(m - m.conj().T)) <= 1e-14 * scale:
        h = 0.5 * (m + m.conj().T)
        w, v = np.linalg.eigh(h)
        return QOperator(op.space, (v * np.exp(w)) @ v.conj().T)
    if np.max(np.abs(m + m.conj().T)) <= 1e-14 * scale:
        h = 0.5j * (m - m.conj().T)  # m = -i h with h Hermitian
        w, v = np.linalg.eigh(h)
        return QOperator(op.space, (v * np.exp(-1j * w)) @ v.conj().T)
    return QOperator(op.space, scipy.linalg.expm(m))


def _check_space(state: QuantumState, op: QOperator) -> None:
    if state.space != op.space:
        raise SpaceMismatchError("state and operator live on different spaces")


def expectation(state: QuantumState, op: QOperator) -> complex:
    _check_space(state, op)
    if state.is_ket:
        return complex(np.vdot(state.data, op.matrix @ state.data))
    return complex(np.einsum("ij,ji->", state.data, op.matrix))


def variance(state: QuantumState, op: QOperator) -> float:
    """``<O^2> - <O>^2`` for Hermitian ``O``."""
    if not op.is_hermitian():
        raise AlgebraError("variance requires a Hermitian operator")
    mean = expectation(state, op).real
    sq = expectation(state, op @ op).real
    return float(sq - mean * mean)


def top_level_population(state_data: np.ndarray, space: HilbertSpec, levels: int = 2) -> float:
    """Largest population held in the top ``levels`` Fock levels of any bosonic factor."""
    if state_data.ndim == 1:
        probs = np.abs(state_data) ** 2
    else:
        probs = np.real(np.diagonal(state_data))
    worst = 0.0
    for idx in space.boson_indices():
        d = space.dims[idx]
        lev = space.factor_levels(idx)
        worst = max(worst, float(probs[lev >= d - levels].sum()))
    return worst
