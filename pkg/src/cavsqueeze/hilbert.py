"""Composite Hilbert space: one multilevel atom with two bosonic field modes.

Basis ordering is row-major over (atom, mode 1, mode 2): the flat index of
|a, n1, n2> is (a * n1_trunc + n1) * n2_trunc + n2.  A factor of size 1 is
trivial, so atom_levels=1 describes a field-only space and a traced-out
field mode collapses to size 1 rather than disappearing.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np
import scipy.linalg

ATOM_LABELS = ("g", "h", "e")
FACTOR_NAMES = ("atom", "field1", "field2")

HERMITICITY_TOL = 1e-10
TRACE_TOL = 1e-8
EIGENVALUE_FLOOR = -1e-8


@dataclass(frozen=True)
class SpaceDescriptor:
    """Dimensions of the composite space.

    atom_levels counts internal atomic states (1 means no atom factor,
    2 means ground doublet g/h, 3 adds the excited state e).  n1_trunc and
    n2_trunc are the Fock-space dimensions of the two field modes, holding
    photon numbers 0 .. n_trunc - 1.
    """

    atom_levels: int
    n1_trunc: int
    n2_trunc: int

    def __post_init__(self):
        for name in ("atom_levels", "n1_trunc", "n2_trunc"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.atom_levels > len(ATOM_LABELS):
            raise ValueError(
                f"atom_levels must be at most {len(ATOM_LABELS)}, got {self.atom_levels}"
            )

    @property
    def dim(self) -> int:
        return self.atom_levels * self.n1_trunc * self.n2_trunc

    @property
    def shape(self) -> tuple:
        return (self.atom_levels, self.n1_trunc, self.n2_trunc)

    def atom_index(self, atom: Union[int, str]) -> int:
        """Resolve an atomic level given as index or as one of 'g', 'h', 'e'."""
        if isinstance(atom, str):
            if atom not in ATOM_LABELS:
                raise ValueError(f"unknown atom label {atom!r}, expected one of {ATOM_LABELS}")
            idx = ATOM_LABELS.index(atom)
        else:
            idx = int(atom)
        if not 0 <= idx < self.atom_levels:
            raise ValueError(f"atom level {atom!r} out of range for {self.atom_levels} levels")
        return idx

    def index(self, atom: Union[int, str], n1: int, n2: int) -> int:
        """Flat basis index of |atom, n1, n2>."""
        a = self.atom_index(atom)
        if not 0 <= n1 < self.n1_trunc:
            raise ValueError(f"n1={n1} out of range for truncation {self.n1_trunc}")
        if not 0 <= n2 < self.n2_trunc:
            raise ValueError(f"n2={n2} out of range for truncation {self.n2_trunc}")
        return (a * self.n1_trunc + n1) * self.n2_trunc + n2


def _frozen_matrix(matrix, dim: int) -> np.ndarray:
    m = np.array(matrix, dtype=complex)
    if m.shape != (dim, dim):
        raise ValueError(f"matrix shape {m.shape} does not match space dimension {dim}")
    m.setflags(write=False)
    return m


def _space_payload(space: SpaceDescriptor, matrix: np.ndarray) -> dict:
    return {
        "space": [space.atom_levels, space.n1_trunc, space.n2_trunc],
        "re": np.real(matrix).ravel().tolist(),
        "im": np.imag(matrix).ravel().tolist(),
    }


def _matrix_from_payload(data: dict) -> tuple:
    space = SpaceDescriptor(*(int(v) for v in data["space"]))
    dim = space.dim
    re = np.asarray(data["re"], dtype=float).reshape(dim, dim)
    im = np.asarray(data["im"], dtype=float).reshape(dim, dim)
    return space, re + 1j * im


@dataclass(frozen=True)
class Operator:
    """A linear operator on a composite space.  The matrix is read-only."""

    space: SpaceDescriptor
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _frozen_matrix(self.matrix, self.space.dim))

    def dagger(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def _check_space(self, other: "Operator"):
        if self.space != other.space:
            raise ValueError("operators live on different spaces")

    def __add__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self) -> "Operator":
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar) -> "Operator":
        return Operator(self.space, self.matrix * complex(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "Operator") -> "Operator":
        self._check_space(other)
        return Operator(self.space, self.matrix @ other.matrix)

    def to_json(self) -> dict:
        return _space_payload(self.space, self.matrix)

    @classmethod
    def from_json(cls, data: dict) -> "Operator":
        space, matrix = _matrix_from_payload(data)
        return cls(space, matrix)


@dataclass(frozen=True)
class DensityMatrix:
    """A validated density matrix: hermitian, unit trace, positive within tolerance."""

    space: SpaceDescriptor
    matrix: np.ndarray

    def __post_init__(self):
        m = _frozen_matrix(self.matrix, self.space.dim)
        herm_defect = np.max(np.abs(m - m.conj().T))
        if herm_defect > HERMITICITY_TOL:
            raise ValueError(f"density matrix is not hermitian (defect {herm_defect:.3e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > TRACE_TOL:
            raise ValueError(f"density matrix trace {tr!r} is not 1")
        lowest = float(np.linalg.eigvalsh(m)[0])
        if lowest < EIGENVALUE_FLOOR:
            raise ValueError(f"density matrix has negative eigenvalue {lowest:.3e}")
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_state_vector(cls, space: SpaceDescriptor, psi: np.ndarray) -> "DensityMatrix":
        v = np.asarray(psi, dtype=complex).ravel()
        if v.size != space.dim:
            raise ValueError(f"state vector length {v.size} does not match dimension {space.dim}")
        return cls(space, np.outer(v, v.conj()))

    def to_json(self) -> dict:
        return _space_payload(self.space, self.matrix)

    @classmethod
    def from_json(cls, data: dict) -> "DensityMatrix":
        space, matrix = _matrix_from_payload(data)
        return cls(space, matrix)


def _single_mode_lowering(n_trunc: int) -> np.ndarray:
    a = np.zeros((n_trunc, n_trunc), dtype=complex)
    for n in range(1, n_trunc):
        a[n - 1, n] = np.sqrt(n)
    return a


def _embed(atom_block, mode1_block, mode2_block) -> np.ndarray:
    return np.kron(np.kron(atom_block, mode1_block), mode2_block)


def annihilation_op(space: SpaceDescriptor, mode: int) -> Operator:
    """Photon annihilation operator for mode 1 or mode 2, embedded in the full space."""
    if mode == 1:
        m = _embed(
            np.eye(space.atom_levels),
            _single_mode_lowering(space.n1_trunc),
            np.eye(space.n2_trunc),
        )
    elif mode == 2:
        m = _embed(
            np.eye(space.atom_levels),
            np.eye(space.n1_trunc),
            _single_mode_lowering(space.n2_trunc),
        )
    else:
        raise ValueError(f"mode must be 1 or 2, got {mode!r}")
    return Operator(space, m)


def number_op(space: SpaceDescriptor, mode: int) -> Operator:
    a = annihilation_op(space, mode)
    return a.dagger() @ a


def atom_transition_op(space: SpaceDescriptor, upper: Union[int, str], lower: Union[int, str]) -> Operator:
    """The operator |upper><lower| on the atom, identity on both field modes.

    Equal labels give an atomic population projector.
    """
    iu = space.atom_index(upper)
    il = space.atom_index(lower)
    block = np.zeros((space.atom_levels, space.atom_levels), dtype=complex)
    block[iu, il] = 1.0
    m = _embed(block, np.eye(space.n1_trunc), np.eye(space.n2_trunc))
    return Operator(space, m)


def basis_state(space: SpaceDescriptor, atom: Union[int, str], n1: int, n2: int) -> np.ndarray:
    """Unit vector |atom, n1, n2> as a flat complex array."""
    psi = np.zeros(space.dim, dtype=complex)
    psi[space.index(atom, n1, n2)] = 1.0
    return psi


def identity(space: SpaceDescriptor) -> Operator:
    return Operator(space, np.eye(space.dim, dtype=complex))


def expectation(op, state) -> complex:
    """<op> in the given state.

    Accepts an Operator or a raw matrix; the state may be a vector, a
    DensityMatrix, or a raw square matrix.
    """
    m = op.matrix if isinstance(op, Operator) else np.asarray(op, dtype=complex)
    if isinstance(state, DensityMatrix):
        return complex(np.einsum("ij,ji->", m, state.matrix))
    s = np.asarray(state, dtype=complex)
    if s.ndim == 1:
        return complex(np.vdot(s, m @ s))
    if s.ndim == 2 and s.shape[0] == s.shape[1]:
        return complex(np.einsum("ij,ji->", m, s))
    raise ValueError(f"state has unsupported shape {s.shape}")


def partial_trace(state: DensityMatrix, keep: Sequence[str]) -> DensityMatrix:
    """Trace out the factors not named in keep.

    keep lists factor names from ('atom', 'field1', 'field2').  Traced-out
    factors collapse to size 1 in the resulting space descriptor, so basis
    ordering of the kept factors is preserved.
    """
    keep = tuple(keep)
    unknown = set(keep) - set(FACTOR_NAMES)
    if unknown:
        raise ValueError(f"unknown factors {sorted(unknown)}, expected names from {FACTOR_NAMES}")
    if not keep:
        raise ValueError("keep must name at least one factor")

    space = state.space
    sizes = space.shape
    rho = state.matrix.reshape(sizes + sizes)
    # Trace axes in reverse so earlier axis numbers stay valid.
    for pos in (2, 1, 0):
        if FACTOR_NAMES[pos] not in keep:
            rho = np.trace(rho, axis1=pos, axis2=pos + rho.ndim // 2)
            rho = np.expand_dims(np.expand_dims(rho, pos), pos + rho.ndim // 2 + 1)
    new_sizes = tuple(s if name in keep else 1 for s, name in zip(sizes, FACTOR_NAMES))
    new_space = SpaceDescriptor(*new_sizes)
    return DensityMatrix(new_space, rho.reshape(new_space.dim, new_space.dim))


def matrix_exponential(op):
    """exp(M) of an Operator (returning an Operator) or a raw matrix."""
    if isinstance(op, Operator):
        return Operator(op.space, scipy.linalg.expm(op.matrix))
    return scipy.linalg.expm(np.asarray(op, dtype=complex))
