"""Dense complex matrix toolkit for small spin systems.

Conventions used everywhere in the package:

* hbar = 1, so a Hamiltonian ``h`` applied for time ``t`` gives ``exp(-i h t)``.
* Single-spin basis: index 0 is spin up, index 1 is spin down, so
  ``sigma_z = diag(+1, -1)``.
* Tensor products put the first factor in the most significant index.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Optional

import numpy as np

from .errors import DimensionError, ValidationError

HERM_TOL = 1e-10
UNIT_TOL = 1e-10


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


def as_matrix(a) -> np.ndarray:
    """Return ``a`` as a finite 2-D complex array (operators unwrap to their matrix)."""
    arr = np.asarray(getattr(a, "matrix", a), dtype=complex)
    if arr.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("matrix has non-finite entries")
    return arr


def _require_square(a: np.ndarray) -> int:
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a.shape[0]


@dataclass(frozen=True)
class HermitianOperator:
    """An N x N Hermitian matrix with an optional label."""

    matrix: np.ndarray
    label: Optional[str] = None
    tol: float = field(default=HERM_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        _require_square(m)
        err = np.max(np.abs(m - m.conj().T), initial=0.0)
        if err > self.tol:
            raise ValidationError(f"operator is not Hermitian (max |A - A^dag| = {err:.3e})")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def scaled(self, c: float) -> "HermitianOperator":
        return HermitianOperator(c * self.matrix, self.label)


@dataclass(frozen=True)
class UnitaryOperator:
    """An N x N unitary matrix."""

    matrix: np.ndarray
    tol: float = field(default=UNIT_TOL, repr=False, compare=False)

    def __post_init__(self):
        m = as_matrix(self.matrix)
        n = _require_square(m)
        err = np.max(np.abs(m.conj().T @ m - np.eye(n)), initial=0.0)
        if err > self.tol:
            raise ValidationError(f"operator is not unitary (max |U^dag U - I| = {err:.3e})")
        object.__setattr__(self, "matrix", _frozen(m))

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.matrix, dtype=dtype)

    def __matmul__(self, other: "UnitaryOperator") -> "UnitaryOperator":
        return UnitaryOperator(self.matrix @ as_matrix(other))

    def dagger(self) -> "UnitaryOperator":
        return UnitaryOperator(self.matrix.conj().T)


@dataclass(frozen=True)
class TensorSpace:
    """Ordered factorization of a Hilbert space into subsystems."""

    factor_dims: tuple

    def __post_init__(self):
        dims = tuple(int(d) for d in self.factor_dims)
        if not dims:
            raise ValidationError("a tensor space needs at least one factor")
        if any(d < 2 for d in dims):
            raise ValidationError(f"every factor must have dimension >= 2, got {dims}")
        object.__setattr__(self, "factor_dims", dims)

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    @property
    def n_factors(self) -> int:
        return len(self.factor_dims)

    def check_indices(self, indices: Iterable[int]) -> tuple:
        idx = tuple(int(i) for i in indices)
        if len(set(idx)) != len(idx):
            raise DimensionError(f"repeated subsystem index in {idx}")
        for i in idx:
            if not 0 <= i < self.n_factors:
                raise DimensionError(f"subsystem index {i} out of range for {self.factor_dims}")
        return idx

    def sub_dim(self, indices: Iterable[int]) -> int:
        return int(np.prod([self.factor_dims[i] for i in indices], dtype=int))


def qubits(n: int) -> TensorSpace:
    return TensorSpace((2,) * n)


_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def pauli(axis: str) -> HermitianOperator:
    try:
        m = _PAULI[axis.lower()]
    except KeyError:
        raise ValueError(f"unknown Pauli axis {axis!r}; use 'x', 'y' or 'z'") from None
    return HermitianOperator(m, label=f"sigma_{axis.lower()}")


def identity(n: int) -> HermitianOperator:
    return HermitianOperator(np.eye(n), label=f"I_{n}")


def kron(a, b, *more) -> np.ndarray:
    """Kronecker product, first argument most significant."""
    return reduce(lambda x, y: np.kron(x, as_matrix(y)), (b, *more), as_matrix(a))


def embed(op, space: TensorSpace, position) -> np.ndarray:
    """Lift ``op`` to the full space.

    ``position`` is a single factor index or an ordered sequence of them; in the
    latter case ``op`` acts on the product of those factors, in the given order.
    """
    targets = (position,) if np.isscalar(position) else tuple(position)
    targets = space.check_indices(targets)
    if not targets:
        raise DimensionError("embed needs at least one target factor")
    m = as_matrix(op)
    d_t = space.sub_dim(targets)
    if m.shape != (d_t, d_t):
        raise DimensionError(
            f"operator shape {m.shape} does not match factors {targets} of {space.factor_dims}"
        )
    rest = [k for k in range(space.n_factors) if k not in targets]
    full = np.kron(m, np.eye(space.sub_dim(rest)))
    order = list(targets) + rest
    if order == list(range(space.n_factors)):
        return full
    dims = space.factor_dims
    n = space.n_factors
    shaped = [dims[k] for k in order]
    t = full.reshape(shaped + shaped)
    inv = np.argsort(order)
    t = t.transpose(list(inv) + [n + i for i in inv])
    return t.reshape(space.total_dim, space.total_dim)


def commutator(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape or a.shape[0] != a.shape[1]:
        raise DimensionError(f"commutator needs equal square shapes, got {a.shape} and {b.shape}")
    return a @ b - b @ a


def hs_inner(a, b) -> complex:
    """Hilbert-Schmidt inner product ``tr(a^dag b)``."""
    a, b = as_matrix(a), as_matrix(b)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch {a.shape} vs {b.shape}")
    return complex(np.vdot(a.ravel(), b.ravel()))


def hs_norm(a) -> float:
    return float(np.linalg.norm(as_matrix(a)))


def traceless_part(a) -> np.ndarray:
    m = as_matrix(a)
    n = _require_square(m)
    return m - np.trace(m) / n * np.eye(n)


def expm_hermitian(h, t: float) -> UnitaryOperator:
    """``exp(-i h t)`` through the spectral decomposition of ``h``."""
    if not isinstance(h, HermitianOperator):
        h = HermitianOperator(h)
    try:
        w, v = np.linalg.eigh(h.matrix)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError(f"eigendecomposition failed: {exc}") from exc
    return UnitaryOperator((v * np.exp(-1j * w * t)) @ v.conj().T)


def partial_trace(rho, space: TensorSpace, keep: Iterable[int]) -> np.ndarray:
    """Reduce ``rho`` to the factors in ``keep`` (returned in ascending factor order)."""
    m = as_matrix(rho)
    if m.shape != (space.total_dim, space.total_dim):
        raise DimensionError(f"rho shape {m.shape} does not match space {space.factor_dims}")
    keep = sorted(space.check_indices(keep))
    if not keep:
        raise DimensionError("keep set must name at least one factor")
    dims = list(space.factor_dims)
    t = m.reshape(dims + dims)
    n = len(dims)
    for k in reversed(range(len(space.factor_dims))):
        if k in keep:
            continue
        t = np.trace(t, axis1=k, axis2=k + n)
        n -= 1
    d = space.sub_dim(keep)
    return t.reshape(d, d)


def is_scalar_multiple_of_identity(a, rel_tol: float = 1e-9) -> bool:
    """True when the traceless part is negligible relative to the operator norm."""
    m = as_matrix(a)
    scale = np.linalg.norm(m, 2)
    if scale == 0.0:
        return True
    return np.linalg.norm(traceless_part(m)) <= rel_tol * scale


def matrix_to_json(a) -> dict:
    m = as_matrix(a)
    return {
        "dim_rows": int(m.shape[0]),
        "dim_cols": int(m.shape[1]),
        "entries": [[float(z.real), float(z.imag)] for z in m.ravel()],
    }


def matrix_from_json(obj: dict) -> np.ndarray:
    try:
        rows, cols = int(obj["dim_rows"]), int(obj["dim_cols"])
        entries = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"matrix object missing field: {exc}") from None
    if rows < 1 or cols < 1:
        raise ValidationError("matrix dimensions must be positive")
    if len(entries) != rows * cols:
        raise ValidationError(f"expected {rows * cols} entries, got {len(entries)}")
    try:
        vals = [complex(float(re), float(im)) for re, im in entries]
    except (TypeError, ValueError):
        raise ValidationError("matrix entries must be [re, im] pairs") from None
    return as_matrix(np.array(vals, dtype=complex).reshape(rows, cols))


def random_hermitian(n: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return q * (d / np.abs(d))


__all__ = [
    "HERM_TOL",
    "UNIT_TOL",
    "HermitianOperator",
    "UnitaryOperator",
    "TensorSpace",
    "qubits",
    "pauli",
    "identity",
    "kron",
    "embed",
    "commutator",
    "hs_inner",
    "hs_norm",
    "traceless_part",
    "expm_hermitian",
    "partial_trace",
    "is_scalar_multiple_of_identity",
    "matrix_to_json",
    "matrix_from_json",
    "random_hermitian",
    "random_unitary",
]
