"""Fixed-size matrix kernel and extended-real arithmetic.

Deformation gradients of a membrane are 3x2 matrices ``A = (A1 | A2)``; the
bulk density acts on 3x3 matrices ``F = (A | xi)`` obtained by appending a
third column. Everything here works on numpy arrays of shape ``(..., 3, 2)``
and ``(..., 3, 3)`` so callers can batch, plus two thin frozen wrappers
(:class:`Mat32`, :class:`Mat33`) for code that wants named columns.

Storage is column-major in the flat sense: a 3x2 matrix written as six
numbers is ``A11, A21, A31, A12, A22, A32``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class ContractError(ValueError):
    """Raised when an operation is called outside its precondition."""


class CertificateError(RuntimeError):
    """Raised when a numerical certificate (determinant floor, bound) fails."""


class ExtReal(float):
    """A float restricted to ``(-inf, +inf]`` with guarded multiplication.

    ``+inf`` absorbs addition and compares above every finite value (both
    inherited from IEEE floats). NaN and ``-inf`` are rejected, and the
    product ``inf * 0`` raises instead of silently producing NaN.
    """

    def __new__(cls, value=0.0):
        v = float(value)
        if math.isnan(v):
            raise ContractError("ExtReal cannot hold NaN")
        if v == -math.inf:
            raise ContractError("ExtReal has no -inf")
        return super().__new__(cls, v)

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self)

    def __add__(self, other):
        return ExtReal(float(self) + float(other))

    __radd__ = __add__

    def __mul__(self, other):
        o = float(other)
        if (math.isinf(self) and o == 0.0) or (math.isinf(o) and float(self) == 0.0):
            raise ContractError("inf * 0 is undefined for extended energies")
        return ExtReal(float(self) * o)

    __rmul__ = __mul__

    def __repr__(self):
        return "ExtReal(inf)" if math.isinf(self) else f"ExtReal({float(self)!r})"


INF = ExtReal(math.inf)


def _vec3(v, name="vector") -> np.ndarray:
    a = np.asarray(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ContractError(f"{name} must have 3 entries, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ContractError(f"{name} has non-finite entries")
    a = a.copy()
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Mat32:
    """3x2 matrix stored by columns ``c1``, ``c2``."""

    c1: np.ndarray
    c2: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "c1", _vec3(self.c1, "c1"))
        object.__setattr__(self, "c2", _vec3(self.c2, "c2"))

    @classmethod
    def from_array(cls, a) -> "Mat32":
        a = np.asarray(a, dtype=float)
        if a.shape != (3, 2):
            raise ContractError(f"expected a 3x2 array, got {a.shape}")
        return cls(a[:, 0], a[:, 1])

    @classmethod
    def from_flat(cls, values) -> "Mat32":
        """Build from ``A11, A21, A31, A12, A22, A32``."""
        v = np.asarray(values, dtype=float).reshape(-1)
        if v.size != 6:
            raise ContractError("a 3x2 matrix needs exactly 6 entries")
        return cls(v[:3], v[3:])

    @property
    def array(self) -> np.ndarray:
        return np.column_stack([self.c1, self.c2])

    def flat(self) -> tuple:
        return tuple(float(x) for x in np.concatenate([self.c1, self.c2]))

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)


@dataclass(frozen=True)
class Mat33:
    """3x3 matrix stored by columns ``f1``, ``f2``, ``f3``."""

    f1: np.ndarray
    f2: np.ndarray
    f3: np.ndarray

    def __post_init__(self):
        for name in ("f1", "f2", "f3"):
            object.__setattr__(self, name, _vec3(getattr(self, name), name))

    @classmethod
    def from_array(cls, a) -> "Mat33":
        a = np.asarray(a, dtype=float)
        if a.shape != (3, 3):
            raise ContractError(f"expected a 3x3 array, got {a.shape}")
        return cls(a[:, 0], a[:, 1], a[:, 2])

    @property
    def array(self) -> np.ndarray:
        return np.column_stack([self.f1, self.f2, self.f3])

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)


def as32(A) -> np.ndarray:
    """Coerce a Mat32 or array-like to a float array of shape (..., 3, 2)."""
    a = np.asarray(A, dtype=float)
    if a.shape[-2:] != (3, 2):
        raise ContractError(f"expected (..., 3, 2), got {a.shape}")
    return a


def as33(F) -> np.ndarray:
    a = np.asarray(F, dtype=float)
    if a.shape[-2:] != (3, 3):
        raise ContractError(f"expected (..., 3, 3), got {a.shape}")
    return a


def wedge_columns(A) -> np.ndarray:
    """Cross product of the two columns of a 3x2 matrix (batched)."""
    a = as32(A)
    return _cross(a[..., :, 0], a[..., :, 1])


def _cross(u, v):
    # explicit components: np.cross carries a lot of overhead for 3-vectors
    return np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )


def gram_det(A) -> np.ndarray | float:
    """``det(A^T A)`` computed from the 2x2 Gram matrix.

    Equal to ``|A1 x A2|**2`` by the Lagrange identity; the two are kept as
    separate formulas so tests can compare them.
    """
    a = as32(A)
    c1, c2 = a[..., :, 0], a[..., :, 1]
    g11 = np.einsum("...i,...i->...", c1, c1)
    g22 = np.einsum("...i,...i->...", c2, c2)
    g12 = np.einsum("...i,...i->...", c1, c2)
    out = np.maximum(g11 * g22 - g12 * g12, 0.0)
    return float(out) if out.ndim == 0 else out


def det3(F) -> np.ndarray | float:
    """3x3 determinant by cofactor expansion along the third column."""
    f = as33(F)
    u, v, x = f[..., :, 0], f[..., :, 1], f[..., :, 2]
    out = (
        x[..., 0] * (u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1])
        + x[..., 1] * (u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2])
        + x[..., 2] * (u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0])
    )
    return float(out) if out.ndim == 0 else out


def append_column(A, xi) -> np.ndarray:
    """``(A | xi)`` as a 3x3 array; broadcasts over leading axes."""
    a = as32(A)
    x = np.asarray(xi, dtype=float)
    shape = np.broadcast_shapes(a.shape[:-2], x.shape[:-1])
    a = np.broadcast_to(a, shape + (3, 2))
    x = np.broadcast_to(x, shape + (3,))
    return np.concatenate([a, x[..., :, None]], axis=-1)


def frob(M) -> np.ndarray | float:
    """Frobenius norm over the last two axes."""
    m = np.asarray(M, dtype=float)
    out = np.sqrt(np.einsum("...ij,...ij->...", m, m))
    return float(out) if out.ndim == 0 else out


def op_norm2(M) -> np.ndarray | float:
    """Spectral norm of 2x2 matrices (batched, closed form)."""
    m = np.asarray(M, dtype=float)
    a, b, c, d = m[..., 0, 0], m[..., 0, 1], m[..., 1, 0], m[..., 1, 1]
    s = a * a + b * b + c * c + d * d
    det = a * d - b * c
    out = np.sqrt(0.5 * (s + np.sqrt(np.maximum(s * s - 4 * det * det, 0.0))))
    return float(out) if out.ndim == 0 else out


def outer(b, a) -> np.ndarray:
    """Rank-one matrix ``b (x) a`` with ``b`` in R^3 and ``a`` in R^2 (batched)."""
    return np.asarray(b, dtype=float)[..., :, None] * np.asarray(a, dtype=float)[..., None, :]


def random_rotations(rng: np.random.Generator, n: int) -> np.ndarray:
    """``n`` uniformly distributed rotations in SO(3), shape (n, 3, 3)."""
    from scipy.spatial.transform import Rotation

    return Rotation.random(n, random_state=rng).as_matrix()
