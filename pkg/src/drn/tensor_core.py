"""
Dense order-3 tensor algebra.

Storage convention: a tensor of dims (d1, d2, d3) keeps its entries in a
C-ordered float64 buffer, i1 slowest and i3 fastest, so element (i1, i2, i3)
sits at offset (i1*d2 + i2)*d3 + i3. Under this convention

    vec(t x1 A x2 B x3 C) = (A kron B kron C) vec(t)

holds with the factors in natural order. Mode-n matricization puts index
i_n on the rows; the columns enumerate the remaining two indices in
ascending mode order with the later mode varying fastest.

Matrices are plain 2-D float64 ndarrays.
"""

from __future__ import annotations

from typing import Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from drn.errors import ArgumentError

Dims = Tuple[int, int, int]

MODES = (1, 2, 3)
MAX_KRON_ELEMENTS = 1 << 28


class Tensor3:
    """Immutable dense order-3 tensor."""

    __slots__ = ("_data",)

    def __init__(self, data: ArrayLike):
        array = np.array(data, dtype=np.float64, order="C", copy=True)
        if array.ndim != 3 or 0 in array.shape:
            raise ArgumentError(f"expected a non-empty order-3 array, got shape {array.shape}")
        array.setflags(write=False)
        self._data = array

    @classmethod
    def from_buffer(cls, dims: Sequence[int], buffer: ArrayLike) -> Tensor3:
        dims = _check_dims(dims)
        flat = np.asarray(buffer, dtype=np.float64).ravel()
        if flat.size != dims[0] * dims[1] * dims[2]:
            raise ArgumentError(f"buffer of length {flat.size} does not fit dims {dims}")
        return cls(flat.reshape(dims))

    @classmethod
    def zeros(cls, dims: Sequence[int]) -> Tensor3:
        return cls(np.zeros(_check_dims(dims)))

    @property
    def dims(self) -> Dims:
        return self._data.shape

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def data(self) -> NDArray[np.float64]:
        """Read-only (d1, d2, d3) view."""
        return self._data

    @property
    def buffer(self) -> NDArray[np.float64]:
        """Read-only flat view in storage order."""
        return self._data.reshape(-1)

    def __add__(self, other: Tensor3) -> Tensor3:
        _check_same_dims(self, other)
        return Tensor3(self._data + other._data)

    def __sub__(self, other: Tensor3) -> Tensor3:
        _check_same_dims(self, other)
        return Tensor3(self._data - other._data)

    def __neg__(self) -> Tensor3:
        return Tensor3(-self._data)

    def __mul__(self, scalar: float) -> Tensor3:
        return Tensor3(self._data * float(scalar))

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Tensor3):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.dims, self._data.tobytes()))

    def __repr__(self) -> str:
        return f"Tensor3(dims={self.dims})"


def _check_dims(dims: Sequence[int]) -> Dims:
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3 or any(d < 1 for d in dims):
        raise ArgumentError(f"dims must be three positive integers, got {dims}")
    return dims


def _check_mode(mode: int) -> int:
    if mode not in MODES:
        raise ArgumentError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


def _check_same_dims(a: Tensor3, b: Tensor3) -> None:
    if a.dims != b.dims:
        raise ArgumentError(f"dimension mismatch: {a.dims} vs {b.dims}")


def unfold_array(array: NDArray[np.float64], axis: int) -> NDArray[np.float64]:
    """Matricize an ndarray of any order along `axis` (0-based), same column order as `matricize`."""
    return np.moveaxis(array, axis, 0).reshape(array.shape[axis], -1)


def fold_array(matrix: NDArray[np.float64], axis: int, shape: Sequence[int]) -> NDArray[np.float64]:
    """Inverse of `unfold_array` for a target `shape`."""
    rest = [d for i, d in enumerate(shape) if i != axis]
    return np.moveaxis(matrix.reshape([shape[axis]] + rest), 0, axis)


def matricize(t: Tensor3, mode: int) -> NDArray[np.float64]:
    """Mode-`mode` unfolding: a d_mode x (d / d_mode) matrix."""
    _check_mode(mode)
    return np.ascontiguousarray(unfold_array(t.data, mode - 1))


def fold(m: ArrayLike, mode: int, dims: Sequence[int]) -> Tensor3:
    _check_mode(mode)
    dims = _check_dims(dims)
    m = np.asarray(m, dtype=np.float64)
    expected = (dims[mode - 1], dims[0] * dims[1] * dims[2] // dims[mode - 1])
    if m.shape != expected:
        raise ArgumentError(f"matrix of shape {m.shape} cannot fold along mode {mode} into {dims}")
    return Tensor3(fold_array(m, mode - 1, dims))


def vectorize(t: Tensor3) -> NDArray[np.float64]:
    return t.buffer.copy()


def mode_product(t: Tensor3, m: ArrayLike, mode: int) -> Tensor3:
    """t x_mode m: replaces d_mode by m.rows."""
    _check_mode(mode)
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2 or m.shape[1] != t.dims[mode - 1]:
        raise ArgumentError(
            f"matrix of shape {m.shape} cannot multiply mode {mode} of a tensor with dims {t.dims}"
        )
    new_dims = list(t.dims)
    new_dims[mode - 1] = m.shape[0]
    return Tensor3(fold_array(m @ unfold_array(t.data, mode - 1), mode - 1, new_dims))


def kronecker(a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows * cols > MAX_KRON_ELEMENTS:
        raise ArgumentError(f"kronecker product of {a.shape} and {b.shape} is too large ({rows}x{cols})")
    return np.kron(a, b)
