"""Dense order-3 tensor arithmetic.

Matricization follows the column-major index map: element ``(i1, i2, i3)``
(1-based) of a ``d1 x d2 x d3`` tensor goes to row ``i_q`` and column
``1 + sum_{k != q} (i_k - 1) J_k`` of ``mat_q``, where ``J_k`` is the
product of the non-``q`` dimensions preceding ``k``. Data are kept in
Fortran order so that ``mat(t, 1)`` is a plain reshape.

All indexing in code is 0-based; the 1-based convention above is only used
to document the index map.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

__all__ = ["Tensor3", "mat", "unmat", "mode_mul", "frobenius_norm"]


class Tensor3:
    """Immutable dense ``d1 x d2 x d3`` real tensor.

    Args:
        data: Array-like with exactly three dimensions. It is copied to a
            read-only float64 Fortran-ordered array.
    """

    __slots__ = ("_data",)

    def __init__(self, data):
        arr = np.array(data, dtype=np.float64, order="F", copy=True)
        if arr.ndim != 3:
            raise ValueError(f"Tensor3 needs a 3-d array, got ndim={arr.ndim}")
        if 0 in arr.shape:
            raise ValueError(f"dimensions must be positive, got {arr.shape}")
        arr.setflags(write=False)
        self._data = arr

    @classmethod
    def from_slices(cls, slices: Sequence) -> "Tensor3":
        """Build from a sequence of frontal slices ``X[:, :, k]``."""
        return cls(np.stack([np.asarray(s, dtype=np.float64) for s in slices], axis=2))

    @classmethod
    def from_flat(cls, flat, dims: tuple[int, int, int]) -> "Tensor3":
        """Build from the column-major linear layout used internally."""
        flat = np.asarray(flat, dtype=np.float64).ravel()
        if flat.size != int(np.prod(dims)):
            raise ValueError(f"data length {flat.size} does not match dims {dims}")
        return cls(flat.reshape(dims, order="F"))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self._data.shape  # type: ignore[return-value]

    @property
    def data(self) -> np.ndarray:
        """Read-only view of the underlying array, shape ``dims``."""
        return self._data

    def flat(self) -> np.ndarray:
        """Column-major linear layout (length ``d1*d2*d3``)."""
        return self._data.ravel(order="F")

    def frontal(self, k: int) -> np.ndarray:
        """Frontal slice ``X[:, :, k]`` (0-based ``k``)."""
        return self._data[:, :, k]

    def __getitem__(self, idx):
        return self._data[idx]

    def __array__(self, dtype=None, copy=None):
        if dtype is None:
            return self._data
        return self._data.astype(dtype)

    def __eq__(self, other):
        if not isinstance(other, Tensor3):
            return NotImplemented
        return self.dims == other.dims and bool(np.array_equal(self._data, other._data))

    def __hash__(self):
        return hash((self.dims, self._data.tobytes()))

    def __repr__(self):
        return f"Tensor3(dims={self.dims})"


def _check_mode(q: int) -> int:
    if q not in (1, 2, 3):
        raise ValueError(f"mode index must be 1, 2 or 3, got {q!r}")
    return q - 1


def _as_array(t) -> np.ndarray:
    return t.data if isinstance(t, Tensor3) else np.asarray(t, dtype=np.float64)


def mat(t, q: int) -> np.ndarray:
    """Mode-``q`` matricization, a ``d_q x prod(d_k, k != q)`` matrix.

    The remaining modes are collapsed in their original order with the
    lower mode varying fastest.
    """
    ax = _check_mode(q)
    arr = _as_array(t)
    if arr.ndim != 3:
        raise ValueError("mat expects an order-3 tensor")
    return np.moveaxis(arr, ax, 0).reshape(arr.shape[ax], -1, order="F")


def unmat(m, q: int, dims: tuple[int, int, int]) -> Tensor3:
    """Inverse of :func:`mat`: fold a mode-``q`` matricization back."""
    ax = _check_mode(q)
    m = np.asarray(m, dtype=np.float64)
    dims = tuple(int(d) for d in dims)
    rest = [d for i, d in enumerate(dims) if i != ax]
    if m.shape != (dims[ax], rest[0] * rest[1]):
        raise ValueError(
            f"matrix of shape {m.shape} cannot be folded in mode {q} into {dims}"
        )
    arr = m.reshape((dims[ax], *rest), order="F")
    return Tensor3(np.moveaxis(arr, 0, ax))


def mode_mul(t, q: int, x) -> Tensor3:
    """Mode-``q`` product ``t x_q x``, i.e. ``mat_q(result) = x @ mat_q(t)``."""
    ax = _check_mode(q)
    arr = _as_array(t)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[1] != arr.shape[ax]:
        raise ValueError(
            f"matrix has {x.shape[1]} columns but mode {q} has length {arr.shape[ax]}"
        )
    out = np.tensordot(x, arr, axes=([1], [ax]))  # new mode first
    return Tensor3(np.moveaxis(out, 0, ax))


def frobenius_norm(t) -> float:
    return float(np.sqrt(np.sum(np.square(_as_array(t)))))
