"""Dense float64 array substrate.

Every numeric value in the toolkit lives in a rank-1/2/3 row-major
(C-contiguous) ``numpy.ndarray`` of float64. The helpers here are the only
sanctioned constructors and the elementwise/matrix primitives the layers
build on. All operations are pure: inputs are never mutated and outputs are
freshly allocated.
"""

import numpy as np

from .errors import ConfigError, NumericError, ShapeError


def tensor(values) -> np.ndarray:
    """Coerce ``values`` to a validated rank-1/2/3 float64 array."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim < 1 or arr.ndim > 3:
        raise ShapeError(f"tensors are rank 1-3, got rank {arr.ndim}")
    if arr.size == 0:
        raise ShapeError(f"tensor extents must be positive, got shape {arr.shape}")
    ensure_finite(arr, "tensor")
    return np.ascontiguousarray(arr)


def ensure_finite(arr: np.ndarray, context: str) -> np.ndarray:
    if not np.isfinite(arr).all():
        raise NumericError(f"{context}: result contains non-finite values")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of two rank-2 tensors; c[i,j] = sum_p a[i,p]*b[p,j]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} x {b.shape}")
    return ensure_finite(a @ b, "matmul")


def sigmoid(x):
    # tanh form is overflow-free and keeps sigmoid(0) == 0.5 exact
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(x, dtype=np.float64)))


def tanh(x):
    return np.tanh(np.asarray(x, dtype=np.float64))


def identity(x):
    return np.array(x, dtype=np.float64, copy=True)


_UNARY = {"sigmoid": sigmoid, "tanh": tanh, "identity": identity}


def map_unary(x: np.ndarray, fn: str) -> np.ndarray:
    """Apply ``fn`` (one of sigmoid/tanh/identity) elementwise, shape preserved."""
    if fn not in _UNARY:
        raise ConfigError(f"unknown unary function {fn!r}, expected one of {sorted(_UNARY)}")
    return ensure_finite(_UNARY[fn](x), f"map_unary({fn})")


def reduce(x: np.ndarray, op: str, axis: int = 0, with_argmax: bool = False):
    """Reduce ``x`` along ``axis`` with sum/mean/max.

    For ``op='max'`` with ``with_argmax=True`` returns ``(values, indices)``
    where indices are the positions of the first maximum along the axis.
    """
    x = np.asarray(x, dtype=np.float64)
    if not isinstance(axis, (int, np.integer)) or axis < 0 or axis >= x.ndim:
        raise ShapeError(f"axis {axis} out of range for rank-{x.ndim} tensor")
    if op == "sum":
        out = x.sum(axis=axis)
    elif op == "mean":
        out = x.mean(axis=axis)
    elif op == "max":
        out = x.max(axis=axis)
        if with_argmax:
            return ensure_finite(out, "reduce(max)"), x.argmax(axis=axis)
    else:
        raise ConfigError(f"unknown reduction {op!r}, expected sum|mean|max")
    return ensure_finite(out, f"reduce({op})")
