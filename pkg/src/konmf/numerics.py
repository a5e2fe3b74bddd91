"""Dense matrix primitives shared by the solvers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64. The helpers
here add the shape checks and the guarded elementwise update used by every
multiplicative rule. All of them accept stacked inputs (``(..., r, c)``) so a
batch of restarts can be pushed through the same code as a single run.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError, ValidationError

DEFAULT_EPS = 1e-12


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a float64 array with at least two dimensions."""
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim < 2:
        raise ShapeError(f"{name} must be at least 2-D, got shape {arr.shape}")
    return arr


def is_nonnegative(a: np.ndarray) -> bool:
    return bool(np.all(np.asarray(a) >= 0))


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def trace_of_product(a, b):
    """Tr(a @ b) without forming the product.

    Uses Tr(ab) = sum_ij a_ij b_ji. Returns a scalar for 2-D inputs and an
    array of traces for stacked inputs.
    """
    a = as_matrix(a, "a")
    b = as_matrix(b, "b")
    if a.shape[-1] != b.shape[-2] or b.shape[-1] != a.shape[-2]:
        raise ShapeError(f"Tr(ab) undefined for shapes {a.shape} and {b.shape}")
    out = np.sum(a * np.swapaxes(b, -1, -2), axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def frobenius_norm_sq(a):
    a = as_matrix(a, "a")
    out = np.sum(a * a, axis=(-2, -1))
    return float(out) if out.ndim == 0 else out


def hadamard_update(target, numerator, denominator, eps: float = DEFAULT_EPS) -> np.ndarray:
    """Multiplicative step ``target * numerator / (denominator + eps)``.

    The result is non-negative whenever ``target`` and ``numerator`` are.
    """
    if eps <= 0:
        raise ValidationError(f"eps must be positive, got {eps}")
    target = np.asarray(target, dtype=np.float64)
    numerator = np.asarray(numerator, dtype=np.float64)
    denominator = np.asarray(denominator, dtype=np.float64)
    if not (target.shape == numerator.shape == denominator.shape):
        raise ShapeError(
            f"shape mismatch: target {target.shape}, numerator {numerator.shape}, "
            f"denominator {denominator.shape}"
        )
    return target * numerator / (denominator + eps)


def kernel_apply(k: np.ndarray, x: np.ndarray) -> np.ndarray:
    """``k @ x`` for a square ``k`` and a possibly stacked ``x`` of shape (..., n, c).

    Stacked operands are folded into one wide product so a batch of restarts
    costs a single GEMM call.
    """
    if x.ndim == 2:
        return k @ x
    lead = x.shape[:-2]
    n, c = x.shape[-2:]
    wide = np.moveaxis(x.reshape(-1, n, c), 0, 1).reshape(n, -1)
    out = (k @ wide).reshape(n, -1, c)
    return np.ascontiguousarray(np.moveaxis(out, 1, 0)).reshape(*lead, n, c)
