"""Kernels, affinity graphs, degrees and Laplacians."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.spatial.distance import cdist

from .data import DataMatrix
from .errors import ShapeError, ValidationError
from .numerics import DEFAULT_EPS


@dataclass(frozen=True)
class KernelSpec:
    kind: str = "gaussian"
    sigma: Optional[float] = 1.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "linear"):
            raise ValidationError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "gaussian":
            if self.sigma is None or not np.isfinite(self.sigma) or self.sigma <= 0:
                raise ValidationError(f"gaussian sigma must be > 0, got {self.sigma}")
        else:
            object.__setattr__(self, "sigma", None)

    @classmethod
    def gaussian(cls, sigma: float) -> "KernelSpec":
        return cls("gaussian", float(sigma))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear", None)


@dataclass(frozen=True)
class GraphSet:
    """Affinity A, degrees d_i = sum_j A_ij, L = D - A and D^-1/2 L D^-1/2."""

    affinity: np.ndarray
    degree: np.ndarray
    laplacian: np.ndarray
    laplacian_sym: np.ndarray

    @property
    def inv_sqrt_degree(self) -> np.ndarray:
        return 1.0 / np.sqrt(self.degree)


def _samples(x) -> np.ndarray:
    if isinstance(x, DataMatrix):
        return x.matrix
    return DataMatrix(x).matrix


def build_kernel(x, spec: KernelSpec) -> np.ndarray:
    """n x n Gram matrix of the columns of ``x``.

    Gaussian: exp(-||x_i - x_j||^2 / sigma^2), diagonal exactly 1.
    Linear: X^T X, only accepted for non-negative data.
    """
    arr = _samples(x)
    if arr.shape[1] < 2:
        raise ValidationError(f"need at least 2 samples, got {arr.shape[1]}")
    if spec.kind == "linear":
        if np.any(arr < 0):
            raise ValidationError("linear kernel requires non-negative data")
        k = arr.T @ arr
        return 0.5 * (k + k.T)
    cols = arr.T
    sq = cdist(cols, cols, metric="sqeuclidean")
    k = np.exp(-sq / (spec.sigma**2))
    np.fill_diagonal(k, 1.0)
    return k


def build_graph_set(a: np.ndarray, eps: float = DEFAULT_EPS) -> GraphSet:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeError(f"affinity must be square, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a))))
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * scale):
        raise ValidationError("affinity matrix is not symmetric")
    if np.any(a < 0):
        raise ValidationError("affinity matrix has negative entries")
    degree = a.sum(axis=1)
    if np.any(degree <= eps):
        bad = int(np.flatnonzero(degree <= eps)[0])
        raise ValidationError(f"degenerate graph: degree of node {bad} is {degree[bad]:g}")
    lap = np.diag(degree) - a
    s = 1.0 / np.sqrt(degree)
    lap_sym = s[:, None] * lap * s[None, :]
    return GraphSet(affinity=a, degree=degree, laplacian=lap, laplacian_sym=lap_sym)


def unit_degree_graph(a: np.ndarray) -> GraphSet:
    """Graph set with D forced to the identity (used to check that Ncut reduces to Rcut)."""
    a = np.asarray(a, dtype=np.float64)
    n = a.shape[0]
    ones = np.ones(n)
    lap = np.eye(n) - a
    return GraphSet(affinity=a, degree=ones, laplacian=lap, laplacian_sym=lap.copy())


def scaled_kernel_ncut(k: np.ndarray, g: GraphSet) -> np.ndarray:
    """K D^-1/2: column j of K divided by sqrt(d_j)."""
    k = np.asarray(k, dtype=np.float64)
    if k.shape != g.affinity.shape:
        raise ShapeError(f"kernel {k.shape} does not match graph {g.affinity.shape}")
    return k * g.inv_sqrt_degree[None, :]
