import numpy as np
import pytest

from konmf.data import DataMatrix
from konmf.errors import ShapeError, ValidationError
from konmf.graph import (KernelSpec, build_graph_set, build_kernel, scaled_kernel_ncut,
                         unit_degree_graph)


def test_kernel_spec_validation():
    with pytest.raises(ValidationError):
        KernelSpec.gaussian(0.0)
    with pytest.raises(ValidationError):
        KernelSpec.gaussian(-1.0)
    with pytest.raises(ValidationError):
        KernelSpec("poly", 1.0)
    assert KernelSpec.linear().sigma is None


def test_gaussian_kernel_values(rng):
    x = np.array([[0.0, 1.0], [0.0, 0.0]])
    k = build_kernel(x, KernelSpec.gaussian(1.0))
    assert k[0, 1] == pytest.approx(np.exp(-1.0), abs=1e-12)
    assert k[0, 1] == pytest.approx(0.367879, abs=1e-6)
    # sigma squared, not 2 sigma squared
    k2 = build_kernel(x, KernelSpec.gaussian(2.0))
    assert k2[0, 1] == pytest.approx(np.exp(-0.25))

    x = rng.standard_normal((3, 15))
    k = build_kernel(DataMatrix(x), KernelSpec.gaussian(0.7))
    assert np.array_equal(np.diag(k), np.ones(15))
    assert np.allclose(k, k.T, atol=1e-10)
    assert np.all((k > 0) & (k <= 1))
    oracle = np.array([[np.exp(-np.sum((x[:, i] - x[:, j]) ** 2) / 0.49) for j in range(15)] for i in range(15)])
    assert np.allclose(k, oracle, rtol=1e-12, atol=1e-15)


def test_gaussian_kernel_monotone_in_distance(rng):
    x = rng.standard_normal((2, 20))
    k = build_kernel(x, KernelSpec.gaussian(1.3))
    d = np.sum((x[:, :, None] - x[:, None, :]) ** 2, axis=0)
    iu = np.triu_indices(20, 1)
    order = np.argsort(d[iu], kind="stable")
    assert np.all(np.diff(k[iu][order]) <= 1e-15)


def test_identical_points_identical_rows():
    x = np.array([[0.0, 1.0, 0.0, 2.0], [0.5, 1.0, 0.5, -1.0]])
    k = build_kernel(x, KernelSpec.gaussian(1.0))
    assert np.array_equal(k[0], k[2])


def test_linear_kernel():
    assert np.array_equal(build_kernel(np.eye(2), KernelSpec.linear()), np.eye(2))
    x = np.array([[1.0, 2.0, 0.0], [3.0, 0.5, 1.0]])
    assert np.allclose(build_kernel(x, KernelSpec.linear()), x.T @ x)
    with pytest.raises(ValidationError, match="non-negative"):
        build_kernel(np.array([[1.0, -1.0]]), KernelSpec.linear())
    with pytest.raises(ValidationError):
        build_kernel(np.ones((3, 1)), KernelSpec.gaussian(1.0))


def test_graph_set_complete_two_graph():
    g = build_graph_set(np.ones((2, 2)))
    assert np.array_equal(g.degree, [2, 2])
    assert np.array_equal(g.laplacian, [[1, -1], [-1, 1]])
    assert np.allclose(g.laplacian_sym, [[0.5, -0.5], [-0.5, 0.5]], atol=1e-15)


def test_graph_set_invariants(rng):
    x = rng.standard_normal((4, 25))
    a = build_kernel(x, KernelSpec.gaussian(1.5))
    g = build_graph_set(a)
    assert np.allclose(g.degree, a.sum(axis=1), atol=1e-10)
    assert np.allclose(g.laplacian.sum(axis=1), 0, atol=1e-8)
    assert np.allclose(np.diag(g.laplacian_sym), 1 - np.diag(a) / g.degree, atol=1e-10)
    for _ in range(20):
        v = rng.standard_normal(25)
        assert v @ g.laplacian @ v >= -1e-8


def test_graph_set_rejects_bad_affinity():
    with pytest.raises(ValidationError, match="symmetric"):
        build_graph_set(np.array([[1.0, 0.5], [0.2, 1.0]]))
    with pytest.raises(ValidationError, match="negative"):
        build_graph_set(np.array([[1.0, -0.5], [-0.5, 1.0]]))
    with pytest.raises(ValidationError, match="degenerate"):
        build_graph_set(np.array([[1.0, 0.0], [0.0, 0.0]]))
    with pytest.raises(ShapeError):
        build_graph_set(np.ones((2, 3)))


def test_scaled_kernel_ncut():
    k = np.ones((2, 2))
    g = build_graph_set(np.array([[3.0, 1.0], [1.0, 0.0]]))
    assert np.array_equal(g.degree, [4.0, 1.0])
    assert np.allclose(scaled_kernel_ncut(k, g), [[0.5, 1.0], [0.5, 1.0]])
    u = unit_degree_graph(k)
    assert np.array_equal(scaled_kernel_ncut(k, u), k)
    with pytest.raises(ShapeError):
        scaled_kernel_ncut(np.ones((3, 3)), g)


def test_scaled_kernel_column_norms(rng):
    a = build_kernel(rng.random((3, 8)), KernelSpec.gaussian(1.0))
    g = build_graph_set(a)
    s = scaled_kernel_ncut(a, g)
    assert np.allclose(np.linalg.norm(s, axis=0), np.linalg.norm(a, axis=0) / np.sqrt(g.degree))
