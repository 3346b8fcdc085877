import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsanov import operators as ops
from qsanov.errors import DimensionGuardError, DimensionMismatchError, NotHermitianError, NotPSDError

from conftest import random_density, random_hermitian


def test_eig_scalar_operator_single_group():
    spec = ops.hermitian_eig(np.eye(2) / 2)
    assert spec.eigenvalues.tolist() == pytest.approx([0.5])
    assert np.allclose(spec.projections[0].matrix, np.eye(2))


def test_eig_diagonal_coordinate_projectors():
    spec = ops.hermitian_eig(np.diag([0.3, 0.7]))
    assert spec.eigenvalues == pytest.approx([0.7, 0.3])
    assert np.allclose(spec.projections[0].matrix, np.diag([0, 1]))
    assert np.allclose(spec.projections[1].matrix, np.diag([1, 0]))


def test_eig_reconstructs_seeded_matrix():
    h = random_hermitian(np.random.default_rng(42), 6)
    assert np.max(np.abs(ops.hermitian_eig(h).reconstruct() - h)) <= 1e-8


def test_eig_groups_tensor_power_degeneracy():
    spec = ops.hermitian_eig(ops.tensor_power(np.diag([0.75, 0.25]), 3))
    assert [p.rank for p in spec.projections] == [1, 3, 3, 1]


def test_eig_rejects_non_hermitian():
    with pytest.raises(NotHermitianError):
        ops.hermitian_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_eig_rejects_nonpositive_tolerance():
    with pytest.raises(ValueError):
        ops.hermitian_eig(np.eye(2), grouping_tol=0)


@settings(max_examples=60, deadline=None)
@given(d=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
def test_spectral_decomposition_invariants(d, seed):
    h = random_hermitian(np.random.default_rng(seed), d)
    spec = ops.hermitian_eig(h)
    mats = [p.matrix for p in spec.projections]
    assert np.max(np.abs(sum(mats) - np.eye(d))) <= 1e-9
    for i in range(len(mats)):
        for j in range(i + 1, len(mats)):
            assert np.max(np.abs(mats[i] @ mats[j])) <= 1e-9
    assert np.max(np.abs(spec.reconstruct() - h)) <= 1e-8
    assert np.all(np.diff(spec.eigenvalues) < 0)


def test_tensor_product_examples():
    assert np.allclose(ops.tensor_product(np.eye(2), np.eye(2)), np.eye(4))
    d = np.diag([0.75, 0.25])
    assert np.allclose(ops.tensor_product(d, d), np.diag([0.5625, 0.1875, 0.1875, 0.0625]))
    rng = np.random.default_rng(7)
    a, b = random_hermitian(rng, 3), random_hermitian(rng, 4)
    assert np.trace(ops.tensor_product(a, b)) == pytest.approx(np.trace(a) * np.trace(b))


def test_tensor_product_guard():
    with pytest.raises(DimensionGuardError, match="guard"):
        ops.tensor_product(np.eye(64), np.eye(128))


def test_tensor_power_examples():
    assert np.allclose(ops.tensor_power(np.eye(2) / 2, 3), np.eye(8) / 8)
    assert np.allclose(ops.tensor_power(np.diag([0.75, 0.25]), 2), np.diag([0.5625, 0.1875, 0.1875, 0.0625]))
    assert np.array_equal(ops.tensor_power(np.diag([0.75, 0.25]), 0), np.array([[1.0]]))
    with pytest.raises(DimensionGuardError):
        ops.tensor_power(np.eye(2) / 2, 13)


def test_partial_trace_of_product():
    rng = np.random.default_rng(3)
    a, b = random_density(rng, 2), random_density(rng, 3)
    ab = np.kron(a, b)
    assert np.allclose(ops.partial_trace(ab, [2, 3], [0]), a)
    assert np.allclose(ops.partial_trace(ab, [2, 3], [1]), b)


def test_support_projector_examples():
    assert np.allclose(ops.support_projector(np.diag([0.5, 0.5, 0.0])).matrix, np.diag([1, 1, 0]))
    assert ops.support_projector(np.zeros((3, 3))).rank == 0
    u = np.diag([1.0, 1.0, 0.0])
    v = np.array([1.0, 0.0, 1.0]) / np.sqrt(2)
    p = np.outer(v, v)
    assert np.allclose(ops.support_projector(u @ p @ u).matrix, np.diag([1, 0, 0]))


def test_support_projector_rejects_negative():
    with pytest.raises(NotPSDError):
        ops.support_projector(np.diag([0.5, -0.1]))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 12), seed=st.integers(0, 2**32 - 1))
def test_support_is_minimal_and_preserves(d, seed):
    rng = np.random.default_rng(seed)
    rank = int(rng.integers(1, d + 1))
    h = random_density(rng, d, rank)
    s = ops.support_projector(h)
    assert s.rank == rank
    assert np.max(np.abs(s.matrix @ h @ s.matrix - h)) <= 1e-8
    for lam, p in zip(ops.hermitian_eig(h).eigenvalues, ops.hermitian_eig(h).projections):
        if lam > ops.SUPPORT_TOL:
            assert np.max(np.abs(p.matrix @ s.matrix @ p.matrix - p.matrix)) <= 1e-8


def test_join_examples():
    e0 = ops.Projector(np.array([[1.0], [0.0]]))
    e1 = ops.Projector(np.array([[0.0], [1.0]]))
    assert np.allclose(ops.join_projectors([e0, e1]).matrix, np.eye(2))
    assert np.allclose(ops.join_projectors([e0, e0]).matrix, e0.matrix)
    a = ops.Projector(np.array([[1.0], [0.0], [0.0]]))
    b = ops.Projector(np.array([[1.0], [1.0], [0.0]]) / np.sqrt(2))
    assert ops.join_projectors([a, b]).rank == 2


def test_join_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        ops.join_projectors([ops.Projector.identity(2), ops.Projector.identity(3)])


def _random_projector(rng, d):
    k = int(rng.integers(0, d + 1))
    g = rng.normal(size=(d, k)) + 1j * rng.normal(size=(d, k))
    return ops.Projector.from_matrix(g @ np.linalg.pinv(g)) if k else ops.Projector.zero(d)


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 8), seed=st.integers(0, 2**32 - 1))
def test_join_lattice_laws(d, seed):
    rng = np.random.default_rng(seed)
    p, q, r = (_random_projector(rng, d) for _ in range(3))
    pq = ops.join_projectors([p, q])
    assert np.max(np.abs(pq.matrix @ pq.matrix - pq.matrix)) <= 1e-9
    assert np.max(np.abs(p.matrix @ pq.matrix @ p.matrix - p.matrix)) <= 1e-8
    assert np.max(np.abs(pq.matrix - ops.join_projectors([q, p]).matrix)) <= 1e-8
    left = ops.join_projectors([pq, r])
    right = ops.join_projectors([p, ops.join_projectors([q, r])])
    assert np.max(np.abs(left.matrix - right.matrix)) <= 1e-8


def test_expectation_examples():
    rho = np.diag([0.75, 0.25])
    assert ops.expectation(rho, np.eye(2)) == pytest.approx(1.0)
    e0 = ops.Projector(np.array([[1.0], [0.0]]))
    assert ops.expectation(rho, e0) == pytest.approx(0.75)
    v = np.array([1.0, 1.0]) / np.sqrt(2)
    assert ops.expectation(np.outer(v, v), e0) == pytest.approx(0.5)
    with pytest.raises(DimensionMismatchError):
        ops.expectation(rho, np.eye(3))


def test_density_validation():
    with pytest.raises(NotPSDError):
        ops.as_density(np.diag([1.2, -0.2]))
    with pytest.raises(NotPSDError):
        ops.as_density(np.diag([0.5, 0.4]))
    assert np.array_equal(ops.as_density(np.diag([1.0, -1e-12]) + np.diag([0.0, 1e-12])), np.diag([1.0, 0.0]))


def test_compression_estimate_trivial_cases():
    rng = np.random.default_rng(0)
    tau = random_density(rng, 4)
    one = ops.Projector.identity(4)
    chk = ops.compression_estimate_check(tau, one, one, one)
    assert chk.lhs1 == pytest.approx(1.0) and chk.rhs1 == pytest.approx(1.0)
    p = _random_projector(rng, 4)
    chk = ops.compression_estimate_check(tau, p, one, one)
    assert chk.lhs1 == pytest.approx(chk.rhs1, abs=1e-12)
    assert chk.rhs1 == pytest.approx(ops.expectation(tau, p), abs=1e-12)


def test_compression_estimate_flags_noncommuting_u():
    tau = np.diag([0.7, 0.3])
    v = np.array([1.0, 1.0]) / np.sqrt(2)
    u = ops.Projector(v[:, None])
    assert not ops.compression_estimate_check(tau, u, u, u).commutes


def test_matrix_csv_roundtrip(tmp_path):
    rng = np.random.default_rng(5)
    m = random_density(rng, 3)
    path = tmp_path / "m.csv"
    ops.write_matrix_csv(path, m)
    assert np.array_equal(ops.read_matrix_csv(path), m)
    real = np.diag([0.25, 0.75])
    ops.write_matrix_csv(path, real)
    back = ops.read_matrix_csv(path)
    assert back.dtype == float and np.array_equal(back, real)


def test_matrix_csv_rejects_garbage(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("1,0;x,0\n0,0;1,0\n")
    with pytest.raises(ValueError, match="malformed"):
        ops.read_matrix_csv(path)
