import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from sgcl.errors import InsufficientSamplesError, ShapeError
from sgcl.linalg import SparseCSR, cosine_similarity_matrix, covariance, spmm


def random_csr(rng: np.random.Generator, n_max: int = 32) -> SparseCSR:
    r = int(rng.integers(1, n_max + 1))
    c = int(rng.integers(1, n_max + 1))
    density = float(rng.uniform(0.0, 0.5))
    m = sp.random(r, c, density=density, random_state=np.random.RandomState(int(rng.integers(2**31))))
    return SparseCSR.from_scipy(m.tocsr())


class TestSparseCSR:
    def test_validate_accepts_well_formed(self):
        m = SparseCSR.from_dense([[1.0, 0.0], [0.0, 2.0]])
        m.validate()
        assert m.nnz == 2

    def test_validate_rejects_bad_row_ptr_length(self):
        with pytest.raises(ShapeError):
            SparseCSR(2, 2, [0, 1], [0], [1.0]).validate()

    def test_validate_rejects_decreasing_row_ptr(self):
        with pytest.raises(ShapeError):
            SparseCSR(2, 2, [0, 2, 1], [0, 1], [1.0, 1.0]).validate()

    def test_validate_rejects_column_out_of_range(self):
        with pytest.raises(ShapeError):
            SparseCSR(1, 2, [0, 1], [5], [1.0]).validate()

    def test_validate_rejects_unsorted_columns_within_row(self):
        with pytest.raises(ShapeError):
            SparseCSR(1, 3, [0, 2], [2, 0], [1.0, 1.0]).validate()

    def test_validate_rejects_duplicate_column_in_row(self):
        with pytest.raises(ShapeError):
            SparseCSR(1, 3, [0, 2], [1, 1], [1.0, 1.0]).validate()

    def test_nnz_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            SparseCSR(1, 3, [0, 1], [0, 1], [1.0, 1.0]).validate()

    def test_dense_round_trip(self):
        rng = np.random.default_rng(0)
        d = rng.normal(size=(7, 5))
        d[rng.random(size=d.shape) < 0.6] = 0.0
        m = SparseCSR.from_dense(d)
        m.validate()
        np.testing.assert_array_equal(m.to_dense(), d)

    def test_from_edges_sums_duplicates(self):
        m = SparseCSR.from_edges(2, 2, np.array([0, 0]), np.array([1, 1]), np.array([1.0, 2.0]))
        m.validate()
        assert m.to_dense()[0, 1] == 3.0

    def test_identity_and_empty(self):
        eye = SparseCSR.identity(4)
        eye.validate()
        np.testing.assert_array_equal(eye.to_dense(), np.eye(4))
        z = SparseCSR.empty(3, 5)
        z.validate()
        assert z.nnz == 0
        np.testing.assert_array_equal(z.to_dense(), np.zeros((3, 5)))


class TestSpmm:
    def test_empty_sparse_gives_zero(self):
        s = SparseCSR.empty(3, 4)
        b = np.arange(8.0).reshape(4, 2)
        np.testing.assert_array_equal(spmm(s, b), np.zeros((3, 2)))

    def test_identity_csr_is_noop(self):
        b = np.arange(12.0).reshape(4, 3)
        np.testing.assert_array_equal(spmm(SparseCSR.identity(4), b), b)

    def test_two_node_normalized_adjacency_example(self):
        s = SparseCSR.from_dense([[0.5, 0.5], [0.5, 0.5]])
        out = spmm(s, np.array([[2.0, 0.0], [0.0, 2.0]]))
        np.testing.assert_allclose(out, np.ones((2, 2)), rtol=0, atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            spmm(SparseCSR.identity(3), np.zeros((4, 2)))

    def test_matches_dense_matmul_on_100_random_matrices(self):
        rng = np.random.default_rng(42)
        for _ in range(100):
            s = random_csr(rng)
            b = rng.normal(size=(s.cols, int(rng.integers(1, 9))))
            dense = s.to_dense() @ b
            got = spmm(s, b)
            scale = max(1.0, float(np.abs(dense).max()))
            assert np.abs(got - dense).max() / scale < 1e-12


class TestCosineSimilarityMatrix:
    def test_orthonormal_rows_give_identity(self):
        np.testing.assert_allclose(cosine_similarity_matrix(np.eye(3)), np.eye(3), atol=1e-15)

    def test_duplicated_row_entry_is_one(self):
        m = np.array([[1.0, 2.0], [1.0, 2.0], [0.0, 1.0]])
        sim = cosine_similarity_matrix(m)
        assert sim[0, 1] == pytest.approx(1.0, abs=1e-12)

    def test_hand_value(self):
        sim = cosine_similarity_matrix(np.array([[1.0, 0.0], [1.0, 1.0]]))
        assert sim[0, 1] == pytest.approx(1.0 / np.sqrt(2.0), abs=1e-12)

    def test_zero_row_similarity_zero(self):
        sim = cosine_similarity_matrix(np.array([[0.0, 0.0], [1.0, 1.0]]))
        assert sim[0, 0] == 0.0
        assert sim[0, 1] == 0.0
        assert sim[1, 1] == 1.0

    def test_diagonal_exactly_one_for_nonzero_rows(self):
        rng = np.random.default_rng(7)
        m = rng.normal(size=(20, 6)) * 1e-4
        sim = cosine_similarity_matrix(m)
        np.testing.assert_array_equal(np.diagonal(sim), np.ones(20))

    def test_values_clipped_to_unit_interval(self):
        rng = np.random.default_rng(8)
        sim = cosine_similarity_matrix(rng.normal(size=(15, 3)))
        assert sim.max() <= 1.0 and sim.min() >= -1.0


class TestCovariance:
    def test_constant_rows_zero(self):
        m = np.tile([3.0, -1.0], (5, 1))
        np.testing.assert_allclose(covariance(m), np.zeros((2, 2)), atol=1e-15)

    def test_two_point_example(self):
        np.testing.assert_allclose(covariance(np.array([[1.0], [-1.0]])), [[2.0]])

    def test_identity_pair_example(self):
        got = covariance(np.array([[1.0, 0.0], [0.0, 1.0]]))
        np.testing.assert_allclose(got, [[0.5, -0.5], [-0.5, 0.5]])

    def test_single_row_rejected(self):
        with pytest.raises(InsufficientSamplesError):
            covariance(np.array([[1.0, 2.0]]))

    def test_matches_numpy_cov_oracle(self):
        rng = np.random.default_rng(3)
        m = rng.normal(size=(11, 4))
        np.testing.assert_allclose(covariance(m), np.cov(m, rowvar=False), atol=1e-12)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=2, max_value=12), st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=10_000))
    def test_symmetric_and_psd(self, n, f, seed):
        m = np.random.default_rng(seed).normal(size=(n, f))
        c = covariance(m)
        assert np.abs(c - c.T).max() < 1e-12
        assert np.linalg.eigvalsh(c).min() >= -1e-10
