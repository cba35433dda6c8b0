import numpy as np
import pytest

import sgcl.autodiff as ad
from sgcl.autodiff import Tape, grad_check
from sgcl.errors import ContractError, NumericError, ShapeError
from sgcl.linalg import SparseCSR


def test_backward_of_sum_is_all_ones():
    tape = Tape()
    w = tape.leaf(np.arange(6.0).reshape(2, 3))
    grads = tape.backward(ad.sum_all(w))
    np.testing.assert_array_equal(grads[w], np.ones((2, 3)))


def test_backward_of_half_squared_norm_is_identity():
    tape = Tape()
    value = np.array([[1.0, -2.0], [0.5, 3.0]])
    w = tape.leaf(value)
    loss = ad.scale(ad.sum_all(ad.hadamard(w, w)), 0.5)
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[w], value, atol=1e-15)


def test_backward_of_sigmoid_at_zero_is_quarter():
    tape = Tape()
    w = tape.leaf(np.array([[0.0]]))
    grads = tape.backward(ad.sum_all(ad.sigmoid(w)))
    assert grads[w][0, 0] == pytest.approx(0.25, abs=1e-15)


def test_backward_rejects_non_scalar_loss():
    tape = Tape()
    w = tape.leaf(np.ones((2, 2)))
    with pytest.raises(ContractError):
        tape.backward(ad.relu(w))


def test_untouched_leaf_gets_zero_gradient():
    tape = Tape()
    used = tape.leaf(np.ones((2, 2)))
    unused = tape.leaf(np.ones((3, 1)))
    grads = tape.backward(ad.sum_all(used))
    np.testing.assert_array_equal(grads[unused], np.zeros((3, 1)))


def test_leaf_copies_caller_buffer():
    buf = np.ones((2, 2))
    tape = Tape()
    w = tape.leaf(buf)
    buf[0, 0] = 99.0
    assert w.value[0, 0] == 1.0


def test_repeated_leaf_use_accumulates():
    tape = Tape()
    value = np.array([[1.0, 2.0], [3.0, 4.0]])
    w = tape.leaf(value)
    loss = ad.sum_all(ad.matmul(w, ad.transpose(w)))
    grads = tape.backward(loss)
    ones = np.ones((2, 2))
    np.testing.assert_allclose(grads[w], 2.0 * ones @ value, atol=1e-12)


def test_backward_twice_gives_same_gradients():
    tape = Tape()
    w = tape.leaf(np.array([[1.0, -1.0]]))
    loss = ad.mean_all(ad.exp(w))
    g1 = tape.backward(loss)[w].copy()
    g2 = tape.backward(loss)[w]
    np.testing.assert_array_equal(g1, g2)


class TestForwardValues:
    def test_matmul_identity(self):
        tape = Tape()
        a = tape.constant([[1.0, 2.0], [3.0, 4.0]])
        i2 = tape.constant(np.eye(2))
        np.testing.assert_array_equal(ad.matmul(a, i2).value, [[1.0, 2.0], [3.0, 4.0]])

    def test_matmul_hand_value(self):
        tape = Tape()
        out = ad.matmul(tape.constant([[1.0, 2.0]]), tape.constant([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.value, [[11.0]])

    def test_matmul_shape_error(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            ad.matmul(tape.constant(np.ones((2, 3))), tape.constant(np.ones((2, 3))))

    def test_elementwise_dispatcher(self):
        tape = Tape()
        x = tape.constant([[0.0]])
        assert ad.elementwise(x, "sigmoid").value[0, 0] == 0.5
        assert ad.elementwise(tape.constant([[-3.0]]), "relu").value[0, 0] == 0.0
        assert ad.elementwise(tape.constant([[3.0]]), "relu").value[0, 0] == 3.0
        got = ad.elementwise(tape.constant([[np.e - 1.0]]), "log1p").value[0, 0]
        assert got == pytest.approx(1.0, abs=1e-12)
        assert ad.elementwise(x, "scale", c=2.5).value[0, 0] == 0.0
        with pytest.raises(ContractError):
            ad.elementwise(x, "scale")
        with pytest.raises(ContractError):
            ad.elementwise(x, "tanh")

    def test_log_domain_error(self):
        tape = Tape()
        with pytest.raises(NumericError):
            ad.log(tape.constant([[0.0]]))

    def test_log1p_domain_error(self):
        tape = Tape()
        with pytest.raises(NumericError):
            ad.log1p(tape.constant([[-1.0]]))

    def test_exp_overflow_error(self):
        tape = Tape()
        with pytest.raises(NumericError):
            ad.exp(tape.constant([[1e4]]))

    def test_row_normalize_values(self):
        tape = Tape()
        out = ad.row_normalize(tape.constant([[3.0, 4.0], [0.0, 0.0]]))
        np.testing.assert_allclose(out.value, [[0.6, 0.8], [0.0, 0.0]], atol=1e-15)

    def test_diag_part_requires_square(self):
        tape = Tape()
        with pytest.raises(ShapeError):
            ad.diag_part(tape.constant(np.ones((2, 3))))

    def test_concat_cols_value(self):
        tape = Tape()
        out = ad.concat_cols(tape.constant([[1.0], [2.0]]), tape.constant([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.value, [[1.0, 3.0], [2.0, 4.0]])

    def test_scale_rows_value(self):
        tape = Tape()
        out = ad.scale_rows(tape.constant([[2.0, 4.0]]), tape.constant([[0.5]]))
        np.testing.assert_array_equal(out.value, [[1.0, 2.0]])

    def test_spmm_identity(self):
        tape = Tape()
        b = tape.constant(np.arange(6.0).reshape(3, 2))
        np.testing.assert_array_equal(ad.spmm(SparseCSR.identity(3), b).value, b.value)


class TestGradCheckPerOp:
    """Every differentiable op composed with a weighted readout stays < 1e-4."""

    rng = np.random.default_rng(2024)

    def weighted_sum(self, tape, out):
        # deterministic per shape so repeated loss_fn evaluations agree
        r = tape.constant(np.random.default_rng(7).normal(size=out.value.shape))
        return ad.sum_all(ad.hadamard(out, r))

    def check(self, build, *param_shapes, eps=1e-5, bound=1e-4):
        params = [self.rng.normal(size=s) for s in param_shapes]

        def loss_fn(tape, leaves):
            return self.weighted_sum(tape, build(tape, leaves))

        assert grad_check(loss_fn, params, eps=eps) < bound

    def test_matmul(self):
        self.check(lambda t, ls: ad.matmul(ls[0], ls[1]), (3, 4), (4, 2))

    def test_spmm(self):
        s = SparseCSR.from_dense(np.triu(np.ones((4, 4))))
        self.check(lambda t, ls: ad.spmm(s, ls[0]), (4, 3))

    def test_transpose(self):
        self.check(lambda t, ls: ad.transpose(ls[0]), (3, 5))

    def test_add_sub_hadamard(self):
        self.check(lambda t, ls: ad.hadamard(ad.add(ls[0], ls[1]), ad.sub(ls[0], ls[1])), (3, 3), (3, 3))

    def test_scale(self):
        self.check(lambda t, ls: ad.scale(ls[0], -2.5), (2, 3))

    def test_add_rowvec(self):
        self.check(lambda t, ls: ad.add_rowvec(ls[0], ls[1]), (4, 3), (1, 3))

    def test_scale_rows(self):
        self.check(lambda t, ls: ad.scale_rows(ls[0], ls[1]), (4, 3), (4, 1))

    def test_relu_away_from_kink(self):
        params = [np.array([[1.0, -1.0], [0.5, -2.0]])]

        def loss_fn(tape, leaves):
            return self.weighted_sum(tape, ad.relu(leaves[0]))

        assert grad_check(loss_fn, params) < 1e-6

    def test_sigmoid(self):
        self.check(lambda t, ls: ad.sigmoid(ls[0]), (3, 3))

    def test_exp(self):
        self.check(lambda t, ls: ad.exp(ls[0]), (3, 3))

    def test_exp_scaled(self):
        self.check(lambda t, ls: ad.exp_scaled(ls[0], -1.7), (4, 4))

    def test_exp_scaled_matches_exp_of_scale(self):
        tape = Tape()
        m = np.random.default_rng(0).normal(size=(3, 3))
        a = ad.exp_scaled(tape.constant(m), 2.5)
        b = ad.exp(ad.scale(tape.constant(m), 2.5))
        np.testing.assert_array_equal(a.value, b.value)

    def test_log_of_positive(self):
        params = [np.abs(self.rng.normal(size=(3, 3))) + 0.5]

        def loss_fn(tape, leaves):
            return self.weighted_sum(tape, ad.log(leaves[0]))

        assert grad_check(loss_fn, params) < 1e-4

    def test_log1p(self):
        params = [np.abs(self.rng.normal(size=(3, 3)))]

        def loss_fn(tape, leaves):
            return self.weighted_sum(tape, ad.log1p(leaves[0]))

        assert grad_check(loss_fn, params) < 1e-4

    def test_row_normalize(self):
        params = [self.rng.normal(size=(4, 3)) + 0.1]

        def loss_fn(tape, leaves):
            return self.weighted_sum(tape, ad.row_normalize(leaves[0]))

        assert grad_check(loss_fn, params) < 1e-4

    def test_diag_part(self):
        self.check(lambda t, ls: ad.diag_part(ls[0]), (4, 4))

    def test_rowsum(self):
        self.check(lambda t, ls: ad.rowsum(ls[0]), (4, 3))

    def test_mean_rows(self):
        self.check(lambda t, ls: ad.mean_rows(ls[0]), (4, 3))

    def test_sum_all_and_mean_all(self):
        def loss_fn(tape, leaves):
            a = ad.sum_all(ad.exp(ad.scale(leaves[0], 0.1)))
            b = ad.mean_all(ad.sigmoid(leaves[1]))
            return ad.add(a, b)

        params = [self.rng.normal(size=(3, 2)), self.rng.normal(size=(3, 2))]
        assert grad_check(loss_fn, params) < 1e-4

    def test_covariance(self):
        self.check(lambda t, ls: ad.covariance(ls[0]), (5, 3))

    def test_concat_cols(self):
        self.check(lambda t, ls: ad.concat_cols(ls[0], ls[1]), (4, 2), (4, 3))

    def test_mlp_like_composition(self):
        x = self.rng.normal(size=(6, 4))

        def loss_fn(tape, leaves):
            w1, b1, w2, b2 = leaves
            h = ad.relu(ad.add_rowvec(ad.matmul(tape.constant(x), w1), b1))
            out = ad.sigmoid(ad.add_rowvec(ad.matmul(h, w2), b2))
            return ad.mean_all(out)

        params = [
            self.rng.normal(size=(4, 5)),
            self.rng.normal(size=(1, 5)),
            self.rng.normal(size=(5, 1)),
            self.rng.normal(size=(1, 1)),
        ]
        assert grad_check(loss_fn, params) < 1e-4

    @pytest.mark.parametrize("tau", [0.3, 1.0, 2.0])
    def test_infonce_pair(self, tau):
        def loss_fn(tape, leaves):
            return ad.infonce_pair(leaves[0], leaves[1], tau)

        params = [self.rng.normal(size=(5, 3)), self.rng.normal(size=(5, 3))]
        assert grad_check(loss_fn, params) < 1e-4

    def test_infonce_pair_with_zero_row(self):
        a = self.rng.normal(size=(4, 3))
        b = self.rng.normal(size=(4, 3))
        a[2] = 0.0

        def loss_fn(tape, leaves):
            return ad.infonce_pair(leaves[0], leaves[1], 0.7)

        assert grad_check(loss_fn, [a, b]) < 1e-4

    def test_infonce_pair_single_row_is_zero(self):
        # no negatives: numerator equals denominator
        tape = Tape()
        out = ad.infonce_pair(tape.leaf(np.array([[0.6, 0.8]])),
                              tape.leaf(np.array([[1.0, 0.0]])), 0.5)
        assert abs(float(out.value)) < 1e-12

    @pytest.mark.parametrize("tau", [0.4, 1.0, 3.0])
    def test_self_contrast(self, tau):
        def loss_fn(tape, leaves):
            return ad.self_contrast(leaves[0], tau)

        params = [self.rng.normal(size=(6, 3))]
        assert grad_check(loss_fn, params) < 1e-4

    def test_fused_ops_reject_bad_temperature(self):
        tape = Tape()
        x = tape.leaf(np.ones((3, 2)))
        with pytest.raises(NumericError):
            ad.infonce_pair(x, tape.leaf(np.ones((3, 2))), 0.0)
        with pytest.raises(NumericError):
            ad.self_contrast(x, -1.0)


class TestGradCheckContract:
    def test_quadratic_loss_is_essentially_exact(self):
        def loss_fn(tape, leaves):
            return ad.sum_all(ad.hadamard(leaves[0], leaves[0]))

        err = grad_check(loss_fn, [np.array([[1.0, -2.0, 3.0]])], eps=1e-3)
        assert err < 1e-8

    def test_eps_bounds_enforced(self):
        def loss_fn(tape, leaves):
            return ad.sum_all(leaves[0])

        with pytest.raises(ContractError):
            grad_check(loss_fn, [np.ones((1, 1))], eps=1e-8)
        with pytest.raises(ContractError):
            grad_check(loss_fn, [np.ones((1, 1))], eps=1e-2)

    def test_params_not_mutated(self):
        p = np.array([[2.0, 3.0]])
        snapshot = p.copy()

        def loss_fn(tape, leaves):
            return ad.sum_all(ad.hadamard(leaves[0], leaves[0]))

        grad_check(loss_fn, [p])
        np.testing.assert_array_equal(p, snapshot)
