import zlib

import numpy as np
import pytest

from star import tensor as T
from star.tensor import BatchNormState, NumericsError, ShapeError, Tensor

from gradcheck import check_gradients


def t(data, grad=True):
    return Tensor(np.asarray(data, dtype=np.float64), requires_grad=grad)


class TestForwardValues:
    def test_matmul_identity(self):
        x = np.arange(12.0).reshape(3, 4)
        out = T.matmul(t(np.eye(3)), t(x))
        np.testing.assert_array_equal(out.data, x)

    def test_sigmoid_zero(self):
        assert T.sigmoid(t([0.0])).data[0] == 0.5

    def test_l2_normalize_345(self):
        out = T.l2_normalize(t([[3.0, 4.0]]))
        np.testing.assert_allclose(out.data, [[0.6, 0.8]], rtol=0, atol=1e-15)

    def test_row_softmax_rows_sum_to_one(self):
        out = T.row_softmax(t(np.random.default_rng(0).normal(size=(4, 7))))
        np.testing.assert_allclose(out.data.sum(axis=-1), np.ones(4), atol=1e-12)

    def test_softmax_mask_is_exact_zero(self):
        biased = t([[1.0, 2.0, T.mask_bias(np.array([True, True, False]))[2]]])
        out = T.row_softmax(biased)
        assert out.data[0, 2] == 0.0

    def test_lookup_gathers_rows(self):
        table = t(np.arange(12.0).reshape(4, 3))
        out = T.lookup(table, np.array([[1, 3], [0, 0]]))
        np.testing.assert_array_equal(out.data[0, 1], table.data[3])

    def test_forward_deterministic_bitwise(self):
        rng = np.random.default_rng(7)
        a = rng.normal(size=(5, 6))
        b = rng.normal(size=(6, 4))

        def run():
            return T.row_softmax(T.matmul(T.leaky_relu(t(a)), t(b))).data.tobytes()

        assert run() == run()


class TestErrors:
    def test_matmul_shape_error_names_shapes(self):
        with pytest.raises(ShapeError, match=r"matmul.*\(2, 3\).*\(4, 5\)"):
            T.matmul(t(np.zeros((2, 3))), t(np.zeros((4, 5))))

    def test_add_shape_error(self):
        with pytest.raises(ShapeError, match="add"):
            T.add(t(np.zeros((2, 3))), t(np.zeros((4, 5))))

    def test_nan_is_error_state(self):
        with pytest.raises(NumericsError):
            Tensor(np.array([1.0, np.nan]))

    def test_inf_from_op_is_error_state(self):
        big = t([1e308])
        with np.errstate(over="ignore"), pytest.raises(NumericsError):
            T.add(big, big)

    def test_non_scalar_backward(self):
        with pytest.raises(ShapeError, match="scalar"):
            t([1.0, 2.0]).backward()

    def test_log_non_positive(self):
        with pytest.raises(NumericsError):
            T.log(t([0.0]))


class TestBackwardAnalytic:
    def test_x_squared(self):
        x = t([3.0])
        loss = T.tsum(T.mul(x, x))
        loss.backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_sum_sigmoid_at_zero(self):
        x = t(np.zeros(5))
        T.tsum(T.sigmoid(x)).backward()
        np.testing.assert_allclose(x.grad, np.full(5, 0.25))

    def test_gradient_accumulation_doubles(self):
        x = t([2.0])

        def run_backward():
            T.tsum(T.mul(x, x)).backward()

        run_backward()
        once = x.grad.copy()
        run_backward()
        np.testing.assert_allclose(x.grad, 2 * once)

    def test_k_passes_scale_exactly_k(self):
        rng = np.random.default_rng(3)
        w = t(rng.normal(size=(4, 4)))
        xin = rng.normal(size=(2, 4))
        k = 5
        for _ in range(k):
            T.tsum(T.sigmoid(T.matmul(t(xin, grad=False), w))).backward()
        w.zero_grad()
        T.tsum(T.sigmoid(T.matmul(t(xin, grad=False), w))).backward()
        single = w.grad.copy()
        w.zero_grad()
        for _ in range(k):
            T.tsum(T.sigmoid(T.matmul(t(xin, grad=False), w))).backward()
        np.testing.assert_allclose(w.grad, k * single, rtol=0, atol=0)

    def test_shared_subgraph(self):
        x = t([2.0])
        y = T.mul(x, x)
        loss = T.tsum(T.add(y, y))
        loss.backward()
        np.testing.assert_allclose(x.grad, [8.0])


def _rand(rng, *shape):
    return t(rng.normal(size=shape))


OP_CASES = {
    "add": lambda rng: (lambda a, b: T.add(a, b), [_rand(rng, 3, 4), _rand(rng, 3, 4)]),
    "add_broadcast": lambda rng: (lambda a, b: T.add(a, b), [_rand(rng, 3, 4), _rand(rng, 4)]),
    "mul": lambda rng: (lambda a, b: T.mul(a, b), [_rand(rng, 2, 5), _rand(rng, 2, 5)]),
    "mul_broadcast": lambda rng: (lambda a, b: T.mul(a, b), [_rand(rng, 2, 3, 4), _rand(rng, 3, 4)]),
    "matmul": lambda rng: (lambda a, b: T.matmul(a, b), [_rand(rng, 3, 4), _rand(rng, 4, 2)]),
    "transpose": lambda rng: (lambda a: T.transpose(a), [_rand(rng, 3, 4)]),
    "reshape": lambda rng: (lambda a: T.reshape(a, (2, 6)), [_rand(rng, 3, 4)]),
    "concat": lambda rng: (lambda a, b: T.concat([a, b], axis=-1),
                           [_rand(rng, 3, 2), _rand(rng, 3, 4)]),
    "leaky_relu": lambda rng: (lambda a: T.leaky_relu(a), [_rand(rng, 4, 4)]),
    "sigmoid": lambda rng: (lambda a: T.sigmoid(a), [_rand(rng, 3, 3)]),
    "log": lambda rng: (lambda a: T.log(a),
                        [t(np.abs(rng.normal(size=(3, 3))) + 0.5)]),
    "clamp": lambda rng: (lambda a: T.clamp(a, -0.8, 0.8), [_rand(rng, 4, 3)]),
    "row_softmax": lambda rng: (lambda a: T.row_softmax(a), [_rand(rng, 3, 5)]),
    "mean_all": lambda rng: (lambda a: T.mean(a), [_rand(rng, 3, 4)]),
    "mean_axis": lambda rng: (lambda a: T.mean(a, axis=0), [_rand(rng, 3, 4)]),
    "sum_axis": lambda rng: (lambda a: T.tsum(a, axis=1), [_rand(rng, 3, 4)]),
    "l2_normalize": lambda rng: (lambda a: T.l2_normalize(a), [_rand(rng, 3, 4)]),
    "dot_sim": lambda rng: (lambda a, b: T.dot_sim(a, b),
                            [_rand(rng, 4, 3), _rand(rng, 4, 3)]),
    "lookup": lambda rng: (lambda tbl: T.lookup(tbl, np.array([0, 2, 2, 1])),
                           [_rand(rng, 3, 4)]),
}


@pytest.mark.parametrize("name", sorted(OP_CASES))
def test_op_gradients_match_finite_differences(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    for _ in range(100):
        op, leaves = OP_CASES[name](rng)
        proj = rng.normal(size=op(*leaves).shape)

        def loss_fn():
            return T.tsum(T.mul(op(*leaves), Tensor(proj)))

        check_gradients(loss_fn, {f"leaf{i}": lf for i, lf in enumerate(leaves)},
                        rng, samples_per_leaf=2)


def test_batch_norm_train_gradients():
    rng = np.random.default_rng(11)
    for _ in range(100):
        x = _rand(rng, 6, 3)
        gamma = t(rng.normal(size=3) + 1.5)
        beta = t(rng.normal(size=3))
        state = BatchNormState(3)
        proj = rng.normal(size=(6, 3))

        def loss_fn():
            return T.tsum(T.mul(T.batch_norm(x, gamma, beta, state, True),
                                Tensor(proj)))

        check_gradients(loss_fn, {"x": x, "gamma": gamma, "beta": beta}, rng,
                        samples_per_leaf=2)


def test_batch_norm_eval_gradients():
    rng = np.random.default_rng(12)
    x = _rand(rng, 5, 4)
    gamma = t(rng.normal(size=4) + 1.0)
    beta = t(rng.normal(size=4))
    state = BatchNormState(4)
    state.running_mean = rng.normal(size=4)
    state.running_var = np.abs(rng.normal(size=4)) + 0.5
    proj = rng.normal(size=(5, 4))

    def loss_fn():
        return T.tsum(T.mul(T.batch_norm(x, gamma, beta, state, False),
                            Tensor(proj)))

    check_gradients(loss_fn, {"x": x, "gamma": gamma, "beta": beta}, rng)


def test_batch_norm_eval_frozen_and_bit_identical():
    rng = np.random.default_rng(13)
    x = t(rng.normal(size=(8, 3)), grad=False)
    gamma = t(np.ones(3))
    beta = t(np.zeros(3))
    state = BatchNormState(3)
    T.batch_norm(x, gamma, beta, state, True)
    frozen = state.to_arrays()
    e1 = T.batch_norm(x, gamma, beta, state, False).data.tobytes()
    e2 = T.batch_norm(x, gamma, beta, state, False).data.tobytes()
    assert e1 == e2
    np.testing.assert_array_equal(state.running_mean, frozen["running_mean"])


def test_mlp_finite_difference_oracle():
    """Random 3-layer MLP: every parameter's gradient matches central
    differences within 1e-5 relative error."""
    rng = np.random.default_rng(42)
    for _ in range(10):
        dims = [4, 6, 5, 1]
        ws = {f"w{i}": _rand(rng, dims[i], dims[i + 1]) for i in range(3)}
        bs = {f"b{i}": t(rng.normal(size=dims[i + 1]) * 0.1) for i in range(3)}
        xin = rng.normal(size=(3, 4))

        def forward():
            h = Tensor(xin)
            for i in range(3):
                h = T.add(T.matmul(h, ws[f"w{i}"]), bs[f"b{i}"])
                if i < 2:
                    h = T.leaky_relu(h)
            return T.mean(T.mul(h, h))

        check_gradients(forward, {**ws, **bs}, rng, samples_per_leaf=3)
