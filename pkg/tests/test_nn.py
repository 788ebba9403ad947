"""Autodiff oracle tests: every op against central finite differences."""

import numpy as np
import pytest

from emergelab import nn

SEEDS = range(20)


def _params(rng, *shapes):
    return [nn.Parameter(rng.normal(size=s) * 0.5, f"p{i}") for i, s in enumerate(shapes)]


def assert_grad_ok(fn, params, tol=1e-4):
    assert nn.grad_check(fn, params) < tol


class TestElementwiseOps:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_add_mul_scale(self, seed):
        rng = np.random.default_rng(seed)
        a, b = _params(rng, (3, 4), (3, 4))
        assert_grad_ok(lambda: nn.tsum(nn.scale(nn.mul(nn.add(a, b), b), 0.7)), [a, b])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_broadcast_bias_add(self, seed):
        rng = np.random.default_rng(seed)
        x, b = _params(rng, (5, 3), (3,))
        assert_grad_ok(lambda: nn.tsum(nn.add(x, b)), [x, b])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_nonlinearities(self, seed):
        rng = np.random.default_rng(seed)
        (a,) = _params(rng, (4, 3))
        assert_grad_ok(lambda: nn.tsum(nn.sigmoid(a)), [a])
        assert_grad_ok(lambda: nn.tsum(nn.tanh(a)), [a])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_relu_away_from_kink(self, seed):
        rng = np.random.default_rng(seed)
        a = nn.Parameter(rng.normal(size=(4, 4)) + np.sign(rng.normal(size=(4, 4))), "a")
        a.data[np.abs(a.data) < 0.1] = 0.5
        assert_grad_ok(lambda: nn.tsum(nn.relu(a)), [a])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_log_of_positive(self, seed):
        rng = np.random.default_rng(seed)
        a = nn.Parameter(rng.uniform(0.1, 2.0, size=(3, 3)), "a")
        assert_grad_ok(lambda: nn.tsum(nn.log(a)), [a])


class TestLinearAlgebraOps:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_matmul_dense(self, seed):
        rng = np.random.default_rng(seed)
        x, w, b = _params(rng, (4, 5), (5, 3), (3,))
        assert_grad_ok(lambda: nn.tsum(nn.dense(x, w, b)), [x, w, b])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_reshape_sum_axis(self, seed):
        rng = np.random.default_rng(seed)
        (a,) = _params(rng, (2, 3, 4))
        weights = nn.Tensor(np.random.default_rng(seed + 1).normal(size=(6, 4)))
        assert_grad_ok(
            lambda: nn.tsum(nn.mul(nn.reshape(a, (6, 4)), weights)), [a]
        )
        assert_grad_ok(lambda: nn.tsum(nn.tsum(a, axis=1)), [a])
        assert_grad_ok(lambda: nn.tmean(a), [a])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_batched_dot(self, seed):
        rng = np.random.default_rng(seed)
        a, h = _params(rng, (3, 4, 5), (3, 5))
        w = nn.Tensor(rng.normal(size=(3, 4)))
        assert_grad_ok(lambda: nn.tsum(nn.mul(nn.batched_dot(a, h), w)), [a, h])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gather_rows(self, seed):
        rng = np.random.default_rng(seed)
        (a,) = _params(rng, (5, 4))
        idx = rng.integers(0, 4, size=5)
        assert_grad_ok(lambda: nn.tsum(nn.gather_rows(a, idx)), [a])

    @pytest.mark.parametrize("seed", SEEDS)
    def test_embedding_lookup(self, seed):
        rng = np.random.default_rng(seed)
        (table,) = _params(rng, (6, 4))
        idx = rng.integers(0, 6, size=8)  # repeats force gradient accumulation
        w = nn.Tensor(rng.normal(size=(8, 4)))
        assert_grad_ok(lambda: nn.tsum(nn.mul(nn.embedding_lookup(table, idx), w)), [table])

    def test_embedding_rejects_bad_index(self):
        table = nn.Parameter(np.zeros((4, 2)), "t")
        with pytest.raises(IndexError):
            nn.embedding_lookup(table, np.array([4]))


class TestConvAndPool:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_conv2d(self, seed):
        rng = np.random.default_rng(seed)
        x, k = _params(rng, (2, 6, 6, 3), (3, 3, 3, 4))
        w = nn.Tensor(rng.normal(size=(2, 4, 4, 4)))
        assert_grad_ok(lambda: nn.tsum(nn.mul(nn.conv2d(x, k), w)), [x, k])

    @pytest.mark.parametrize("seed", range(5))
    def test_conv2d_single_image(self, seed):
        rng = np.random.default_rng(seed)
        x, k = _params(rng, (5, 5, 2), (3, 3, 2, 3))
        w = nn.Tensor(rng.normal(size=(3, 3, 3)))
        assert_grad_ok(lambda: nn.tsum(nn.mul(nn.conv2d(x, k), w)), [x, k])

    def test_conv2d_shape_errors(self):
        x = nn.Tensor(np.zeros((1, 4, 4, 3)))
        with pytest.raises(ValueError):
            nn.conv2d(x, nn.Tensor(np.zeros((3, 3, 2, 4))))
        with pytest.raises(ValueError):
            nn.conv2d(x, nn.Tensor(np.zeros((5, 5, 3, 4))))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_maxpool(self, seed):
        rng = np.random.default_rng(seed)
        # Well-separated unique values keep the argmax stable under the
        # finite-difference probe (ties are nondifferentiable points).
        vals = rng.permutation(2 * 6 * 6 * 3).astype(float) * 0.01
        x = nn.Parameter(vals.reshape(2, 6, 6, 3), "x")
        w = nn.Tensor(rng.normal(size=(2, 3, 3, 3)))
        assert_grad_ok(lambda: nn.tsum(nn.mul(nn.maxpool2x2(x), w)), [x])

    def test_maxpool_values(self):
        x = nn.Tensor(np.arange(16, dtype=float).reshape(1, 4, 4, 1))
        y = nn.maxpool2x2(x)
        np.testing.assert_array_equal(y.data[0, :, :, 0], [[5, 7], [13, 15]])

    def test_maxpool_tie_routes_to_first(self):
        x = nn.Parameter(np.ones((1, 2, 2, 1)), "x")
        y = nn.tsum(nn.maxpool2x2(x))
        y.backward()
        # All four entries tie; the gradient goes to the first occurrence.
        assert x.grad.sum() == 1.0
        assert x.grad[0, 0, 0, 0] == 1.0


class TestSoftmaxAndLosses:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_softmax_rows_sum_to_one(self, seed):
        rng = np.random.default_rng(seed)
        logits = rng.normal(size=(4, 6)) * 5
        p = nn.softmax(nn.Tensor(logits))
        np.testing.assert_allclose(p.data.sum(axis=-1), 1.0, atol=1e-12)

    def test_softmax_stable_for_large_logits(self):
        p = nn.softmax(nn.Tensor(np.array([[1000.0, 0.0, -1000.0]])))
        assert np.isfinite(p.data).all()
        assert p.data[0, 0] == pytest.approx(1.0)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_softmax_cross_entropy_grad(self, seed):
        rng = np.random.default_rng(seed)
        (logits,) = _params(rng, (4, 6))
        target = rng.dirichlet(np.ones(6), size=4)
        assert_grad_ok(lambda: nn.cross_entropy(nn.softmax(logits), target), [logits])

    def test_cross_entropy_validates_distributions(self):
        p = nn.Tensor(np.full((2, 4), 0.25))
        with pytest.raises(ValueError):
            nn.cross_entropy(p, np.full((2, 4), 0.3))
        with pytest.raises(ValueError):
            nn.cross_entropy(nn.Tensor(np.full((2, 4), 0.3)), np.full((2, 4), 0.25))
        with pytest.raises(ValueError):
            nn.cross_entropy(p, np.full((2, 5), 0.2))

    def test_cross_entropy_value(self):
        p = nn.Tensor(np.array([[0.5, 0.5], [0.9, 0.1]]))
        t = np.array([[1.0, 0.0], [1.0, 0.0]])
        expected = -(np.log(0.5) + np.log(0.9)) / 2
        assert nn.cross_entropy(p, t).data == pytest.approx(expected)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_entropy_of_grad_and_value(self, seed):
        rng = np.random.default_rng(seed)
        (logits,) = _params(rng, (3, 5))
        assert_grad_ok(lambda: nn.tsum(nn.entropy_of(nn.softmax(logits))), [logits])
        uniform = nn.Tensor(np.full((1, 4), 0.25))
        assert nn.entropy_of(uniform).data[0] == pytest.approx(np.log(4))


class TestGRU:
    @pytest.mark.parametrize("seed", SEEDS)
    def test_gru_step_grad(self, seed):
        rng = np.random.default_rng(seed)
        params = {}
        for gate in ("z", "r", "h"):
            params[f"W_{gate}"] = nn.Parameter(rng.normal(size=(4, 5)) * 0.3, f"W_{gate}")
            params[f"U_{gate}"] = nn.Parameter(rng.normal(size=(5, 5)) * 0.3, f"U_{gate}")
            params[f"b_{gate}"] = nn.Parameter(rng.normal(size=5) * 0.1, f"b_{gate}")
        x = nn.Parameter(rng.normal(size=(3, 4)), "x")
        h = nn.Parameter(rng.normal(size=(3, 5)), "h")
        w = nn.Tensor(rng.normal(size=(3, 5)))
        assert_grad_ok(
            lambda: nn.tsum(nn.mul(nn.gru_step(x, h, params), w)),
            list(params.values()) + [x, h],
        )

    def test_gru_convention(self):
        # With z == 1 the new state equals the candidate; with z == 0 it is h.
        rng = np.random.default_rng(0)
        params = {}
        for gate in ("z", "r", "h"):
            params[f"W_{gate}"] = nn.Parameter(np.zeros((2, 3)), f"W_{gate}")
            params[f"U_{gate}"] = nn.Parameter(np.zeros((3, 3)), f"U_{gate}")
            params[f"b_{gate}"] = nn.Parameter(np.zeros(3), f"b_{gate}")
        x = nn.Tensor(rng.normal(size=(1, 2)))
        h = nn.Tensor(rng.normal(size=(1, 3)))
        params["b_z"].data[:] = -50.0  # z -> 0
        out = nn.gru_step(x, h, params)
        np.testing.assert_allclose(out.data, h.data, atol=1e-12)
        params["b_z"].data[:] = 50.0  # z -> 1, candidate = tanh(0) = 0
        out = nn.gru_step(x, h, params)
        np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


class TestSamplingAndOptim:
    def test_sample_categorical_deterministic_rows(self, rng):
        p = np.array([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        idx = nn.sample_categorical(p, rng)
        np.testing.assert_array_equal(idx, [0, 2])

    def test_sample_categorical_frequencies(self, rng):
        p = np.array([0.2, 0.3, 0.5])
        counts = np.bincount(
            [nn.sample_categorical(p, rng) for _ in range(20000)], minlength=3
        )
        np.testing.assert_allclose(counts / 20000, p, atol=0.02)

    def test_sample_categorical_validates(self, rng):
        with pytest.raises(ValueError):
            nn.sample_categorical(np.array([0.5, 0.2]), rng)

    def test_argmax_tie_lowest_index(self):
        assert nn.argmax(np.array([0.4, 0.4, 0.2])) == 0

    def test_sgd_step(self):
        p = nn.Parameter(np.array([1.0, 2.0]), "p")
        p.grad = np.array([1.0, -1.0])
        nn.sgd_step([p], 0.1)
        np.testing.assert_allclose(p.data, [0.9, 2.1])

    def test_sgd_skips_frozen(self):
        p = nn.Parameter(np.array([1.0]), "p", trainable=False)
        p.grad = np.array([1.0])
        nn.sgd_step([p], 0.1)
        assert p.data[0] == 1.0

    def test_adam_first_step_value(self):
        # One bias-corrected step with unit gradient moves by ~lr.
        p = nn.Parameter(np.array([1.0]), "p")
        p.grad = np.array([1.0])
        nn.adam_step([p], nn.AdamState(), 0.001)
        assert abs(p.data[0] - 0.999) < 1e-6

    def test_adam_skips_frozen(self):
        p = nn.Parameter(np.array([1.0]), "p", trainable=False)
        p.grad = np.array([1.0])
        nn.adam_step([p], nn.AdamState(), 0.001)
        assert p.data[0] == 1.0


class TestCheckpoints:
    def test_save_load_roundtrip(self, tmp_path, rng):
        params = [
            nn.Parameter(rng.normal(size=(3, 4)), "a"),
            nn.Parameter(rng.normal(size=5), "b"),
            nn.Parameter(rng.normal(size=(2, 2, 2)), "c"),
        ]
        path = tmp_path / "w.emrgw"
        nn.save_parameters(params, str(path))
        loaded = nn.load_parameters(str(path))
        assert set(loaded) == {"a", "b", "c"}
        for p in params:
            np.testing.assert_array_equal(loaded[p.name], p.data)

    def test_assign_parameters(self, rng):
        src = nn.Parameter(rng.normal(size=(2, 2)), "x")
        dst = nn.Parameter(np.zeros((2, 2)), "x")
        nn.assign_parameters([dst], {"x": src.data})
        np.testing.assert_array_equal(dst.data, src.data)
        with pytest.raises(KeyError):
            nn.assign_parameters([nn.Parameter(np.zeros(2), "missing")], {"x": src.data})
        with pytest.raises(ValueError):
            nn.assign_parameters([nn.Parameter(np.zeros(3), "x")], {"x": src.data})

    def test_load_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emrgw"
        path.write_bytes(b"GARBAGE___")
        with pytest.raises(ValueError, match="magic"):
            nn.load_parameters(str(path))
