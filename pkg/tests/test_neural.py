import numpy as np
import pytest

from steertext.neural import autodiff as ad
from steertext.neural.optim import AdamW, Sgd, make_optimizer
from steertext.neural.store import Graph, ParamStore
from steertext.neural.transformer import infer_stack, init_stack, stack_forward

from conftest import gradcheck


def make_store(params: dict) -> ParamStore:
    store = ParamStore(np.float64)
    for k, v in params.items():
        store.add(k, np.asarray(v, dtype=np.float64))
    return store


rng = np.random.default_rng(0)
T, W = 4, 6
X0 = rng.normal(0, 0.7, (T, W))


class TestOpGradients:
    def check(self, params, build, **kw):
        store = make_store(params)
        worst = gradcheck(lambda: self._run(store, build), store,
                          probes_per_param=12, **kw)
        assert worst < 1e-5, worst

    @staticmethod
    def _run(store, build):
        g = Graph(store)
        return g, build(g)

    def test_layer_norm(self):
        self.check(
            {"x": X0, "g": rng.normal(1, 0.1, W), "b": rng.normal(0, 0.1, W)},
            lambda g: ad.sumsq(ad.layer_norm(g.param("x"), g.param("g"),
                                             g.param("b"))))

    def test_gelu(self):
        self.check({"x": X0}, lambda g: ad.sumsq(ad.gelu(g.param("x"))))

    def test_linear(self):
        self.check(
            {"x": X0, "w": rng.normal(0, 0.5, (W, 3)), "b": rng.normal(0, 0.5, 3)},
            lambda g: ad.sumsq(ad.linear(g.param("x"), g.param("w"),
                                         g.param("b"))))

    @pytest.mark.parametrize("causal", [True, False])
    def test_attention(self, causal):
        self.check(
            {"x": X0, "wqkv": rng.normal(0, 0.4, (W, 3 * W)),
             "bqkv": rng.normal(0, 0.1, 3 * W),
             "wo": rng.normal(0, 0.4, (W, W)), "bo": rng.normal(0, 0.1, W)},
            lambda g: ad.sumsq(ad.attention(
                g.param("x"), g.param("wqkv"), g.param("bqkv"),
                g.param("wo"), g.param("bo"), 2, causal)))

    def test_softmax_cross_entropy(self):
        targets = np.array([0, 2, 1, 2])
        ignore = np.array([False, True, False, False])
        self.check(
            {"x": X0, "w": rng.normal(0, 0.5, (W, 3)),
             "b": rng.normal(0, 0.5, 3)},
            lambda g: ad.softmax_cross_entropy(
                ad.linear(g.param("x"), g.param("w"), g.param("b")),
                targets, ignore))

    def test_embedding(self):
        ids = np.array([0, 2, 1, 2])
        self.check({"t": rng.normal(0, 0.5, (3, W))},
                   lambda g: ad.sumsq(ad.embedding(g.param("t"), ids)))

    def test_take_and_assemble(self):
        self.check({"x": X0},
                   lambda g: ad.sumsq(ad.take_rows(g.param("x"),
                                                   np.array([1, 3, 1]))))
        self.check(
            {"a": X0[:3], "b": rng.normal(0, 0.5, (2, W))},
            lambda g: ad.sumsq(ad.assemble_rows(
                [g.param("a"), g.param("b")],
                np.array([0, 1, 0, 1, 0]), np.array([0, 0, 1, 1, 2]))))

    def test_weighted_rows_sumsq(self):
        self.check({"x": X0},
                   lambda g: ad.weighted_rows_sumsq(
                       g.param("x"), np.array([1.0, -1.0, 1.0, 1.0])))


class TestForwardExamples:
    def test_identity_linear_passthrough(self):
        store = make_store({"w": np.eye(3), "b": np.zeros(3)})
        g = Graph(store)
        x = g.const(np.arange(6, dtype=np.float64).reshape(2, 3))
        out = ad.linear(x, g.param("w"), g.param("b"))
        np.testing.assert_array_equal(out.value, x.value)

    def test_uniform_softmax(self):
        logits = ad.const(np.zeros((3, 7)))
        loss = ad.softmax_cross_entropy(logits, np.array([0, 1, 2]))
        assert loss.value == pytest.approx(np.log(7))

    def test_causal_attention_ignores_future(self):
        """Output at position i is unchanged by perturbing positions > i."""
        r = np.random.default_rng(3)
        params = {"wqkv": r.normal(0, 0.4, (W, 3 * W)),
                  "bqkv": r.normal(0, 0.1, 3 * W),
                  "wo": r.normal(0, 0.4, (W, W)), "bo": r.normal(0, 0.1, W)}
        store = make_store(params)
        x1 = r.normal(size=(T, W))
        x2 = x1.copy()
        x2[2:] += r.normal(size=(T - 2, W))

        def run(x):
            g = Graph(store)
            return ad.attention(g.const(x), g.param("wqkv"), g.param("bqkv"),
                                g.param("wo"), g.param("bo"), 2, True).value

        np.testing.assert_allclose(run(x1)[:2], run(x2)[:2], atol=1e-12)

    def test_shape_error_names_op(self):
        with pytest.raises(ad.ShapeError, match="matmul"):
            ad.matmul(ad.const(np.zeros((2, 3))), ad.const(np.zeros((4, 2))))

    def test_nan_guard(self):
        with np.errstate(over="ignore"), pytest.raises(ad.NonFiniteError):
            ad.scale(ad.const(np.array([1e308])), 1e308)


class TestBackwardContract:
    def test_non_scalar_loss_rejected(self):
        x = ad.leaf(np.zeros((2, 2)), "x")
        with pytest.raises(ad.ShapeError, match="scalar"):
            ad.backward(x)

    def test_constant_loss_zero_gradients(self):
        store = make_store({"p": np.ones(3)})
        g = Graph(store)
        # loss does not depend on p, so p receives no gradient at all
        loss = ad.sumsq(g.const(np.ones(2)))
        store.zero_grads()
        g.backward(loss)
        assert "p" not in store.grads

    def test_quadratic_gradient_is_parameter(self):
        store = make_store({"p": np.array([[1.0, -2.0, 3.0]])})
        g = Graph(store)
        loss = ad.scale(ad.sumsq(g.param("p")), 0.5)
        store.zero_grads()
        g.backward(loss)
        np.testing.assert_allclose(store.grads["p"], store.params["p"])

    def test_fanout_accumulates(self):
        store = make_store({"p": np.array([[2.0]])})
        g = Graph(store)
        p = g.param("p")
        loss = ad.sumsq(ad.add(p, p))  # (2p)^2 -> d/dp = 8p
        store.zero_grads()
        g.backward(loss)
        assert store.grads["p"][0, 0] == pytest.approx(16.0)


class TestFullGraphGradients:
    def test_two_layer_two_head_transformer(self):
        """The acceptance-style check on a complete LM graph."""
        r = np.random.default_rng(0)
        store = ParamStore(np.float64)
        v, w, t = 7, 8, 5
        store.add("m.tok", r.normal(0, 0.5, (v, w)))
        store.add("m.pos", r.normal(0, 0.5, (t, w)))
        init_stack(store, "m", w, 2, r)
        store.add("m.out.w", r.normal(0, 0.5, (w, v)))
        store.add("m.out.b", np.zeros(v))
        assert store.n_params() <= 10_000
        ids = r.integers(0, v, t)
        targets = r.integers(0, v, t)
        ignore = np.array([False, True, False, False, True])

        def loss_fn():
            g = Graph(store)
            x = ad.add(ad.embedding(g.param("m.tok"), ids),
                       ad.embedding(g.param("m.pos"), np.arange(t)))
            h = stack_forward(g, "m", x, 2, 2, causal=True)
            logits = ad.linear(h, g.param("m.out.w"), g.param("m.out.b"))
            return g, ad.softmax_cross_entropy(logits, targets, ignore)

        worst = gradcheck(loss_fn, store, probes_per_param=8)
        assert worst < 1e-5, worst


class TestOptimizers:
    def test_sgd_unit_step(self):
        store = make_store({"p": np.array([3.0, -1.0])})
        store.grads = {"p": np.array([1.0, 2.0])}
        Sgd(lr=1.0).step(store)
        np.testing.assert_allclose(store.params["p"], [2.0, -3.0])

    def test_zero_grad_no_decay_unchanged(self):
        store = make_store({"p": np.array([3.0, -1.0])})
        store.grads = {"p": np.zeros(2)}
        AdamW(lr=0.1, weight_decay=0.0).step(store)
        np.testing.assert_allclose(store.params["p"], [3.0, -1.0])

    def test_adamw_decoupled_decay(self):
        # with zero gradient and nonzero decay, the update is exactly -lr*wd*p
        store = make_store({"p": np.array([10.0])})
        store.grads = {"p": np.zeros(1)}
        AdamW(lr=0.1, weight_decay=0.5).step(store)
        assert store.params["p"][0] == pytest.approx(10.0 * (1 - 0.05))

    def test_adaptive_converges_on_quadratic(self):
        """||grad|| < 1e-6 within 5k steps on 0.5*||p||^2 with lr decay."""
        store = make_store({"p": np.random.default_rng(1).normal(size=20)})
        opt = AdamW(lr=0.5)
        for t in range(5000):
            opt.lr = 0.5 * 0.997**t
            store.zero_grads()
            store.accumulate({"p": store.params["p"].copy()})
            opt.step(store)
            if np.linalg.norm(store.params["p"]) < 1e-6:
                break
        assert np.linalg.norm(store.params["p"]) < 1e-6

    def test_make_optimizer_rejects_unknown(self):
        with pytest.raises(ValueError):
            make_optimizer("momentum", 0.1)
        with pytest.raises(ValueError):
            make_optimizer("sgd", -1.0)


class TestReproducibility:
    def _train_once(self, seed):
        r = np.random.default_rng(seed)
        store = ParamStore(np.float64)
        store.add("m.tok", r.normal(0, 0.5, (5, 4)))
        init_stack(store, "m", 4, 1, r)
        store.add("m.out.w", r.normal(0, 0.5, (4, 5)))
        store.add("m.out.b", np.zeros(5))
        opt = AdamW(lr=1e-2)
        ids = np.array([0, 1, 2, 3])
        targets = np.array([1, 2, 3, 4])
        for _ in range(10):
            g = Graph(store)
            x = ad.embedding(g.param("m.tok"), ids)
            h = stack_forward(g, "m", x, 2, 1, causal=True)
            logits = ad.linear(h, g.param("m.out.w"), g.param("m.out.b"))
            loss = ad.softmax_cross_entropy(logits, targets)
            store.zero_grads()
            g.backward(loss)
            opt.step(store)
        return store

    def test_bitwise_identical_runs(self):
        a = self._train_once(7)
        b = self._train_once(7)
        for name in a.names():
            assert np.array_equal(a.params[name], b.params[name])


class TestInferencePathAgreement:
    def test_cached_decode_matches_full_forward(self):
        r = np.random.default_rng(5)
        store = ParamStore(np.float64)
        w = 8
        init_stack(store, "m", w, 2, r)
        x = r.normal(size=(6, w))

        def tape_forward(xs):
            g = Graph(store)
            return stack_forward(g, "m", g.const(xs), 2, 2, causal=True).value

        full = tape_forward(x)
        plain = infer_stack(store.params, "m", x, 2, 2)
        np.testing.assert_allclose(plain, full, atol=1e-12)

        from steertext.neural.transformer import KvCache

        cache = KvCache(2)
        inc = [infer_stack(store.params, "m", x[:4], 2, 2, cache=cache)]
        for i in range(4, 6):
            inc.append(infer_stack(store.params, "m", x[i:i + 1], 2, 2,
                                   cache=cache))
        np.testing.assert_allclose(np.vstack(inc), full, atol=1e-10)
