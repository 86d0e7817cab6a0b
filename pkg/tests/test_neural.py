import numpy as np
import pytest
import scipy.sparse as sp

from pushnet.appr import ApprMatrix, ApprParams, build_appr_matrix
from pushnet.errors import ConfigurationError, DomainError, NumericalError
from pushnet.graph import (
    NormalizationKind,
    l1_normalize_features,
    normalize_adjacency,
    row_l1_normalize,
)
from pushnet.lpmp import lpmp_propagate
from pushnet.neural import (
    DenseLayer,
    Model,
    ModelSpec,
    load_checkpoint,
    predict_labels,
    save_checkpoint,
    softmax,
)
from pushnet.neural import check_finite_gradients
from pushnet.propagation import Aggregator, PropagationCache, ScaleSet

from conftest import random_connected_graph


def toy_setup(n_target=12, d=5, c=3, scales=(0.2, 0.1), seed=3,
              norm=NormalizationKind.SYMMETRIC_SELF_LOOPS, normalize_rows=True):
    rng = np.random.default_rng(seed)
    g = random_connected_graph(rng, max_n=n_target)
    while g.n < 8:
        g = random_connected_graph(rng, max_n=n_target)
    w = normalize_adjacency(g, norm)
    mats = []
    for a in scales:
        raw = build_appr_matrix(w, ApprParams(a, 1e-5))
        m = row_l1_normalize(raw.matrix) if normalize_rows else raw.matrix
        mats.append(ApprMatrix(alpha=a, epsilon=1e-5, matrix=m))
    x = rng.random((g.n, d))
    x = l1_normalize_features(x)
    labels = rng.integers(0, c, size=g.n)
    # every class present so the loss touches all logit columns
    labels[:c] = np.arange(c)
    mask = np.arange(0, g.n, 2)
    return g, mats, x, labels, mask


def make_model(variant, aggregator, mats, d, c, hidden, dropout=0.0, l2=0.01, seed=11):
    scales = tuple(m.alpha for m in mats)
    scale_set = ScaleSet(matrices=list(mats), aggregator=Aggregator(aggregator))
    spec = ModelSpec(variant=variant, input_dim=d, num_classes=c, hidden=hidden,
                     scales=scales, aggregator=aggregator, dropout=dropout, l2=l2,
                     learning_rate=0.01)
    return Model.init(spec, scale_set, np.random.default_rng(seed))


class TestModelSpec:
    def test_pp_rejects_hidden(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(variant="pp", input_dim=4, num_classes=2, hidden=8, scales=(0.1,))

    def test_tpp_rejects_cat(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(variant="tpp", input_dim=4, num_classes=2, hidden=8,
                      scales=(0.1,), aggregator="cat")

    def test_unknown_variant(self):
        with pytest.raises(ConfigurationError):
            ModelSpec(variant="gcn", input_dim=4, num_classes=2, hidden=8, scales=(0.1,))

    def test_cat_widens_aggregated_width(self):
        spec = ModelSpec(variant="ptp", input_dim=4, num_classes=2, hidden=8,
                         scales=(0.2, 0.1, 0.05), aggregator="cat")
        assert spec.aggregated_width == 12


class TestForward:
    def test_pp_identity_matrix_zero_weights_uniform(self):
        n, c = 6, 4
        ident = ApprMatrix(0.2, 1e-5, sp.identity(n, format="csr"))
        scale_set = ScaleSet(matrices=[ident], aggregator=Aggregator.SUM)
        spec = ModelSpec(variant="pp", input_dim=3, num_classes=c, hidden=None,
                         scales=(0.2,), dropout=0.0)
        model = Model(spec, scale_set, [DenseLayer(w=np.zeros((3, c)), b=np.zeros(c))])
        out = model.forward(np.random.default_rng(0).random((n, 3)))
        np.testing.assert_allclose(out.probs, 1.0 / c)

    @pytest.mark.parametrize("variant,hidden", [("full", 7), ("ptp", 7),
                                                ("pp", None), ("tpp", 7)])
    def test_softmax_rows_sum_to_one(self, variant, hidden):
        g, mats, x, labels, mask = toy_setup()
        model = make_model(variant, "sum", mats, x.shape[1], 3, hidden)
        out = model.forward(x, mode="eval")
        np.testing.assert_allclose(out.probs.sum(axis=1), 1.0, atol=1e-12)

    def test_full_identity_weights_reproduce_direct_push(self):
        # identity transforms collapse the model to plain propagation,
        # which must match the asynchronous feature push
        rng = np.random.default_rng(23)
        g = random_connected_graph(rng, max_n=30)
        w = normalize_adjacency(g, NormalizationKind.RANDOM_WALK)
        alpha, eps = 0.15, 1e-6
        raw = build_appr_matrix(w, ApprParams(alpha, eps))
        scale_set = ScaleSet(matrices=[raw], aggregator=Aggregator.SUM)
        d = 4
        spec = ModelSpec(variant="full", input_dim=d, num_classes=d, hidden=d,
                         scales=(alpha,), epsilon=eps, dropout=0.0, l2=0.0)
        model = Model(spec, scale_set, [
            DenseLayer(w=np.eye(d), b=np.zeros(d)),
            DenseLayer(w=np.eye(d), b=np.zeros(d)),
        ])
        x = rng.random((g.n, d))  # nonnegative, so the hidden ReLU is inert
        out = model.forward(x, mode="eval")
        direct = lpmp_propagate(w, x, alpha, eps)
        np.testing.assert_allclose(out.logits, direct.h, atol=1e-12)

    def test_cache_rejected_for_trainable_pre_push(self):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("full", "sum", mats, x.shape[1], 3, 7)
        with pytest.raises(ConfigurationError):
            model.forward(x, cache=PropagationCache())

    def test_cache_transparent_for_eval(self):
        g, mats, x, labels, mask = toy_setup()
        for variant, hidden in (("ptp", 7), ("pp", None)):
            model = make_model(variant, "sum", mats, x.shape[1], 3, hidden)
            without = model.forward(x, mode="eval")
            cache = PropagationCache()
            with_cache = model.forward(x, mode="eval", cache=cache)
            again = model.forward(x, mode="eval", cache=cache)
            np.testing.assert_array_equal(without.probs, with_cache.probs)
            np.testing.assert_array_equal(without.probs, again.probs)
            assert cache.recompute_count == 1

    def test_prediction_shift_invariance(self):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("pp", "sum", mats, x.shape[1], 3, None)
        out = model.forward(x, mode="eval")
        shifted = out.logits + 7.25
        np.testing.assert_array_equal(predict_labels(softmax(out.logits)),
                                      predict_labels(softmax(shifted)))

    def test_train_mode_needs_rng_when_dropout_on(self):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("pp", "sum", mats, x.shape[1], 3, None, dropout=0.5)
        with pytest.raises(ConfigurationError):
            model.forward(x, mode="train")


class TestLossAndGradients:
    def test_uniform_logits_cross_entropy(self):
        g, mats, x, labels, mask = toy_setup()
        c = 3
        scale_set = ScaleSet(matrices=list(mats), aggregator=Aggregator.SUM)
        spec = ModelSpec(variant="pp", input_dim=x.shape[1], num_classes=c,
                         hidden=None, scales=tuple(m.alpha for m in mats),
                         dropout=0.0, l2=0.0)
        model = Model(spec, scale_set,
                      [DenseLayer(w=np.zeros((x.shape[1], c)), b=np.zeros(c))])
        fwd = model.forward(x, mode="train")
        loss, _ = model.loss_and_gradients(fwd, labels, mask)
        assert abs(loss - np.log(c)) <= 1e-12

    def test_l2_zero_weight_gradient(self):
        g, mats, x, labels, mask = toy_setup()
        c = 3
        scale_set = ScaleSet(matrices=list(mats), aggregator=Aggregator.SUM)
        spec = ModelSpec(variant="pp", input_dim=x.shape[1], num_classes=c,
                         hidden=None, scales=tuple(m.alpha for m in mats),
                         dropout=0.0, l2=5.0)
        model = Model(spec, scale_set,
                      [DenseLayer(w=np.zeros((x.shape[1], c)), b=np.zeros(c))])
        fwd = model.forward(x, mode="train")
        _, grads_l2 = model.loss_and_gradients(fwd, labels, mask)
        spec0 = ModelSpec(variant="pp", input_dim=x.shape[1], num_classes=c,
                          hidden=None, scales=tuple(m.alpha for m in mats),
                          dropout=0.0, l2=0.0)
        model0 = Model(spec0, scale_set,
                       [DenseLayer(w=np.zeros((x.shape[1], c)), b=np.zeros(c))])
        _, grads0 = model0.loss_and_gradients(model0.forward(x, mode="train"), labels, mask)
        np.testing.assert_array_equal(grads_l2["g0.w"], grads0["g0.w"])

    def test_label_out_of_range(self):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("pp", "sum", mats, x.shape[1], 3, None)
        bad = labels.copy()
        bad[mask[0]] = 9
        fwd = model.forward(x, mode="train")
        with pytest.raises(DomainError):
            model.loss_and_gradients(fwd, bad, mask)

    def test_non_finite_gradient_detected(self):
        with pytest.raises(NumericalError):
            check_finite_gradients({"w": np.array([1.0, np.nan])})

    @pytest.mark.parametrize("variant,aggregator,hidden", [
        ("full", "sum", 7), ("full", "max", 7), ("full", "cat", 7),
        ("ptp", "sum", 7), ("ptp", "max", 7), ("ptp", "cat", 7),
        ("pp", "sum", None), ("pp", "max", None), ("pp", "cat", None),
        ("tpp", "sum", 7), ("tpp", "max", 7),
    ])
    def test_gradients_match_finite_differences(self, variant, aggregator, hidden):
        g, mats, x, labels, mask = toy_setup()
        model = make_model(variant, aggregator, mats, x.shape[1], 3, hidden)
        fwd = model.forward(x, mode="train")
        _, grads = model.loss_and_gradients(fwd, labels, mask)
        step = 1e-6
        for name, p in model.params():
            fd = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            while not it.finished:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + step
                up = model.loss(model.forward(x, mode="train"), labels, mask)
                p[idx] = orig - step
                down = model.loss(model.forward(x, mode="train"), labels, mask)
                p[idx] = orig
                fd[idx] = (up - down) / (2 * step)
                it.iternext()
            err = np.abs(grads[name] - fd)
            tol = 1e-4 * np.maximum(np.abs(grads[name]), np.abs(fd)) + 1e-9
            assert np.all(err <= tol), f"{name}: worst {err.max():.2e}"


class TestDropout:
    def test_unbiased_mean(self):
        from pushnet.neural import _dropout_mask
        rng = np.random.default_rng(77)
        base = np.full((4, 5), 2.0)
        total = np.zeros_like(base)
        trials = 100_000
        for _ in range(trials):
            total += base * _dropout_mask(rng, base.shape, 0.5)
        mean = total / trials
        assert np.abs(mean - base).max() / 2.0 <= 0.01

    def test_sparse_dropout_keeps_structure(self):
        from pushnet.neural import _sparse_dropout
        rng = np.random.default_rng(78)
        m = sp.random(30, 30, density=0.2, random_state=5, format="csr")
        dropped = _sparse_dropout(m, 0.4, rng)
        assert np.array_equal(dropped.indptr, m.indptr)
        assert np.array_equal(dropped.indices, m.indices)
        surviving = dropped.data != 0
        np.testing.assert_allclose(dropped.data[surviving],
                                   m.data[surviving] / 0.6, atol=1e-15)

    def test_train_dropout_changes_forward_but_eval_does_not(self):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("full", "sum", mats, x.shape[1], 3, 7, dropout=0.5)
        rng = np.random.default_rng(79)
        a = model.forward(x, mode="train", rng=rng)
        b = model.forward(x, mode="train", rng=rng)
        assert not np.array_equal(a.probs, b.probs)
        e1 = model.forward(x, mode="eval")
        e2 = model.forward(x, mode="eval")
        np.testing.assert_array_equal(e1.probs, e2.probs)


class TestCheckpoint:
    def test_round_trip_exact(self, tmp_path):
        g, mats, x, labels, mask = toy_setup()
        model = make_model("ptp", "cat", mats, x.shape[1], 3, 7)
        path = tmp_path / "ckpt.json"
        save_checkpoint(path, model)
        back = load_checkpoint(path, model.scale_set)
        assert back.spec == model.spec
        for (na, pa), (nb, pb) in zip(model.params(), back.params()):
            assert na == nb
            assert np.array_equal(pa, pb)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.json"
        path.write_text('{"something": 1}')
        g, mats, x, labels, mask = toy_setup()
        scale_set = ScaleSet(matrices=list(mats), aggregator=Aggregator.SUM)
        with pytest.raises(ConfigurationError):
            load_checkpoint(path, scale_set)
