import numpy as np
import pytest

from cuisine_infer.nnet import (
    DEFAULT_GRIDS,
    FeatureDataset,
    NetworkSpec,
    TrainConfig,
    accuracy,
    backward,
    cross_entropy,
    forward,
    grid_search,
    init_params,
    load_params,
    predict_topk,
    save_params,
    standardize,
    topk_from_probs,
    train,
)


def _toy_dataset(n=60, seed=0, n_classes=3):
    """Two feature blocks whose sum of first components encodes the class."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, n_classes, size=n)
    fa = rng.normal(0, 0.1, size=(n, 4))
    fb = rng.normal(0, 0.1, size=(n, 3))
    fa[:, 0] += labels
    fb[:, 0] -= 0.5 * labels
    return FeatureDataset([f"r{i}" for i in range(n)],
                          {"alpha": fa, "beta": fb}, labels)


def _spec(variant="residual_deep", n_classes=3, branch_hidden=8,
          trunk_hidden=(16, 8)):
    return NetworkSpec(branches=(("alpha", 4), ("beta", 3)),
                       branch_hidden=branch_hidden, trunk_hidden=trunk_hidden,
                       n_classes=n_classes, variant=variant)


class TestForward:
    @pytest.mark.parametrize("variant", ["residual_deep", "deep", "shallow", "logistic"])
    def test_probs_are_distributions(self, variant):
        ds = _toy_dataset()
        spec = _spec(variant)
        params = init_params(spec, seed=1)
        probs, _ = forward(params, spec, ds.features)
        assert probs.shape == (60, 3)
        assert np.allclose(probs.sum(axis=1), 1.0)
        assert (probs >= 0).all()

    def test_zero_weight_logistic_uniform(self):
        ds = _toy_dataset(n_classes=10)
        spec = NetworkSpec(branches=(("alpha", 4), ("beta", 3)),
                           n_classes=10, variant="logistic")
        params = {k: np.zeros_like(v) for k, v in init_params(spec, 0).items()}
        probs, _ = forward(params, spec, ds.features)
        assert np.allclose(probs, 0.1)

    def test_residual_skip_passes_h1_when_w2_zero(self):
        ds = _toy_dataset(n=5)
        spec = _spec("residual_deep")
        params = init_params(spec, seed=2)
        for name in ("alpha", "beta"):
            params[f"branch/{name}/W2"] = np.zeros_like(params[f"branch/{name}/W2"])
            params[f"branch/{name}/b2"] = np.zeros_like(params[f"branch/{name}/b2"])
        _, cache = forward(params, spec, ds.features)
        # with W2 = 0 the second layer emits zeros, so the skip makes the
        # branch output exactly h1; the plain deep variant would emit zeros
        for name in ("alpha", "beta"):
            assert np.array_equal(cache["branch_out"][name], cache[f"{name}/h1"])
        deep = _spec("deep")
        _, dcache = forward(params, deep, ds.features)
        assert not dcache["branch_out"]["alpha"].any()

    def test_shape_mismatch_raises(self):
        ds = _toy_dataset(n=4)
        spec = _spec()
        params = init_params(spec, 0)
        bad = dict(ds.features)
        bad["beta"] = bad["beta"][:, :2]
        with pytest.raises(ValueError):
            forward(params, spec, bad)


class TestGradients:
    def test_softmax_ce_output_gradient_identity(self):
        ds = _toy_dataset(n=8)
        spec = _spec("logistic")
        params = init_params(spec, 3)
        probs, cache = forward(params, spec, ds.features)
        onehot = np.zeros((8, 3))
        onehot[np.arange(8), ds.labels] = 1.0
        grads = backward(params, spec, cache, onehot)
        # d loss / d bias = mean over samples of (p - y)
        assert np.allclose(grads["out/b"], (probs - onehot).mean(axis=0) * 8 / 8)

    @pytest.mark.parametrize("variant", ["residual_deep", "deep", "shallow", "logistic"])
    def test_finite_difference(self, variant):
        rng = np.random.default_rng(4)
        n = 6
        labels = rng.integers(0, 3, n)
        feats = {"alpha": rng.normal(size=(n, 3)), "beta": rng.normal(size=(n, 2))}
        spec = NetworkSpec(branches=(("alpha", 3), ("beta", 2)), branch_hidden=4,
                           trunk_hidden=(5, 4), n_classes=3, variant=variant)
        params = init_params(spec, 5)
        onehot = np.zeros((n, 3))
        onehot[np.arange(n), labels] = 1.0
        _, cache = forward(params, spec, feats)
        grads = backward(params, spec, cache, onehot)
        eps = 1e-6
        for key in sorted(grads):
            arr = params[key]
            flat = arr.ravel()
            for j in range(0, flat.size, max(1, flat.size // 5)):
                orig = flat[j]
                flat[j] = orig + eps
                p1, _ = forward(params, spec, feats)
                l1 = cross_entropy(p1, onehot)
                flat[j] = orig - eps
                p2, _ = forward(params, spec, feats)
                l2 = cross_entropy(p2, onehot)
                flat[j] = orig
                numeric = (l1 - l2) / (2 * eps)
                assert grads[key].ravel()[j] == pytest.approx(numeric, abs=1e-4)


class TestTraining:
    def test_overfits_toy_set(self):
        ds = _toy_dataset(n=60, seed=1)
        spec = _spec("residual_deep")
        cfg = TrainConfig(batch_size=16, learning_rate=0.1, epochs=200, seed=0)
        params, curve = train(ds, spec, cfg)
        assert accuracy(params, spec, ds) == 1.0
        assert curve[-1][1] < curve[0][1]

    def test_lr_zero_is_noop(self):
        ds = _toy_dataset(n=20)
        spec = _spec()
        cfg = TrainConfig(learning_rate=0.0, epochs=3, seed=6)
        params, _ = train(ds, spec, cfg)
        init = init_params(spec, 6)
        for key in init:
            assert np.array_equal(params[key], init[key])

    def test_val_loss_tracked(self):
        ds = _toy_dataset(n=50)
        val = _toy_dataset(n=20, seed=9)
        spec = _spec()
        params, curve = train(ds, spec, TrainConfig(epochs=5, seed=0), val=val)
        assert all(np.isfinite(row[2]) for row in curve)

    def test_deterministic(self):
        ds = _toy_dataset(n=30)
        spec = _spec()
        cfg = TrainConfig(epochs=5, seed=11, dropout=0.2)
        p1, c1 = train(ds, spec, cfg)
        p2, c2 = train(ds, spec, cfg)
        assert np.array_equal(np.array(c1), np.array(c2), equal_nan=True)
        for key in p1:
            assert np.array_equal(p1[key], p2[key])

    def test_class_weights_change_solution(self):
        ds = _toy_dataset(n=40)
        spec = _spec()
        p1, _ = train(ds, spec, TrainConfig(epochs=5, seed=0))
        p2, _ = train(ds, spec, TrainConfig(epochs=5, seed=0, class_weights=True))
        assert any(not np.array_equal(p1[k], p2[k]) for k in p1)

    def test_branch_order_permutation_invariant(self):
        ds = _toy_dataset(n=25)
        swapped = FeatureDataset(ds.ids,
                                 {"beta": ds.features["beta"],
                                  "alpha": ds.features["alpha"]},
                                 ds.labels)
        spec_a = NetworkSpec(branches=(("alpha", 4), ("beta", 3)), branch_hidden=8,
                             trunk_hidden=(16, 8), n_classes=3)
        spec_b = NetworkSpec(branches=(("beta", 3), ("alpha", 4)), branch_hidden=8,
                             trunk_hidden=(16, 8), n_classes=3)
        cfg = TrainConfig(epochs=4, seed=3)
        pa, _ = train(ds, spec_a, cfg)
        pb, _ = train(swapped, spec_b, cfg)
        prob_a, _ = forward(pa, spec_a, ds.features)
        prob_b, _ = forward(pb, spec_b, swapped.features)
        assert np.array_equal(prob_a, prob_b)


class TestPrediction:
    def test_topk_tie_rule(self):
        probs = np.array([[0.25, 0.25, 0.4, 0.1],
                          [0.1, 0.4, 0.4, 0.1]])
        top = topk_from_probs(probs, 3)
        assert top[0].tolist() == [2, 0, 1]   # tie 0/1 broken by class code
        assert top[1].tolist() == [1, 2, 0]

    def test_topk_bounds(self):
        ds = _toy_dataset(n=4)
        spec = _spec()
        params = init_params(spec, 0)
        with pytest.raises(ValueError):
            predict_topk(params, spec, ds.features, 0)
        with pytest.raises(ValueError):
            predict_topk(params, spec, ds.features, 4)
        top2 = predict_topk(params, spec, ds.features, 2)
        assert top2.shape == (4, 2)

    def test_logistic_separates_linear_classes(self):
        rng = np.random.default_rng(7)
        n = 80
        labels = rng.integers(0, 2, n)
        feats = {"alpha": rng.normal(0, 0.05, (n, 2)) + labels[:, None]}
        ds = FeatureDataset([f"r{i}" for i in range(n)], feats, labels)
        spec = NetworkSpec(branches=(("alpha", 2),), n_classes=2, variant="logistic")
        params, _ = train(ds, spec, TrainConfig(epochs=60, learning_rate=0.5,
                                                batch_size=16, seed=0))
        assert accuracy(params, spec, ds) == 1.0


class TestStandardize:
    def test_train_stats_applied_to_val(self):
        tr = _toy_dataset(n=50, seed=0)
        va = _toy_dataset(n=20, seed=1)
        trz, vaz = standardize(tr, va)
        for name in trz.features:
            assert np.allclose(trz.features[name].mean(axis=0), 0, atol=1e-9)
            assert not np.allclose(vaz.features[name].mean(axis=0), 0, atol=1e-3)

    def test_constant_column_safe(self):
        feats = {"alpha": np.ones((10, 2))}
        ds = FeatureDataset([f"r{i}" for i in range(10)], feats, np.zeros(10, int))
        out = standardize(ds)
        assert np.isfinite(out.features["alpha"]).all()


class TestGridSearch:
    def test_default_grid_size(self):
        assert len(DEFAULT_GRIDS["dropout"]) == 4
        assert len(DEFAULT_GRIDS["batch_size"]) == 4
        assert len(DEFAULT_GRIDS["learning_rate"]) == 4
        assert DEFAULT_GRIDS["dropout"] == (0.0, 0.1, 0.2, 0.3)
        assert DEFAULT_GRIDS["batch_size"] == (128, 256, 512, 1024)
        assert DEFAULT_GRIDS["learning_rate"] == (0.001, 0.01, 0.1, 1.0)

    def test_single_cell_grid(self):
        ds = _toy_dataset(n=50)
        spec = _spec()
        grids = {"dropout": (0.0,), "batch_size": (16,), "learning_rate": (0.1,)}
        best, table = grid_search(ds, spec, grids=grids, folds=2, epochs=10, seed=0)
        assert len(table) == 1
        assert best == table[0][0]
        assert 0.0 <= table[0][1] <= 1.0

    def test_full_grid_row_count(self):
        ds = _toy_dataset(n=40)
        spec = _spec("logistic")
        grids = {"dropout": (0.0, 0.1), "batch_size": (16, 32),
                 "learning_rate": (0.1, 0.5)}
        _, table = grid_search(ds, spec, grids=grids, folds=2, epochs=2, seed=0)
        assert len(table) == 8


class TestSerialization:
    @pytest.mark.parametrize("variant", ["residual_deep", "logistic"])
    def test_round_trip(self, tmp_path, variant):
        spec = _spec(variant)
        params = init_params(spec, 13)
        path = tmp_path / "model.txt"
        save_params(path, spec, params)
        spec2, params2 = load_params(path)
        assert spec2 == spec
        assert sorted(params2) == sorted(params)
        for key in params:
            assert np.array_equal(params[key], params2[key])

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("something else\n")
        with pytest.raises(ValueError):
            load_params(p)


def test_spec_validation():
    with pytest.raises(ValueError):
        NetworkSpec(branches=(("a", 3),), variant="transformer")
    with pytest.raises(ValueError):
        NetworkSpec(branches=(("a", 0),))
    with pytest.raises(ValueError):
        TrainConfig(dropout=1.0)


def test_dataset_helpers():
    ds = _toy_dataset(n=10)
    sub = ds.subset([0, 2, 4])
    assert sub.ids == ["r0", "r2", "r4"]
    assert sub.features["alpha"].shape == (3, 4)
    dropped = ds.drop_block("beta")
    assert list(dropped.features) == ["alpha"]
    with pytest.raises(KeyError):
        ds.drop_block("gamma")
    assert ds.spec_branches() == (("alpha", 4), ("beta", 3))
