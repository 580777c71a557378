import numpy as np
import pytest

from perfquant.errors import PredictError, TrainingError
from perfquant.gbt import GbtClassifier, GbtParams

FAST = GbtParams(n_rounds=30, max_depth=3, learning_rate=0.2)


def separable(rng, n=60, d=5):
    X = rng.normal(size=(n, d))
    y = ["pos" if x > 0 else "neg" for x in X[:, 2]]
    return X, y


def three_blobs(rng, n_per=40, d=4):
    X, y = [], []
    for k, name in enumerate(["a", "b", "c"]):
        X.append(rng.normal(loc=3.0 * k, scale=0.5, size=(n_per, d)))
        y += [name] * n_per
    return np.vstack(X), y


class TestTraining:
    def test_separable_reaches_perfect_training_accuracy(self, rng):
        X, y = separable(rng)
        model = GbtClassifier.train(X, y, FAST)
        assert model.predict_label(X) == y

    def test_single_class_rejected(self, rng):
        X = rng.normal(size=(10, 3))
        with pytest.raises(TrainingError):
            GbtClassifier.train(X, ["same"] * 10, FAST)

    def test_non_finite_features_rejected(self):
        X = np.array([[0.0, np.nan], [1.0, 2.0]])
        with pytest.raises(TrainingError):
            GbtClassifier.train(X, ["a", "b"], FAST)

    def test_row_permutation_invariance(self, rng):
        X, y = separable(rng, n=80)
        model = GbtClassifier.train(X, y, FAST, seed=0)
        perm = rng.permutation(len(y))
        model_p = GbtClassifier.train(X[perm], [y[i] for i in perm], FAST, seed=0)
        Xq = rng.normal(size=(50, X.shape[1]))
        assert np.allclose(model.predict_proba(Xq), model_p.predict_proba(Xq),
                           rtol=1e-9, atol=1e-12)

    def test_deterministic_across_seeds_and_runs(self, rng):
        X, y = three_blobs(rng)
        a = GbtClassifier.train(X, y, FAST, seed=0)
        b = GbtClassifier.train(X, y, FAST, seed=99)
        assert a.to_dict() == b.to_dict()

    def test_three_class(self, rng):
        X, y = three_blobs(rng)
        model = GbtClassifier.train(X, y, FAST)
        assert model.classes == ["a", "b", "c"]
        assert model.predict_label(X) == y


class TestPrediction:
    def test_probabilities_normalized(self, rng):
        X, y = three_blobs(rng)
        model = GbtClassifier.train(X, y, FAST)
        prob = model.predict_proba(rng.normal(size=(200, X.shape[1])))
        assert np.all(prob >= 0)
        assert np.allclose(prob.sum(axis=1), 1.0, atol=1e-9)

    def test_training_point_recall(self, rng):
        X, y = separable(rng)
        model = GbtClassifier.train(X, y, FAST)
        for k in range(len(y)):
            assert model.predict_label(X[k])[0] == y[k]

    def test_duplicate_row_gets_identical_prediction(self, rng):
        X, y = separable(rng)
        model = GbtClassifier.train(X, y, FAST)
        assert np.array_equal(model.predict_proba(X[7]), model.predict_proba(X[7]))

    def test_non_finite_input_rejected(self, rng):
        X, y = separable(rng)
        model = GbtClassifier.train(X, y, FAST)
        with pytest.raises(PredictError):
            model.predict_proba(np.array([np.inf] + [0.0] * (X.shape[1] - 1)))


class TestSerialization:
    def test_json_round_trip(self, tmp_path, rng):
        X, y = three_blobs(rng)
        model = GbtClassifier.train(X, y, FAST)
        path = tmp_path / "model.json"
        model.save(path)
        back = GbtClassifier.load(path)
        Xq = rng.normal(size=(30, X.shape[1]))
        assert np.array_equal(model.predict_proba(Xq), back.predict_proba(Xq))
        assert back.classes == model.classes

    def test_document_is_self_describing(self, rng):
        X, y = separable(rng, n=20)
        doc = GbtClassifier.train(X, y, FAST).to_dict()
        assert doc["format_version"] == 1
        assert doc["model"] == "gradient_boosted_trees"
        assert doc["hyper_parameters"]["max_depth"] == FAST.max_depth
        assert len(doc["trees"]) == FAST.n_rounds


class TestRegularization:
    def test_depth_limit_respected(self, rng):
        X, y = separable(rng, n=200)
        model = GbtClassifier.train(X, y, GbtParams(n_rounds=5, max_depth=2))
        for stage in model.trees:
            for tree in stage:
                # depth-2 tree: at most 3 internal + 4 leaf nodes
                assert len(tree.feature) <= 7

    def test_min_samples_leaf(self, rng):
        X, y = separable(rng, n=30)
        params = GbtParams(n_rounds=3, max_depth=6, min_samples_leaf=10)
        model = GbtClassifier.train(X, y, params)

        def leaf_counts(tree, node, rows):
            if tree.feature[node] < 0:
                return [len(rows)]
            mask = X[rows, tree.feature[node]] <= tree.threshold[node]
            return (leaf_counts(tree, tree.left[node], rows[mask])
                    + leaf_counts(tree, tree.right[node], rows[~mask]))

        for stage in model.trees:
            for tree in stage:
                for count in leaf_counts(tree, 0, np.arange(len(y))):
                    assert count >= 10
