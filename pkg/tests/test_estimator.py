"""scikit-learn estimator wrappers: API conformance and end-to-end behaviour."""

import numpy as np
import numpy.testing as npt
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.pipeline import make_pipeline

import supercon as sc
from supercon.estimator import ContrastiveEncoder, SuperConClassifier


def blob_arrays(counts=(80, 30), seed=0):
    data = sc.generate_blobs(list(counts), dims=3, class_separation=5.0, cluster_spread=0.8, seed=seed)
    return data.samples, data.labels


FAST = dict(stage1_epochs=4, stage2_epochs=4, batch_size=16, stage2_lr=0.3, random_state=0)


class TestSuperConClassifier:
    def test_get_set_params_round_trip(self):
        clf = SuperConClassifier(**FAST)
        params = clf.get_params()
        assert params["stage1_epochs"] == 4
        clf.set_params(stage1_epochs=7)
        assert clf.get_params()["stage1_epochs"] == 7

    def test_clone(self):
        clf = SuperConClassifier(strategy="SuperConCE", **FAST)
        cloned = clone(clf)
        assert cloned.get_params() == clf.get_params()

    def test_fit_predict_on_separable_blobs(self):
        X, y = blob_arrays()
        clf = SuperConClassifier(**FAST).fit(X, y)
        preds = clf.predict(X)
        assert preds.shape == y.shape
        assert (preds == y).mean() > 0.8

    def test_predict_proba_rows_sum_to_one(self):
        X, y = blob_arrays()
        clf = SuperConClassifier(**FAST).fit(X, y)
        probs = clf.predict_proba(X)
        npt.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-12)

    def test_non_contiguous_labels_are_mapped(self):
        X, y = blob_arrays()
        relabeled = np.where(y == 0, 3, 7)
        clf = SuperConClassifier(**FAST).fit(X, relabeled)
        npt.assert_array_equal(clf.classes_, [3, 7])
        assert set(np.unique(clf.predict(X))) <= {3, 7}

    def test_unfitted_predict_rejected(self):
        with pytest.raises(NotFittedError):
            SuperConClassifier().predict(np.zeros((2, 3)))

    def test_feature_count_validated(self):
        X, y = blob_arrays()
        clf = SuperConClassifier(**FAST).fit(X, y)
        with pytest.raises(ValueError):
            clf.predict(np.zeros((2, 9)))

    def test_single_class_rejected(self):
        X = np.random.default_rng(0).normal(size=(10, 3))
        with pytest.raises(ValueError):
            SuperConClassifier(**FAST).fit(X, np.zeros(10))

    @pytest.mark.parametrize("strategy", ["Vanilla", "FocalLoss", "ROS", "SuperConCE"])
    def test_other_strategies_fit(self, strategy):
        X, y = blob_arrays(counts=(40, 20))
        clf = SuperConClassifier(strategy=strategy, **FAST).fit(X, y)
        assert clf.predict(X).shape == y.shape

    def test_transform_exposes_features(self):
        X, y = blob_arrays()
        clf = SuperConClassifier(**FAST).fit(X, y)
        reps = clf.transform(X)
        assert reps.shape == (len(X), 32)

    def test_deterministic_per_random_state(self):
        X, y = blob_arrays()
        a = SuperConClassifier(**FAST).fit(X, y).predict_proba(X)
        b = SuperConClassifier(**FAST).fit(X, y).predict_proba(X)
        npt.assert_array_equal(a, b)


class TestContrastiveEncoder:
    def test_transform_shapes(self):
        X, y = blob_arrays()
        enc = ContrastiveEncoder(stage1_epochs=4, batch_size=16, random_state=0).fit(X, y)
        assert enc.transform(X).shape == (len(X), 32)

    def test_projection_output_unit_rows(self):
        X, y = blob_arrays()
        enc = ContrastiveEncoder(
            stage1_epochs=4, batch_size=16, output="projection", random_state=0
        ).fit(X, y)
        z = enc.transform(X)
        assert z.shape == (len(X), 16)
        npt.assert_allclose(np.linalg.norm(z, axis=1), 1.0, atol=1e-12)

    def test_composes_in_pipeline(self):
        from sklearn.linear_model import LogisticRegression

        X, y = blob_arrays()
        pipeline = make_pipeline(
            ContrastiveEncoder(stage1_epochs=4, batch_size=16, random_state=0),
            LogisticRegression(max_iter=500),
        )
        pipeline.fit(X, y)
        assert pipeline.score(X, y) > 0.8

    def test_unfitted_transform_rejected(self):
        with pytest.raises(NotFittedError):
            ContrastiveEncoder().transform(np.zeros((2, 3)))
