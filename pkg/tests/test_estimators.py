import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.model_selection import cross_val_score
from sklearn.pipeline import make_pipeline

from pangram_fusion.estimators import BaselineNetClassifier, ProjectionFusionClassifier
from pangram_fusion.preprocess import Preprocessor


def make_data(seed, n=240, d=8, shift=3.0):
    rng = np.random.default_rng(seed)
    y = rng.integers(0, 2, size=n)
    X = rng.normal(size=(n, d)) + shift * y[:, None] / np.sqrt(d)
    return X, y


class TestBaselineEstimator:
    def test_fit_predict_shapes(self):
        X, y = make_data(0)
        clf = BaselineNetClassifier(num_epochs=20, learning_rate=0.3, seed=1)
        clf.fit(X, y)
        proba = clf.predict_proba(X)
        assert proba.shape == (len(X), 2)
        np.testing.assert_allclose(proba.sum(axis=1), 1.0)
        preds = clf.predict(X)
        assert set(np.unique(preds)) <= {0, 1}

    def test_learns_separable_data(self):
        X, y = make_data(1)
        clf = BaselineNetClassifier(num_epochs=30, learning_rate=0.5, seed=2)
        assert clf.fit(X, y).score(X, y) > 0.85

    def test_get_params_round_trip(self):
        clf = BaselineNetClassifier(learning_rate=0.25, model="shallow")
        params = clf.get_params()
        assert params["learning_rate"] == 0.25
        cloned = clone(clf)
        assert cloned.get_params() == params

    def test_unfitted_raises(self):
        with pytest.raises(NotFittedError):
            BaselineNetClassifier().predict_proba(np.zeros((2, 3)))

    def test_sklearn_cross_val(self):
        # needs enough rows that the internal validation slice is
        # informative (a saturated tiny slice freezes the epoch-0 weights)
        X, y = make_data(3, n=600)
        clf = BaselineNetClassifier(num_epochs=30, learning_rate=0.5)
        scores = cross_val_score(clf, X, y, cv=3)
        assert scores.shape == (3,)
        assert scores.mean() > 0.85

    def test_pipeline_with_preprocessor(self):
        X, y = make_data(4)
        X = np.hstack([X, X[:, :1] * 2.0])  # redundant correlated column
        pipe = make_pipeline(
            Preprocessor(corr_threshold=0.85, scaler="minmax"),
            BaselineNetClassifier(num_epochs=15, learning_rate=0.3),
        )
        pipe.fit(X, y)
        assert pipe.score(X, y) > 0.8

    def test_explicit_eval_set(self):
        X, y = make_data(5)
        Xv, yv = make_data(6, n=60)
        clf = BaselineNetClassifier(num_epochs=10, learning_rate=0.3)
        clf.fit(X, y, eval_set=(Xv, yv))
        assert len(clf.history_.epochs) >= 1

    def test_string_labels(self):
        X, y = make_data(7)
        labels = np.where(y == 1, "pd", "control")
        clf = BaselineNetClassifier(num_epochs=10, learning_rate=0.3)
        clf.fit(X, labels)
        assert set(clf.predict(X)) <= {"pd", "control"}
        # positive class is classes_[1] = "pd" (lexicographic)
        assert list(clf.classes_) == ["control", "pd"]


class TestFusionEstimator:
    def test_fit_predict(self):
        X, y = make_data(8, d=10)
        clf = ProjectionFusionClassifier(src_dim=4, num_epochs=25,
                                         learning_rate=0.3, seed=3)
        clf.fit(X, y)
        assert clf.score(X, y) > 0.8
        assert clf.params_.spec.d_src == 4
        assert clf.params_.spec.d_tgt == 6

    def test_missing_src_dim_rejected(self):
        X, y = make_data(9, d=6)
        with pytest.raises(ValueError, match="src_dim"):
            ProjectionFusionClassifier(num_epochs=5).fit(X, y)

    def test_determinism(self):
        X, y = make_data(10, d=8)
        kw = dict(src_dim=4, num_epochs=10, learning_rate=0.2,
                  seed=5, random_state=7)
        a = ProjectionFusionClassifier(**kw).fit(X, y)
        b = ProjectionFusionClassifier(**kw).fit(X, y)
        np.testing.assert_array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_loss_weight_params_exposed(self):
        clf = ProjectionFusionClassifier(src_dim=3, w_pred=87, w_cos=68, w_rec=48)
        params = clf.get_params()
        assert (params["w_pred"], params["w_cos"], params["w_rec"]) == (87, 68, 48)
