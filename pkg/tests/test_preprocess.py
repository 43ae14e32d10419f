import numpy as np
import pytest

from pangram_fusion.preprocess import (
    PreprocessPlan,
    Preprocessor,
    fit_apply_scaler,
    fit_plan,
    prune_correlated,
    resample,
)


class TestPruneCorrelated:
    def test_affine_copy_dropped(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=50)
        train = np.column_stack([x, 2 * x + 3])
        assert prune_correlated(train, 0.85) == [0]

    def test_independent_noise_kept(self):
        rng = np.random.default_rng(1)
        train = rng.normal(size=(200, 6))
        # oracle: confirm every pairwise |r| is actually below threshold
        r = np.corrcoef(train.T)
        assert np.abs(r - np.eye(6)).max() < 0.85
        assert prune_correlated(train, 0.85) == [0, 1, 2, 3, 4, 5]

    def test_constant_column_dropped(self):
        rng = np.random.default_rng(2)
        train = np.column_stack([np.full(30, 7.0), rng.normal(size=30)])
        assert prune_correlated(train, 0.85) == [1]

    def test_keep_first_order(self):
        rng = np.random.default_rng(3)
        x = rng.normal(size=40)
        y = rng.normal(size=40)
        train = np.column_stack([x, y, x + 0.01 * rng.normal(size=40)])
        assert prune_correlated(train, 0.85) == [0, 1]

    def test_matches_numpy_corrcoef(self):
        rng = np.random.default_rng(4)
        base = rng.normal(size=(100, 4))
        extra = base[:, 0] * 0.9 + 0.1 * rng.normal(size=100)
        train = np.column_stack([base, extra])
        kept = prune_correlated(train, 0.85)
        r = np.corrcoef(train.T)
        for j in range(train.shape[1]):
            if j in kept:
                earlier = [k for k in kept if k < j]
                assert all(abs(r[j, k]) <= 0.85 for k in earlier)
            else:
                earlier = [k for k in kept if k < j]
                assert any(abs(r[j, k]) > 0.85 for k in earlier)

    def test_single_row_errors(self):
        with pytest.raises(ValueError, match="2 rows"):
            prune_correlated(np.ones((1, 3)), 0.85)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        train = rng.normal(size=(60, 10))
        assert prune_correlated(train, 0.9) == prune_correlated(train, 0.9)


class TestScaling:
    def test_minmax_example(self):
        out = fit_apply_scaler(np.array([[0.0], [5.0], [10.0]]), method="minmax")
        np.testing.assert_allclose(out[:, 0], [0.0, 0.5, 1.0])

    def test_zscore_population_std(self):
        out = fit_apply_scaler(np.array([[2.0], [4.0], [6.0]]), method="zscore")
        assert out.mean() == pytest.approx(0.0)
        assert out.std() == pytest.approx(1.0)  # population (ddof=0)

    def test_minmax_extends_beyond_train_range(self):
        train = np.array([[0.0], [10.0]])
        test = np.array([[20.0]])
        _, scaled_test = fit_apply_scaler(train, test, method="minmax")
        assert scaled_test[0, 0] == pytest.approx(2.0)  # no clipping

    def test_constant_column_maps_to_zero(self):
        train = np.full((5, 2), 3.0)
        train[:, 1] = [1, 2, 3, 4, 5]
        out = fit_apply_scaler(train, method="minmax")
        assert np.all(out[:, 0] == 0.0)

    def test_none_is_identity(self):
        rng = np.random.default_rng(0)
        x = rng.normal(size=(4, 3))
        np.testing.assert_array_equal(fit_apply_scaler(x, method="none"), x)

    def test_rank_order_preserved(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 2))
        for method in ("zscore", "minmax"):
            out = fit_apply_scaler(x, method=method)
            for col in range(2):
                assert np.array_equal(
                    np.argsort(out[:, col]), np.argsort(x[:, col])
                )


class TestResample:
    def test_smote_midpoint_form(self):
        # with two minority points every synthetic sample lies on their segment
        X = np.array([[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 5.0], [7.0, 5.0]])
        y = np.array([1, 1, 0, 0, 0])
        Xr, yr = resample(X, y, "smote", seed=0, smote_k=1)
        assert np.sum(yr == 1) == np.sum(yr == 0) == 3
        synth = Xr[len(X):]
        for s in synth:
            # on the segment from (0,0) to (1,1): equal coordinates in [0,1]
            assert s[0] == pytest.approx(s[1])
            assert 0.0 <= s[0] <= 1.0

    def test_smote_segment_membership_oracle(self):
        rng = np.random.default_rng(7)
        X_min = rng.normal(size=(8, 3))
        X_maj = rng.normal(size=(20, 3)) + 5
        X = np.vstack([X_min, X_maj])
        y = np.array([1] * 8 + [0] * 20)
        Xr, yr = resample(X, y, "smote", seed=3, smote_k=5)
        synth = Xr[len(X):]
        for s in synth:
            on_segment = False
            for i in range(len(X_min)):
                for j in range(len(X_min)):
                    if i == j:
                        continue
                    d = X_min[j] - X_min[i]
                    denom = np.dot(d, d)
                    lam = np.dot(s - X_min[i], d) / denom
                    if -1e-9 <= lam <= 1 + 1e-9 and np.allclose(
                        X_min[i] + lam * d, s, atol=1e-9
                    ):
                        on_segment = True
            assert on_segment

    def test_random_under_balances(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(14, 2))
        y = np.array([0] * 10 + [1] * 4)
        Xr, yr = resample(X, y, "random_under", seed=1)
        assert np.sum(yr == 0) == np.sum(yr == 1) == 4

    def test_random_over_balances_with_duplicates(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(12, 2))
        y = np.array([0] * 9 + [1] * 3)
        Xr, yr = resample(X, y, "random_over", seed=2)
        assert np.sum(yr == 0) == np.sum(yr == 1) == 9
        originals = {tuple(row) for row in X[y == 1]}
        for row in Xr[len(X):]:
            assert tuple(row) in originals

    def test_smote_k_reduced_when_minority_small(self):
        X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [5.0]])
        y = np.array([1, 1, 0, 0, 0, 0])
        Xr, yr = resample(X, y, "smote", seed=0, smote_k=5)  # k -> 1
        assert np.sum(yr == 1) == 4

    def test_smote_single_minority_errors(self):
        X = np.zeros((4, 2))
        y = np.array([1, 0, 0, 0])
        with pytest.raises(ValueError, match="at least 2"):
            resample(X, y, "smote", seed=0)

    def test_none_identity(self):
        X = np.ones((4, 2))
        y = np.array([0, 0, 1, 1])
        Xr, yr = resample(X, y, "none", seed=0)
        np.testing.assert_array_equal(Xr, X)

    def test_determinism(self):
        rng = np.random.default_rng(10)
        X = rng.normal(size=(20, 3))
        y = np.array([0] * 15 + [1] * 5)
        a = resample(X, y, "smote", seed=4)
        b = resample(X, y, "smote", seed=4)
        np.testing.assert_array_equal(a[0], b[0])


class TestPlanAndEstimator:
    def test_no_leakage_stats_from_train_only(self):
        rng = np.random.default_rng(0)
        train = rng.normal(size=(50, 4))
        test = rng.normal(size=(20, 4)) * 100
        plan = fit_plan(train, scaler="zscore")
        np.testing.assert_allclose(
            np.asarray(plan.scaler_stats["mean"]), train.mean(axis=0)
        )
        # applying to test uses train statistics, so test mean is not 0
        assert abs(plan.apply(test).mean()) > 1.0

    def test_apply_idempotent_on_pruned_scaled_width(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(30, 5))
        train = np.column_stack([x[:, 0], x[:, 0] * 3, x[:, 1:]])
        plan = fit_plan(train, corr_threshold=0.85, scaler="minmax")
        out = plan.apply(train)
        assert out.shape[1] == len(plan.kept_columns)

    def test_json_roundtrip(self):
        rng = np.random.default_rng(2)
        train = rng.normal(size=(40, 6))
        plan = fit_plan(train, corr_threshold=0.9, scaler="zscore",
                        resample="smote", smote_k=3, seed=17)
        back = PreprocessPlan.from_json(plan.to_json())
        assert back == plan
        np.testing.assert_array_equal(back.apply(train), plan.apply(train))

    def test_estimator_roundtrip(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(60, 5))
        y = np.array([0] * 45 + [1] * 15)
        pre = Preprocessor(corr_threshold=0.85, scaler="minmax", resample="smote")
        Xt = pre.fit(X, y).transform(X)
        assert Xt.min() >= 0.0 and Xt.max() <= 1.0
        Xb, yb = pre.fit_resample(X, y)
        assert np.sum(yb == 0) == np.sum(yb == 1)

    def test_estimator_get_params(self):
        pre = Preprocessor(scaler="zscore", seed=5)
        params = pre.get_params()
        assert params["scaler"] == "zscore" and params["seed"] == 5

    def test_unfitted_transform_errors(self):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            Preprocessor().transform(np.ones((2, 2)))
