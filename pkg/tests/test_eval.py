import numpy as np
import pytest
from sklearn.decomposition import PCA as SkPCA
from sklearn.metrics import confusion_matrix as sk_confusion
from sklearn.metrics import f1_score as sk_f1

from geossl.evaluation import (EvalError, compare_runs, confusion,
                               evaluate_latents, macro_f1, pca_apply, pca_fit,
                               per_class_prf, probe_train, stratified_split)


def blobs(n_per=30, n_classes=3, d=5, seed=0, sep=6.0):
    rng = np.random.default_rng(seed)
    xs, ys = [], []
    for c in range(n_classes):
        center = rng.standard_normal(d) * sep
        xs.append(center + rng.standard_normal((n_per, d)))
        ys.append(np.full(n_per, c))
    return np.concatenate(xs), np.concatenate(ys)


class TestPca:
    def test_line_explained_by_first_component(self):
        t = np.linspace(-3, 3, 50)
        x = np.outer(t, [1.0, 2.0, -1.0]) + np.random.default_rng(0).normal(0, 1e-3, (50, 3))
        m = pca_fit(x, 2)
        assert m.explained[0] > 0.999

    def test_components_orthonormal(self):
        x = np.random.default_rng(1).standard_normal((40, 6))
        m = pca_fit(x, 4)
        np.testing.assert_allclose(m.components.T @ m.components, np.eye(4), atol=1e-10)

    def test_full_dim_is_isometry(self):
        x = np.random.default_rng(2).standard_normal((30, 5))
        y = pca_apply(pca_fit(x, 5), x)
        dx = np.linalg.norm(x[:, None] - x[None, :], axis=-1)
        dy = np.linalg.norm(y[:, None] - y[None, :], axis=-1)
        np.testing.assert_allclose(dx, dy, atol=1e-8)

    def test_matches_sklearn_explained_ratio(self):
        x = np.random.default_rng(3).standard_normal((60, 8)) * np.arange(1, 9)
        m = pca_fit(x, 3)
        sk = SkPCA(n_components=3).fit(x)
        np.testing.assert_allclose(m.explained, sk.explained_variance_ratio_, atol=1e-10)
        np.testing.assert_allclose(np.abs(pca_apply(m, x)),
                                   np.abs(sk.transform(x)), atol=1e-8)

    def test_explained_non_increasing(self):
        x = np.random.default_rng(4).standard_normal((50, 6))
        m = pca_fit(x, 6)
        assert all(a >= b for a, b in zip(m.explained, m.explained[1:]))

    def test_errors(self):
        x = np.random.default_rng(0).standard_normal((10, 4))
        with pytest.raises(EvalError):
            pca_fit(x, 5)
        with pytest.raises(EvalError):
            pca_fit(x[:1], 1)
        with pytest.raises(EvalError):
            pca_fit(x[:3], 3)


class TestSplit:
    def test_partition_and_stratification(self):
        y = np.repeat([0, 1, 2], [30, 20, 10])
        tr, ev = stratified_split(y, 0.6, seed=0)
        assert np.intersect1d(tr, ev).size == 0
        assert np.array_equal(np.sort(np.concatenate([tr, ev])), np.arange(60))
        for c, n in ((0, 30), (1, 20), (2, 10)):
            assert (y[tr] == c).sum() == round(0.6 * n)

    def test_every_class_in_both_sides(self):
        y = np.array([0, 0, 1, 1, 2, 2])
        tr, ev = stratified_split(y, 0.5, seed=1)
        assert set(y[tr]) == set(y[ev]) == {0, 1, 2}

    def test_deterministic(self):
        y = np.repeat([0, 1], 25)
        a = stratified_split(y, 0.6, seed=7)
        b = stratified_split(y, 0.6, seed=7)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestProbe:
    def test_separable_blobs_perfect(self):
        x, y = blobs()
        probe = probe_train(x, y)
        assert (probe.predict(x) == y).mean() == 1.0

    def test_shuffled_labels_near_chance(self):
        x, y = blobs(n_per=60)
        rng = np.random.default_rng(0)
        ys = rng.permutation(y)
        tr, ev = stratified_split(ys, 0.6, seed=0)
        probe = probe_train(x[tr], ys[tr])
        f1 = macro_f1(probe.predict(x[ev]), ys[ev], 3)
        assert f1 < 0.55

    def test_deterministic(self):
        x, y = blobs(seed=2)
        a, b = probe_train(x, y), probe_train(x, y)
        assert np.array_equal(a.weights, b.weights)

    def test_needs_two_classes(self):
        with pytest.raises(EvalError):
            probe_train(np.zeros((4, 2)), np.zeros(4, dtype=int))

    def test_meta_names_substitution(self):
        x, y = blobs(n_per=5)
        assert "SVM substitute" in probe_train(x, y).meta["classifier"]


class TestMetrics:
    def test_hand_value_five_ninths(self):
        # class 0: perfect (F1=1); class 1: P=1/2, R=1 (F1=2/3); class 2: 0
        assert macro_f1([0, 1, 1], [0, 1, 2], 3) == pytest.approx(5 / 9)

    def test_hand_value_all_one_class_predicted(self):
        # pred all 0 on balanced ref: class0 P=1/3, R=1 -> F1=1/2; others 0
        assert macro_f1([0, 0, 0], [0, 1, 2], 3) == pytest.approx(1 / 6)

    def test_perfect_prediction(self):
        assert macro_f1([0, 1, 2, 1], [0, 1, 2, 1], 3) == 1.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_sklearn_oracle(self, seed):
        rng = np.random.default_rng(seed)
        ref = rng.integers(0, 4, 100)
        pred = rng.integers(0, 4, 100)
        ours = macro_f1(pred, ref, 4)
        theirs = sk_f1(ref, pred, labels=range(4), average="macro", zero_division=0)
        assert ours == pytest.approx(theirs, abs=1e-12)

    def test_confusion_matches_sklearn(self):
        rng = np.random.default_rng(3)
        ref, pred = rng.integers(0, 3, 50), rng.integers(0, 3, 50)
        np.testing.assert_array_equal(confusion(pred, ref, 3),
                                      sk_confusion(ref, pred, labels=range(3)))

    def test_confusion_row_sums_are_class_counts(self):
        ref = np.array([0, 0, 1, 2, 2, 2])
        cm = confusion(np.zeros(6, dtype=int), ref, 3)
        np.testing.assert_array_equal(cm.sum(axis=1), [2, 1, 3])

    def test_absent_class_warns_and_counts_zero(self):
        with pytest.warns(UserWarning, match="absent"):
            f1 = macro_f1([0, 1], [0, 1], 3)
        assert f1 == pytest.approx(2 / 3)

    def test_out_of_range_raises(self):
        with pytest.raises(EvalError):
            confusion([0, 3], [0, 1], 3)
        with pytest.raises(EvalError):
            confusion([0], [0, 1], 3)

    def test_relabel_invariance(self):
        rng = np.random.default_rng(5)
        ref, pred = rng.integers(0, 3, 60), rng.integers(0, 3, 60)
        perm = np.array([2, 0, 1])
        a = macro_f1(pred, ref, 3)
        b = macro_f1(perm[pred], perm[ref], 3)
        assert a == pytest.approx(b, abs=1e-12)

    def test_per_class_prf_zero_denominators(self):
        cm = np.array([[0, 0], [3, 0]])
        p, r, f1 = per_class_prf(cm)
        assert p[1] == r[0] == f1[0] == f1[1] == 0.0


class TestEvaluateAndCompare:
    def test_report_fields(self):
        x, y = blobs()
        rep = evaluate_latents(x, y, 3, split_seed=0)
        assert rep.macro_f1 == pytest.approx(1.0)
        assert len(rep.per_class_f1) == 3
        assert rep.n_train + rep.n_eval == len(y)
        assert "SVM substitute" in rep.config["classifier"]
        assert "macro_f1" in rep.to_json()

    def test_pca_full_rank_equals_no_pca(self):
        x, y = blobs(d=6)
        a = evaluate_latents(x, y, 3, split_seed=1)
        b = evaluate_latents(x, y, 3, split_seed=1, pca_dim=6)
        assert a.macro_f1 == pytest.approx(b.macro_f1, abs=1e-9)

    def test_compare_runs_relative_delta(self):
        x, y = blobs(d=4, seed=7)
        good = evaluate_latents(x, y, 3, split_seed=2)
        noisy = evaluate_latents(np.random.default_rng(0).standard_normal(x.shape),
                                 y, 3, split_seed=2)
        rows = compare_runs(noisy, good)
        macro = rows[-1]
        assert macro["row"] == "macro"
        assert macro["delta"] == pytest.approx(good.macro_f1 - noisy.macro_f1)
        assert macro["relative"] == pytest.approx(
            (good.macro_f1 - noisy.macro_f1) / noisy.macro_f1)

    def test_compare_runs_rejects_mismatched_splits(self):
        x, y = blobs()
        a = evaluate_latents(x, y, 3, split_seed=0)
        b = evaluate_latents(x, y, 3, split_seed=1)
        with pytest.raises(EvalError):
            compare_runs(a, b)
