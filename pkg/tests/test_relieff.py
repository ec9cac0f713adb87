import numpy as np
import pytest

from hhcompliance import relieff
from hhcompliance.exceptions import ConfigError
from hhcompliance.relieff import ReliefConfig, RReliefF


def _data(seed, n=300, p=3):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(n, p))
    y = X[:, 0] + 0.5 * X[:, 1] + 0.05 * rng.normal(size=n)
    return X, y


def test_constant_target_gives_zero_weights():
    X, _ = _data(0)
    w = relieff.relief_weights(X, np.full(len(X), 0.4))
    assert np.all(np.abs(w) <= 1e-9)


def test_weights_bounded():
    for seed in range(5):
        X, y = _data(seed)
        w = relieff.relief_weights(X, y, n_neighbors=7)
        assert np.all((-1 <= w) & (w <= 1))


def test_signal_order_recovered():
    X, y = _data(1)
    w = relieff.relief_weights(X, y)
    assert w[0] > w[1] > w[2]


def test_duplicate_columns_get_equal_weight():
    X, y = _data(2)
    Xd = np.column_stack([X, X[:, 0]])
    w = relieff.relief_weights(Xd, y)
    assert w[0] == w[3]


def test_positive_rescaling_is_exact():
    X, y = _data(3)
    base = relieff.relief_weights(X, y)
    # the internal [0, 1] rescaling absorbs scale and shift; power-of-two factors keep it exact
    exact = relieff.relief_weights(X * np.array([4.0, 0.125, 1024.0]), y)
    np.testing.assert_array_equal(base, exact)
    loose = relieff.relief_weights(X * np.array([3.7, 1e-3, 250.0]) + 17.0, y)
    np.testing.assert_allclose(base, loose, rtol=1e-12, atol=1e-12)


def test_instance_order_does_not_matter_when_all_seeds_used():
    X, y = _data(4)
    perm = np.random.default_rng(0).permutation(len(y))
    np.testing.assert_allclose(relieff.relief_weights(X, y), relieff.relief_weights(X[perm], y[perm]), rtol=1e-12)


def test_subsampling_is_seeded():
    X, y = _data(5)
    a = relieff.relief_weights(X, y, n_samples=50, random_state=3)
    b = relieff.relief_weights(X, y, n_samples=50, random_state=3)
    np.testing.assert_array_equal(a, b)


def test_zero_range_feature_contributes_nothing():
    X, y = _data(6)
    Xc = np.column_stack([X, np.full(len(y), 2.0)])
    w = relieff.relief_weights(Xc, y)
    assert w[3] == 0.0
    np.testing.assert_allclose(w[:3], relieff.relief_weights(X, y), rtol=1e-12)


def _grouped(seed):
    # 40 levels of 10 rows: a seed has only 9 same-level peers, so k = 10 neighbours must cross levels
    rng = np.random.default_rng(seed)
    g = np.repeat(np.arange(40.0), 10)
    noise = rng.uniform(size=(400, 2))
    y = rng.uniform(size=40)[g.astype(int)] + 0.02 * rng.normal(size=400)
    return g, noise, y


def test_discrete_feature_uses_mismatch():
    g, noise, y = _grouped(7)
    w = relieff.relief_weights(np.column_stack([g, noise]), y, discrete=[True, False, False])
    assert w[0] > max(w[1], w[2])


def test_discrete_codes_are_labels_not_magnitudes():
    g, noise, y = _grouped(8)
    relabel = np.random.default_rng(0).permutation(40).astype(float)[g.astype(int)] * 7.5
    mask = [True, False, False]
    a = relieff.relief_weights(np.column_stack([g, noise]), y, discrete=mask)
    b = relieff.relief_weights(np.column_stack([relabel, noise]), y, discrete=mask)
    np.testing.assert_array_equal(a, b)


def test_too_few_instances():
    with pytest.raises(ConfigError):
        relieff.relief_weights(np.zeros((10, 2)), np.arange(10.0), n_neighbors=10)
    with pytest.raises(ConfigError):
        ReliefConfig(n_neighbors=0)
    with pytest.raises(ConfigError):
        ReliefConfig(sigma=0.0)


def test_nearest_tie_break_by_index():
    d = np.array([3.0, 1.0, 1.0, 0.5, 1.0])
    assert relieff._nearest(d, 3).tolist() == [3, 1, 2]


def test_transformer_interface():
    X, y = _data(8)
    est = RReliefF(n_features_to_select=2)
    assert est.get_params()["n_neighbors"] == 10
    Z = est.fit_transform(X, y)
    np.testing.assert_array_equal(Z, X[:, :2])
    assert est.ranking_.tolist() == [1, 2, 3]


def test_rank_features_single_fold():
    ranks = relieff.rank_features([[0.1, 0.3, 0.2]], ["a", "b", "c"])
    assert [(r.feature, r.mean_rank, r.rank_sd) for r in ranks] == [("b", 1.0, 0.0), ("c", 2.0, 0.0), ("a", 3.0, 0.0)]


def test_rank_features_identical_folds_and_population_sd():
    same = relieff.rank_features([[0.1, 0.2]] * 4, ["a", "b"])
    assert all(r.rank_sd == 0.0 for r in same)
    # ranks 1, 1, 2 over three folds: mean 4/3, population sd sqrt(2)/3
    mixed = relieff.rank_features([[0.3, 0.2], [0.3, 0.1], [0.1, 0.2]], ["a", "b"])
    a = next(r for r in mixed if r.feature == "a")
    assert a.mean_rank == pytest.approx(4 / 3) and a.rank_sd == pytest.approx(np.sqrt(2) / 3)


def test_cross_validated_ranking_orders_two_signals(tmp_path):
    X, y = _data(9, n=400)
    W = relieff.cross_validated_weights(X, y, ReliefConfig(seed=1), k=5)
    assert W.shape == (5, 3)
    ranks = relieff.rank_features(W, ["strong", "weak", "none"])
    assert [r.feature for r in ranks] == ["strong", "weak", "none"]
    W2 = relieff.cross_validated_weights(X, y, ReliefConfig(seed=1), k=5, n_jobs=2)
    np.testing.assert_array_equal(W, W2)
    path = tmp_path / "ranking.csv"
    relieff.write_ranking(path, ranks)
    assert path.read_text().splitlines()[0] == "feature,mean_weight,mean_rank,rank_sd"
    assert "strong" in relieff.format_table(ranks)
