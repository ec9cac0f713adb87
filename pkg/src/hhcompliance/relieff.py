"""RReliefF feature weighting for a continuous target."""

import csv
from dataclasses import dataclass

import numpy as np
from joblib import Parallel, delayed
from scipy.spatial.distance import cdist
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError
from .model import fold_indices

RANKING_FIELDS = ["feature", "mean_weight", "mean_rank", "rank_sd"]
_CHUNK = 256


@dataclass(frozen=True)
class ReliefConfig:
    n_neighbors: int = 10
    n_samples: int | None = None
    sigma: float = 20.0
    seed: int = 0

    def __post_init__(self):
        if self.n_neighbors < 1:
            raise ConfigError("n_neighbors must be >= 1")
        if self.n_samples is not None and self.n_samples < 1:
            raise ConfigError("n_samples must be >= 1")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")


def _scaled(X, discrete):
    lo = X.min(axis=0)
    span = X.max(axis=0) - lo
    S = np.zeros_like(X)
    cont = ~discrete & (span > 0)
    S[:, cont] = (X[:, cont] - lo[cont]) / span[cont]
    S[:, discrete] = X[:, discrete]
    return S


def _nearest(dist, k):
    """Indices of the k smallest distances; equal distances go to the lower index."""
    kth = np.partition(dist, k - 1)[k - 1]
    cand = np.flatnonzero(dist <= kth)
    return cand[np.lexsort((cand, dist[cand]))][:k]


def relief_weights(X, y, n_neighbors=10, n_samples=None, sigma=20.0, discrete=None, random_state=0):
    """RReliefF attribute weights.

    For each sampled instance the ``n_neighbors`` nearest other instances
    (Manhattan distance on [0, 1]-scaled features; 0/1 mismatch for
    discrete features) update three accumulators, each neighbour weighted
    by ``exp(-(rank / sigma)**2)`` normalized over the neighbourhood:

    - ``n_dc``: target difference
    - ``n_da[j]``: attribute difference
    - ``n_dcda[j]``: joint target and attribute difference

    and the weight is ``n_dcda / n_dc - (n_da - n_dcda) / (m - n_dc)``.
    A target with no spread carries no information and yields all-zero
    weights.

    Parameters
    ----------
    X : array of shape (n, p)
    y : array of shape (n,)
    n_neighbors : int
    n_samples : int or None
        Number of seed instances; None uses every instance once.
    sigma : float
        Rank decay of neighbour influence.
    discrete : array of bool of shape (p,), optional
    random_state : int
        Seed for drawing seed instances when ``n_samples < n``.

    Returns
    -------
    ndarray of shape (p,), values in [-1, 1]
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    k = int(n_neighbors)
    if n <= k:
        raise ConfigError(f"need more than n_neighbors={k} instances, got {n}")
    discrete = np.zeros(p, dtype=bool) if discrete is None else np.asarray(discrete, dtype=bool)

    if n_samples is None or n_samples >= n:
        seeds = np.arange(n)
    else:
        seeds = np.sort(np.random.default_rng(random_state).choice(n, size=n_samples, replace=False))
    m = len(seeds)

    y_span = y.max() - y.min()
    if y_span == 0:
        return np.zeros(p)
    yd = y / y_span
    S = _scaled(X, discrete)

    influence = np.exp(-((np.arange(1, k + 1) / sigma) ** 2))
    influence /= influence.sum()

    cont = ~discrete
    n_dc = 0.0
    n_da = np.zeros(p)
    n_dcda = np.zeros(p)
    for start in range(0, m, _CHUNK):
        rows = seeds[start : start + _CHUNK]
        dist = np.zeros((len(rows), n))
        if cont.any():
            dist += cdist(S[rows][:, cont], S[:, cont], metric="cityblock")
        if discrete.any():
            dist += cdist(S[rows][:, discrete], S[:, discrete], metric="hamming") * discrete.sum()
        dist[np.arange(len(rows)), rows] = np.inf
        nn = np.vstack([_nearest(d, k) for d in dist])
        attr = np.abs(S[rows][:, None, :] - S[nn])
        attr[:, :, discrete] = attr[:, :, discrete] > 0
        targ = np.abs(yd[rows, None] - yd[nn])
        n_dc += float(np.sum(targ * influence))
        n_da += np.einsum("rkp,k->p", attr, influence)
        n_dcda += np.einsum("rkp,rk,k->p", attr, targ, influence)

    if n_dc <= 0.0:
        return np.zeros(p)
    second = (n_da - n_dcda) / (m - n_dc) if m > n_dc else np.zeros(p)
    return np.clip(n_dcda / n_dc - second, -1.0, 1.0)


class RReliefF(TransformerMixin, BaseEstimator):
    """RReliefF feature weighting as a scikit-learn transformer.

    Parameters
    ----------
    n_neighbors : int, default=10
    n_samples : int or None, default=None
        Seed instances per fit; None uses all of them.
    sigma : float, default=20.0
    discrete_features : array of bool, optional
    n_features_to_select : int or None
        Number of top-ranked columns kept by ``transform``; None keeps all.
    random_state : int, default=0
    """

    def __init__(
        self, n_neighbors=10, n_samples=None, sigma=20.0, discrete_features=None, n_features_to_select=None, random_state=0
    ):
        self.n_neighbors = n_neighbors
        self.n_samples = n_samples
        self.sigma = sigma
        self.discrete_features = discrete_features
        self.n_features_to_select = n_features_to_select
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        ReliefConfig(self.n_neighbors, self.n_samples, self.sigma)
        self.feature_importances_ = relief_weights(
            X, y, self.n_neighbors, self.n_samples, self.sigma, self.discrete_features, self.random_state
        )
        self.ranking_ = rankdata(-self.feature_importances_, method="ordinal").astype(int)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "feature_importances_")
        X = check_array(X, dtype=np.float64)
        keep = self.n_features_to_select or self.n_features_in_
        return X[:, self.ranking_ <= keep]


@dataclass(frozen=True)
class FeatureRank:
    feature: str
    mean_weight: float
    weight_sd: float
    mean_rank: float
    rank_sd: float


def rank_features(fold_weights, feature_names):
    """Aggregate per-fold weights into mean weight, mean rank and rank spread.

    Ranks are 1 for the largest weight within each fold. Standard
    deviations are population (ddof=0) over folds. Output is ordered by
    mean rank.
    """
    W = np.atleast_2d(np.asarray(fold_weights, dtype=float))
    ranks = np.vstack([rankdata(-w, method="ordinal") for w in W])
    out = [
        FeatureRank(name, float(W[:, j].mean()), float(W[:, j].std()), float(ranks[:, j].mean()), float(ranks[:, j].std()))
        for j, name in enumerate(feature_names)
    ]
    return sorted(out, key=lambda r: (r.mean_rank, r.feature))


def _fold_weights(X, y, test, config, discrete):
    train = np.setdiff1d(np.arange(len(y)), test, assume_unique=True)
    return relief_weights(X[train], y[train], config.n_neighbors, config.n_samples, config.sigma, discrete, config.seed)


def cross_validated_weights(X, y, config=ReliefConfig(), k=10, discrete=None, n_jobs=1):
    """Weights computed on each of the ``k`` training splits, shape (k, p)."""
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    if k < 1:
        raise ConfigError("k must be >= 1")
    if k == 1:
        return relief_weights(X, y, config.n_neighbors, config.n_samples, config.sigma, discrete, config.seed)[None, :]
    folds = fold_indices(len(y), k, config.seed)
    rows = Parallel(n_jobs=n_jobs)(delayed(_fold_weights)(X, y, t, config, discrete) for t in folds)
    return np.vstack(rows)


def write_ranking(path, ranking):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RANKING_FIELDS)
        for r in ranking:
            writer.writerow([r.feature, repr(r.mean_weight), repr(r.mean_rank), repr(r.rank_sd)])


def format_table(ranking):
    """Plain-text table: weight (+/- sd) and rank (+/- sd)."""
    lines = [f"{'attribute':<16}{'avg weight':>20}{'avg rank':>18}"]
    for r in ranking:
        w = f"{r.mean_weight:.3f}" + (f" (+/-{r.weight_sd:.3f})" if r.weight_sd >= 5e-4 else "")
        rk = f"{r.mean_rank:.1f}" + (f" (+/-{r.rank_sd:.2f})" if r.rank_sd > 0 else "")
        lines.append(f"{r.feature:<16}{w:>20}{rk:>18}")
    return "\n".join(lines)
