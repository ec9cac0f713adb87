"""Ridge regression with M5 attribute selection and p-value backward elimination."""

from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy import linalg, stats
from sklearn.base import BaseEstimator, RegressorMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .exceptions import ConfigError, InferenceError, SingularSystemError

DEFAULT_LAMBDA = 1.0
DEFAULT_ALPHA = 0.05


@dataclass
class Hypothesis:
    feature_names: list
    coefficients: np.ndarray
    intercept: float
    p_values: np.ndarray
    lambda_: float = DEFAULT_LAMBDA

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        self.p_values = np.asarray(self.p_values, dtype=float)
        if not len(self.feature_names) == len(self.coefficients) == len(self.p_values):
            raise ValueError("feature_names, coefficients and p_values must have equal length")

    def coefficient(self, name, default=0.0):
        try:
            return float(self.coefficients[self.feature_names.index(name)])
        except ValueError:
            return default

    def predict(self, X, feature_names):
        """Predict from a matrix whose columns are named by ``feature_names``."""
        X = np.asarray(X, dtype=float)
        idx = [feature_names.index(n) for n in self.feature_names]
        return self.intercept + X[:, idx] @ self.coefficients

    def to_dict(self):
        doc = {
            "intercept": float(self.intercept),
            "lambda": float(self.lambda_),
            "features": {
                name: {"coefficient": float(c), "p_value": float(p)}
                for name, c, p in zip(self.feature_names, self.coefficients, self.p_values)
            },
        }
        return doc

    @classmethod
    def from_dict(cls, doc):
        feats = doc["features"]
        names = list(feats)
        return cls(
            feature_names=names,
            coefficients=[feats[n]["coefficient"] for n in names],
            intercept=doc["intercept"],
            p_values=[feats[n]["p_value"] for n in names],
            lambda_=doc["lambda"],
        )


@dataclass
class FitReport:
    hypothesis: Hypothesis
    cv_correlation: float
    cv_rmse: float
    fold_count: int
    eliminated_features: list = field(default_factory=list)
    oof_predictions: np.ndarray = None

    def to_dict(self):
        return {
            "cv_correlation": float(self.cv_correlation),
            "cv_rmse": float(self.cv_rmse),
            "fold_count": int(self.fold_count),
            "eliminated": [{"feature": f, "stage": s} for f, s in self.eliminated_features],
            "hypothesis": self.hypothesis.to_dict(),
        }


def ridge_fit(X, y, lam):
    """Minimize ``||Xc h - yc||^2 + lam ||h||^2`` on centred data.

    The intercept is unpenalized and recovered from the column means.

    Returns
    -------
    coef : ndarray of shape (p,)
    intercept : float
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if lam < 0:
        raise ConfigError(f"lambda must be non-negative, got {lam}")
    x_mean = X.mean(axis=0)
    y_mean = y.mean()
    p = X.shape[1]
    if p == 0:
        return np.zeros(0), float(y_mean)
    Xc = X - x_mean
    gram = Xc.T @ Xc
    if lam == 0 and np.linalg.matrix_rank(gram) < p:
        raise SingularSystemError("X^T X is singular; use lambda > 0")
    gram[np.diag_indices(p)] += lam
    try:
        coef = linalg.solve(gram, Xc.T @ (y - y_mean), assume_a="pos")
    except linalg.LinAlgError as exc:
        raise SingularSystemError(f"ridge system could not be solved ({exc}); use lambda > 0") from exc
    return coef, float(y_mean - x_mean @ coef)


def ridge_objective(X, y, coef, intercept, lam):
    resid = np.asarray(X) @ coef + intercept - y
    return float(resid @ resid + lam * coef @ coef)


def ols_pvalues(X, y):
    """Two-sided t-test p-values of an unpenalized least-squares fit with intercept.

    Rank-deficient designs use the minimum-norm solution and its
    pseudo-inverse covariance, so collinear one-hot blocks get p-values for
    their sum-to-zero contrasts. Residual degrees of freedom are
    ``n - rank - 1``.

    Returns
    -------
    coef, p_values, df
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    n, p = X.shape
    Xc = X - X.mean(axis=0)
    yc = y - y.mean()
    gram_pinv, rank = linalg.pinvh(Xc.T @ Xc, return_rank=True)
    df = n - rank - 1
    if df <= 0:
        raise InferenceError(f"no residual degrees of freedom (n={n}, rank={rank})")
    coef = gram_pinv @ (Xc.T @ yc)
    resid = yc - Xc @ coef
    sigma2 = float(resid @ resid) / df
    se = np.sqrt(np.clip(np.diag(gram_pinv), 0.0, None) * sigma2)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, coef / np.where(se > 0, se, 1.0), np.where(np.abs(coef) > 0, np.inf, 0.0))
    pvals = 2.0 * stats.t.sf(np.abs(t), df)
    return coef, pvals, df


def adjusted_error(X, y, coef, intercept):
    """Training RMSE inflated by ``(n + v) / (n - v)``, v = parameters incl. intercept."""
    n = len(y)
    v = X.shape[1] + 1
    if n <= v:
        return np.inf
    resid = y - (X @ coef + intercept)
    return float(np.sqrt(np.mean(resid**2))) * (n + v) / (n - v)


def m5_select(X, y, lam=DEFAULT_LAMBDA):
    """Greedy M5 attribute deletion.

    Drops the feature with the smallest absolute standardized ridge
    coefficient for as long as doing so does not increase the adjusted
    error. At least one feature always survives.

    Returns
    -------
    list of int
        Retained column indices, in original order.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    active = list(range(X.shape[1]))
    if not active:
        raise ConfigError("m5_select needs at least one feature")
    sd = X.std(axis=0)
    coef, b0 = ridge_fit(X, y, lam)
    best = adjusted_error(X, y, coef, b0)
    while len(active) > 1:
        std_coef = np.abs(coef) * sd[active]
        # ties go to the later column
        drop = len(active) - 1 - int(np.argmin(std_coef[::-1]))
        trial = active[:drop] + active[drop + 1 :]
        t_coef, t_b0 = ridge_fit(X[:, trial], y, lam)
        err = adjusted_error(X[:, trial], y, t_coef, t_b0)
        if err > best:
            break
        active, coef, best = trial, t_coef, err
    return active


def backward_eliminate(X, y, lam=DEFAULT_LAMBDA, alpha=DEFAULT_ALPHA, feature_names=None):
    """Remove the highest-p-value feature until every p-value is at most ``alpha``.

    P-values come from an unpenalized least-squares refit of the current
    subset; the returned coefficients are the ridge solution on the
    surviving subset. If the last remaining feature still fails the test it
    is removed as well, leaving an intercept-only hypothesis.

    Returns
    -------
    hypothesis : Hypothesis
    retained : list of int
        Column indices of ``X`` kept.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    active = list(range(X.shape[1]))
    if not active:
        raise ConfigError("backward_eliminate needs at least one feature")
    pvals = np.zeros(0)
    while active:
        _, pvals, _ = ols_pvalues(X[:, active], y)
        worst = len(active) - 1 - int(np.argmax(pvals[::-1]))
        if pvals[worst] <= alpha:
            break
        del active[worst]
    if not active:
        pvals = np.zeros(0)
    coef, b0 = ridge_fit(X[:, active], y, lam)
    hyp = Hypothesis([names[i] for i in active], coef, b0, pvals, lam)
    return hyp, active


class M5RidgeRegression(RegressorMixin, BaseEstimator):
    """Ridge regression whose features are chosen by M5 deletion then p-value elimination.

    Parameters
    ----------
    ridge_lambda : float, default=1.0
        Ridge penalty on the (standardized) coefficients.
    alpha : float, default=0.05
        Significance level every retained coefficient must meet.

    Attributes
    ----------
    hypothesis_ : Hypothesis
    support_ : ndarray of bool
        Mask of retained input columns.
    coef_ : ndarray
        Full-length coefficients with zeros for eliminated columns.
    intercept_ : float
    eliminated_ : list of (feature name, stage) with stage in {"m5", "pvalue"}
    """

    def __init__(self, ridge_lambda=DEFAULT_LAMBDA, alpha=DEFAULT_ALPHA):
        self.ridge_lambda = ridge_lambda
        self.alpha = alpha

    def fit(self, X, y, feature_names=None):
        X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
        if self.ridge_lambda < 0:
            raise ConfigError(f"ridge_lambda must be non-negative, got {self.ridge_lambda}")
        p = X.shape[1]
        names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(p)]
        if len(names) != p:
            raise ConfigError("feature_names length does not match X")

        m5_keep = m5_select(X, y, self.ridge_lambda)
        hyp, kept = backward_eliminate(
            X[:, m5_keep], y, self.ridge_lambda, self.alpha, [names[i] for i in m5_keep]
        )
        retained = [m5_keep[i] for i in kept]

        self.hypothesis_ = hyp
        self.feature_names_in_ = np.asarray(names, dtype=object)
        self.n_features_in_ = p
        self.support_ = np.zeros(p, dtype=bool)
        self.support_[retained] = True
        self.coef_ = np.zeros(p)
        self.coef_[retained] = hyp.coefficients
        self.intercept_ = hyp.intercept
        self.eliminated_ = [(names[i], "m5") for i in range(p) if i not in m5_keep]
        self.eliminated_ += [(names[i], "pvalue") for i in m5_keep if i not in retained]
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=np.float64)
        return X @ self.coef_ + self.intercept_


def fold_indices(n, k, seed):
    """Seeded assignment of ``n`` rows to ``k`` near-equal folds."""
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


def _fit_fold(estimator, X, y, names, test):
    train = np.setdiff1d(np.arange(len(y)), test, assume_unique=True)
    est = clone(estimator).fit(X[train], y[train], feature_names=names)
    return est.predict(X[test])


def pearson(a, b):
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    denom = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / denom) if denom > 0 else 0.0


def cross_validate(X, y, lam=DEFAULT_LAMBDA, k=10, seed=0, feature_names=None, alpha=DEFAULT_ALPHA, n_jobs=1):
    """k-fold cross-validated evaluation of the full selection-and-fit procedure.

    Out-of-fold predictions are pooled to give a single correlation and
    RMSE; the reported hypothesis is refit on all rows. Folds may run in
    parallel (``n_jobs``) without changing the result.
    """
    X, y = check_X_y(X, y, dtype=np.float64, y_numeric=True)
    n = len(y)
    if k < 2:
        raise ConfigError(f"k must be at least 2, got {k}")
    if n < k:
        raise ConfigError(f"need at least k={k} rows, got {n}")
    names = list(feature_names) if feature_names is not None else [f"x{i}" for i in range(X.shape[1])]
    est = M5RidgeRegression(ridge_lambda=lam, alpha=alpha)
    folds = fold_indices(n, k, seed)
    preds = Parallel(n_jobs=n_jobs)(delayed(_fit_fold)(est, X, y, names, test) for test in folds)
    oof = np.empty(n)
    for test, pred in zip(folds, preds):
        oof[test] = pred

    final = clone(est).fit(X, y, feature_names=names)
    rmse = float(np.sqrt(np.mean((oof - y) ** 2)))
    return FitReport(
        hypothesis=final.hypothesis_,
        cv_correlation=pearson(oof, y),
        cv_rmse=rmse,
        fold_count=k,
        eliminated_features=final.eliminated_,
        oof_predictions=oof,
    )
