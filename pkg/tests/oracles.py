"""Independent reference computations used as test oracles.

Nothing here imports the package: each routine is a direct, slow
restatement of the definition it checks.
"""

import math
from fractions import Fraction

import mpmath


def exact_solve(A, b):
    """Gauss-Jordan elimination over Fractions; A is a list of lists."""
    n = len(A)
    M = [[Fraction(v) for v in row] + [Fraction(bv)] for row, bv in zip(A, b)]
    for col in range(n):
        piv = next(r for r in range(col, n) if M[r][col] != 0)
        M[col], M[piv] = M[piv], M[col]
        inv = 1 / M[col][col]
        M[col] = [v * inv for v in M[col]]
        for r in range(n):
            if r != col and M[r][col] != 0:
                f = M[r][col]
                M[r] = [a - f * c for a, c in zip(M[r], M[col])]
    return [M[r][n] for r in range(n)]


def exact_ridge(X, y, lam):
    """Ridge with unpenalized intercept solved exactly in rational arithmetic.

    Returns (coef, intercept) as Fractions.
    """
    n, p = len(X), len(X[0])
    Xf = [[Fraction(v) for v in row] for row in X]
    yf = [Fraction(v) for v in y]
    xm = [sum(Xf[i][j] for i in range(n)) / n for j in range(p)]
    ym = sum(yf) / n
    Xc = [[Xf[i][j] - xm[j] for j in range(p)] for i in range(n)]
    yc = [v - ym for v in yf]
    lam = Fraction(lam)
    A = [[sum(Xc[i][a] * Xc[i][b] for i in range(n)) + (lam if a == b else 0) for b in range(p)] for a in range(p)]
    rhs = [sum(Xc[i][a] * yc[i] for i in range(n)) for a in range(p)]
    coef = exact_solve(A, rhs)
    return coef, ym - sum(m * c for m, c in zip(xm, coef))


def student_t_two_sided(t, df, dps=40):
    """Two-sided p-value by numerically integrating the Student t density."""
    mpmath.mp.dps = dps
    nu = mpmath.mpf(df)
    c = mpmath.gamma((nu + 1) / 2) / (mpmath.sqrt(nu * mpmath.pi) * mpmath.gamma(nu / 2))
    tail = mpmath.quad(lambda x: c * (1 + x * x / nu) ** (-(nu + 1) / 2), [abs(t), mpmath.inf])
    return float(2 * tail)


def paired_t(diffs):
    """Textbook paired t statistic from the sample of differences."""
    q = len(diffs)
    mean = math.fsum(diffs) / q
    sd = math.sqrt(math.fsum((d - mean) ** 2 for d in diffs) / (q - 1))
    return mean / (sd / math.sqrt(q)), q - 1
