"""Self-contained numerical kernels on numpy primitives.

Everything here is implemented directly (rank transforms, continued-fraction
t tails, Newton logistic fits, SVD-based PCA, subgradient SVM) so results
are reproducible from the source without reference to library internals.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np


class StatsError(ValueError):
    pass


class ZeroNormRowError(StatsError):
    pass


class ConstantInputError(StatsError):
    pass


class DegenerateDesignError(StatsError):
    pass


class SingleClassError(StatsError):
    pass


class RankDeficientCovarianceError(StatsError):
    pass


class SeparationWarning(UserWarning):
    pass


# ---------------------------------------------------------------------------
# similarity and correlation
# ---------------------------------------------------------------------------


def pairwise_cosine(x: np.ndarray) -> np.ndarray:
    """Cosine similarity between all row pairs; exact 1s on the diagonal."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise StatsError("expected a 2-d array")
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms == 0):
        raise ZeroNormRowError(f"row {int(np.argmin(norms))} has zero norm")
    sims = (x / norms[:, None]) @ (x / norms[:, None]).T
    np.clip(sims, -1.0, 1.0, out=sims)
    np.fill_diagonal(sims, 1.0)
    return sims


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ZeroNormRowError("cosine of a zero vector")
    return float(np.clip(a @ b / (na * nb), -1.0, 1.0))


def rankdata(a: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; ties get the average of their positions."""
    a = np.asarray(a, dtype=np.float64)
    order = np.argsort(a, kind="mergesort")
    ranks = np.empty(len(a), dtype=np.float64)
    sorted_a = a[order]
    i = 0
    while i < len(a):
        j = i
        while j + 1 < len(a) and sorted_a[j + 1] == sorted_a[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x: np.ndarray, y: np.ndarray) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.shape} vs {y.shape}")
    if len(x) < 2:
        raise StatsError("need at least two observations")
    rx, ry = rankdata(x), rankdata(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        raise ConstantInputError("an input is constant; rank correlation undefined")
    return float(rx @ ry / denom)


@dataclass(frozen=True)
class RsaResult:
    mean: float
    sd: float | None
    n_subsets: int
    subset_size: int


def rsa(
    a: np.ndarray,
    b: np.ndarray,
    subsets: int = 0,
    subset_size: int = 100,
    seed: int = 0,
) -> RsaResult:
    """Representational similarity: Spearman over strict upper triangles.

    With subsets > 0, draws that many label subsets without replacement and
    reports the mean and sample sd of the per-subset correlations.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise StatsError(f"matrices must be square and same-shape: {a.shape} vs {b.shape}")
    n = a.shape[0]
    if subsets == 0:
        iu = np.triu_indices(n, k=1)
        return RsaResult(spearman(a[iu], b[iu]), None, 0, n)
    if subset_size > n:
        raise StatsError(f"subset_size {subset_size} exceeds label count {n}")
    if subset_size < 3:
        raise StatsError("subset_size must be at least 3")
    rng = np.random.default_rng(seed)
    iu = np.triu_indices(subset_size, k=1)
    vals = np.empty(subsets, dtype=np.float64)
    for s in range(subsets):
        idx = rng.choice(n, size=subset_size, replace=False)
        sub_a = a[np.ix_(idx, idx)]
        sub_b = b[np.ix_(idx, idx)]
        vals[s] = spearman(sub_a[iu], sub_b[iu])
    sd = float(vals.std(ddof=1)) if subsets > 1 else None
    return RsaResult(float(vals.mean()), sd, subsets, subset_size)


# ---------------------------------------------------------------------------
# t distribution tail via the regularized incomplete beta function
# ---------------------------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Modified Lentz continued fraction for I_x(a, b).
    MAXIT, EPS, FPMIN = 400, 1e-16, 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < FPMIN:
        d = FPMIN
    d = 1.0 / d
    h = d
    for m in range(1, MAXIT + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < FPMIN:
            d = FPMIN
        c = 1.0 + aa / c
        if abs(c) < FPMIN:
            c = FPMIN
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < EPS:
            return h
    raise StatsError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) by Lentz's continued fraction, symmetric split at the bulge."""
    if not 0.0 <= x <= 1.0:
        raise StatsError("x must be in [0, 1]")
    if x == 0.0:
        return 0.0
    if x == 1.0:
        return 1.0
    ln_front = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_two_sided_p(t: float, dof: float) -> float:
    """P(|T| >= |t|) for T ~ Student-t with `dof` degrees of freedom."""
    if dof <= 0:
        raise StatsError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    return regularized_incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t))


def normal_two_sided_p(z: float) -> float:
    return math.erfc(abs(z) / math.sqrt(2.0))


@dataclass(frozen=True)
class TTestResult:
    t: float
    p: float
    mean_x: float
    mean_y: float
    dof: int


def paired_t_test(x: np.ndarray, y: np.ndarray) -> TTestResult:
    """Two-sided paired t-test on matched samples."""
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise StatsError(f"length mismatch: {x.shape} vs {y.shape}")
    n = len(x)
    if n < 2:
        raise StatsError("need at least two pairs")
    d = x - y
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise ConstantInputError("differences are constant; t undefined")
    t = float(d.mean() / (sd / math.sqrt(n)))
    return TTestResult(t, student_t_two_sided_p(t, n - 1), float(x.mean()), float(y.mean()), n - 1)


# ---------------------------------------------------------------------------
# logistic regression (damped Newton)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RegressionResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    test_statistics: np.ndarray
    p_values: np.ndarray
    odds_ratios: np.ndarray | None
    converged: bool
    n_iterations: int


def _sigmoid(eta: np.ndarray) -> np.ndarray:
    out = np.empty_like(eta)
    pos = eta >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-eta[pos]))
    e = np.exp(eta[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def _log_likelihood(eta: np.ndarray, y: np.ndarray) -> float:
    # sum y*eta - log(1 + exp(eta)), stable for large |eta|
    return float(y @ eta - np.logaddexp(0.0, eta).sum())


def logistic_fit(
    features: np.ndarray,
    labels: np.ndarray,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> RegressionResult:
    """Maximum-likelihood logistic regression with an intercept.

    Damped Newton iterations (step halving on likelihood decrease) until the
    gradient's max absolute entry drops below `tol`. Standard errors come
    from the inverse observed information at the optimum; p-values are
    two-sided normal tails of the Wald z. Quasi-separation (coefficient norm
    above 1e4) stops the fit with a SeparationWarning and converged=False.
    """
    F = np.asarray(features, dtype=np.float64)
    if F.ndim == 1:
        F = F[:, None]
    y = np.asarray(labels, dtype=np.float64).ravel()
    n, d = F.shape
    if len(y) != n:
        raise StatsError("features and labels disagree on n")
    if not np.all(np.isin(y, (0.0, 1.0))):
        raise StatsError("labels must be 0/1")
    if np.all(y == y[0]):
        raise SingleClassError("labels contain a single class")
    if n <= d + 1:
        raise DegenerateDesignError(f"need more than {d + 1} observations, got {n}")

    X = np.column_stack([np.ones(n), F])
    beta = np.zeros(d + 1)
    converged = False
    iterations = 0
    for it in range(1, max_iter + 1):
        iterations = it
        eta = X @ beta
        mu = _sigmoid(eta)
        grad = X.T @ (y - mu)
        if float(np.max(np.abs(grad))) < tol:
            converged = True
            iterations = it - 1
            break
        w = mu * (1.0 - mu)
        hessian = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hessian, grad)
        except np.linalg.LinAlgError:
            # Singular information (e.g. a zero-variance column): take the
            # minimum-norm Newton step so degenerate directions stay at zero.
            step = np.linalg.lstsq(hessian, grad, rcond=None)[0]
        ll0 = _log_likelihood(eta, y)
        scale = 1.0
        new_beta = beta + step
        while scale > 2.0**-30:
            new_beta = beta + scale * step
            if _log_likelihood(X @ new_beta, y) >= ll0 - 1e-12:
                break
            scale /= 2.0
        beta = new_beta
        if float(np.linalg.norm(beta)) > 1e4:
            warnings.warn(
                "coefficient norm exceeds 1e4; data are (quasi-)separated",
                SeparationWarning,
            )
            break

    mu = _sigmoid(X @ beta)
    w = mu * (1.0 - mu)
    hessian = X.T @ (X * w[:, None])
    cov = np.linalg.pinv(hessian)
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se > 0, beta / se, 0.0)
    p = np.array([normal_two_sided_p(v) for v in z])
    with np.errstate(over="ignore"):
        odds = np.exp(beta)
    return RegressionResult(
        coefficients=beta,
        standard_errors=se,
        test_statistics=z,
        p_values=p,
        odds_ratios=odds,
        converged=converged,
        n_iterations=iterations,
    )


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PcaResult:
    components: np.ndarray
    explained_variance: np.ndarray
    mean: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) @ self.components.T


def pca(x: np.ndarray, k: int) -> PcaResult:
    """Top-k principal directions by SVD of the centered data.

    Sign convention: each component's largest-magnitude entry is positive,
    which makes the decomposition deterministic across SVD implementations.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise StatsError("expected a 2-d array")
    n, d = x.shape
    if n < 2:
        raise StatsError("need at least two rows")
    if not 1 <= k <= min(n - 1, d):
        raise StatsError(f"k must be in [1, {min(n - 1, d)}], got {k}")
    mean = x.mean(axis=0)
    _, svals, vt = np.linalg.svd(x - mean, full_matrices=False)
    components = vt[:k].copy()
    for row in components:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1.0
    explained = (svals[:k] ** 2) / (n - 1)
    return PcaResult(components, explained, mean)


# ---------------------------------------------------------------------------
# linear SVM (primal subgradient, deterministic full-batch)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SvmResult:
    weights: np.ndarray
    bias: float
    c: float
    svm_error: float
    objective: float


def svm_objective(x: np.ndarray, y: np.ndarray, w: np.ndarray, b: float, c: float) -> float:
    """Primal objective ||w||^2 / 2 + c * sum hinge."""
    margins = y * (x @ w + b)
    return float(0.5 * w @ w + c * np.clip(1.0 - margins, 0.0, None).sum())


def svm_fit(
    x: np.ndarray,
    labels: np.ndarray,
    c: float = 1.0,
    iterations: int = 100_000,
) -> SvmResult:
    """Soft-margin linear SVM by deterministic full-batch subgradient descent.

    Steps 1/(lambda*t) with lambda = 1/(n*c) on the scaled objective
    lambda/2 ||w||^2 + mean hinge. The best-objective iterate over the fixed
    schedule is returned. svm_error is the fraction of points inside or on
    the wrong side of the margin, margin violations plus misclassifications.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.float64).ravel()
    if set(np.unique(y)) - {-1.0, 1.0}:
        raise StatsError("labels must be -1/+1")
    if len(np.unique(y)) < 2:
        raise SingleClassError("labels contain a single class")
    n, d = x.shape
    if len(y) != n:
        raise StatsError("features and labels disagree on n")
    lam = 1.0 / (n * c)
    w = np.zeros(d)
    b = 0.0
    best_obj = math.inf
    best_w, best_b = w.copy(), b
    xy = x * y[:, None]
    for t in range(1, iterations + 1):
        margins = y * (x @ w + b)
        viol = margins < 1.0
        grad_w = lam * w - xy[viol].sum(axis=0) / n
        grad_b = -float(y[viol].sum()) / n
        eta = 1.0 / (lam * t)
        w = w - eta * grad_w
        b = b - eta * grad_b
        obj = 0.5 * lam * float(w @ w) + float(
            np.clip(1.0 - y * (x @ w + b), 0.0, None).mean()
        )
        if obj < best_obj:
            best_obj = obj
            best_w, best_b = w.copy(), b
    margins = y * (x @ best_w + best_b)
    error = float((margins < 1.0).mean())
    return SvmResult(
        weights=best_w,
        bias=float(best_b),
        c=c,
        svm_error=error,
        objective=svm_objective(x, y, best_w, float(best_b), c),
    )


# ---------------------------------------------------------------------------
# whitening
# ---------------------------------------------------------------------------


def whiten(u: np.ndarray, ridge: float | None = None) -> np.ndarray:
    """Center and multiply by the inverse symmetric square root of the
    sample covariance, so the output has identity covariance.

    Requires more rows than columns. Near-singular covariance raises with a
    suggested ridge; passing `ridge` adds ridge * I before inversion.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.ndim != 2:
        raise StatsError("expected a 2-d array")
    n, d = u.shape
    if n <= d:
        raise RankDeficientCovarianceError(
            f"need more rows than columns to estimate covariance, got {n}x{d}"
        )
    centered = u - u.mean(axis=0)
    cov = centered.T @ centered / (n - 1)
    if ridge is not None:
        if ridge < 0:
            raise StatsError("ridge must be non-negative")
        cov = cov + ridge * np.eye(d)
    evals, evecs = np.linalg.eigh(cov)
    tiny = max(float(evals[-1]), 0.0) * d * np.finfo(np.float64).eps
    if float(evals[0]) <= tiny:
        suggestion = 1e-6 * float(np.trace(cov)) / d
        raise RankDeficientCovarianceError(
            f"covariance is numerically singular; retry with ridge={suggestion:.3e}"
        )
    inv_sqrt = evecs @ np.diag(evals**-0.5) @ evecs.T
    return centered @ inv_sqrt


# ---------------------------------------------------------------------------
# grouped regression (pooled OLS with HC-robust errors)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupLine:
    slope: float
    intercept: float
    n: int
    pooled_fallback: bool


@dataclass(frozen=True)
class GroupedRegressionResult:
    slope: float
    intercept: float
    slope_se: float
    intercept_se: float
    slope_t: float
    slope_p: float
    n: int
    per_group: dict[str, GroupLine]


def _degenerate_spread(values: np.ndarray) -> bool:
    # below ~sqrt(eps) relative spread the normal equations cancel to zero
    scale = max(1.0, float(np.max(np.abs(values))))
    return float(np.ptp(values)) <= 1e-8 * scale


def grouped_regression(
    records: list[tuple[str, float, float]]
) -> GroupedRegressionResult:
    """Pooled y-on-x OLS with heteroskedasticity-robust (HC1) errors, plus
    per-group lines (groups without two numerically distinct x fall back to
    the pooled line).
    """
    if len(records) < 3:
        raise StatsError("need at least three records")
    groups = [g for g, _, _ in records]
    x = np.array([v for _, v, _ in records], dtype=np.float64)
    y = np.array([v for _, _, v in records], dtype=np.float64)
    if _degenerate_spread(x):
        raise ConstantInputError("regressor is constant across all records")
    n = len(records)
    X = np.column_stack([np.ones(n), x])
    xtx = X.T @ X
    try:
        beta = np.linalg.solve(xtx, X.T @ y)
    except np.linalg.LinAlgError as exc:
        raise ConstantInputError("regressor spread too small to fit a line") from exc
    resid = y - X @ beta
    xtx_inv = np.linalg.inv(xtx)
    meat = X.T @ (X * (resid**2)[:, None])
    cov = xtx_inv @ meat @ xtx_inv * (n / max(n - 2, 1))
    se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    t_slope = float(beta[1] / se[1]) if se[1] > 0 else 0.0
    p_slope = student_t_two_sided_p(t_slope, n - 2)

    per_group: dict[str, GroupLine] = {}
    for g in sorted(set(groups)):
        gx = x[[i for i, gg in enumerate(groups) if gg == g]]
        gy = y[[i for i, gg in enumerate(groups) if gg == g]]
        # x spread below float resolution makes the normal equations singular
        if len(gx) < 2 or _degenerate_spread(gx):
            per_group[g] = GroupLine(float(beta[1]), float(beta[0]), len(gx), True)
            continue
        gX = np.column_stack([np.ones(len(gx)), gx])
        try:
            gb = np.linalg.solve(gX.T @ gX, gX.T @ gy)
        except np.linalg.LinAlgError:
            per_group[g] = GroupLine(float(beta[1]), float(beta[0]), len(gx), True)
            continue
        per_group[g] = GroupLine(float(gb[1]), float(gb[0]), len(gx), False)

    return GroupedRegressionResult(
        slope=float(beta[1]),
        intercept=float(beta[0]),
        slope_se=float(se[1]),
        intercept_se=float(se[0]),
        slope_t=t_slope,
        slope_p=p_slope,
        n=n,
        per_group=per_group,
    )
