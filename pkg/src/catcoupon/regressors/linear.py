"""Least squares and Gaussian-prior linear regression."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

LAMBDA_BOUNDS = (1e-6, 1e3)
CONDITION_LIMIT = 1e12


class RankWarning(UserWarning):
    pass


class IllConditionedError(np.linalg.LinAlgError):
    def __init__(self, message, columns):
        super().__init__(message)
        self.columns = tuple(columns)


def check_columns(X, n_features):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != n_features:
        raise ValueError(f"expected {n_features} columns, got shape {X.shape}")
    return X


@dataclass(frozen=True)
class LinearModel:
    weights: np.ndarray
    intercept: float
    rank: int
    algorithm: str = "ols"

    @property
    def n_features(self):
        return self.weights.shape[0]

    def predict(self, X):
        return check_columns(X, self.n_features) @ self.weights + self.intercept


def fit_ols(X, y, fit_intercept=True):
    """Least squares through an SVD-based solver.

    Rank-deficient designs get the minimum-norm solution and a
    :class:`RankWarning`.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite values in X or y")
    n, p = X.shape
    A = np.column_stack([X, np.ones(n)]) if fit_intercept else X
    coef, _, rank, _ = np.linalg.lstsq(A, y, rcond=None)
    if rank < A.shape[1]:
        warnings.warn(f"design has rank {rank} < {A.shape[1]} columns; "
                      "returning the minimum-norm solution", RankWarning, stacklevel=2)
    if fit_intercept:
        return LinearModel(coef[:p], float(coef[p]), int(rank))
    return LinearModel(coef, 0.0, int(rank))


@dataclass(frozen=True)
class BayesianLinearModel:
    """Gaussian posterior over linear weights.

    ``weights`` and ``covariance`` are the posterior mean and covariance,
    ``alpha`` the noise precision and ``lambdas`` the per-weight prior
    precisions, all in the units of the original target.
    """

    weights: np.ndarray
    covariance: np.ndarray
    alpha: float
    lambdas: np.ndarray
    intercept: float = 0.0
    x_offset: np.ndarray = None
    algorithm: str = "brr"
    n_iterations: int = 0
    converged: bool = True
    pruned: np.ndarray = field(default=None)

    @property
    def n_features(self):
        return self.weights.shape[0]

    def predict(self, X):
        return check_columns(X, self.n_features) @ self.weights + self.intercept

    def predict_variance(self, X):
        X = check_columns(X, self.n_features)
        if self.x_offset is not None:
            X = X - self.x_offset
        return np.einsum("ij,jk,ik->i", X, self.covariance, X) + 1.0 / self.alpha


def _center(X, y, fit_intercept):
    if fit_intercept:
        xm = X.mean(axis=0)
        ym = float(y.mean())
        return X - xm, y - ym, xm, ym
    return X, y, np.zeros(X.shape[1]), 0.0


def posterior(X, y, alpha, lambdas, names=None):
    """Posterior mean and covariance for fixed precisions.

    Solves ``(diag(lambdas) + alpha X^T X) mu = alpha X^T y``.
    """
    p = X.shape[1]
    lambdas = np.broadcast_to(np.asarray(lambdas, dtype=float), (p,))
    A = np.diag(lambdas) + alpha * (X.T @ X)
    eig, vec = np.linalg.eigh(A)
    cond = eig[-1] / eig[0] if eig[0] > 0 else np.inf
    if not cond <= CONDITION_LIMIT:
        weak = vec[:, 0]
        cols = np.flatnonzero(np.abs(weak) > 0.1 * np.abs(weak).max())
        labels = [names[j] if names is not None else f"x{j}" for j in cols]
        raise IllConditionedError(
            f"posterior precision has condition number {cond:.3g} > {CONDITION_LIMIT:g}; "
            f"near-dependent columns: {', '.join(labels)}", labels)
    L = np.linalg.cholesky(A)
    eye = np.eye(p)
    Linv = np.linalg.solve(L, eye)
    cov = Linv.T @ Linv
    b = alpha * (X.T @ y)
    mu = np.linalg.solve(L.T, np.linalg.solve(L, b))
    return mu, cov


def fit_bayesian_ridge(X, y, alpha=1.0, lam=1.0, fit_intercept=True, names=None):
    """Bayesian ridge posterior for noise precision ``alpha`` and prior
    precision ``lam`` shared by all weights."""
    for label, v in (("alpha", alpha), ("lam", lam)):
        if not LAMBDA_BOUNDS[0] <= v <= LAMBDA_BOUNDS[1]:
            raise ValueError(f"{label}={v} outside [1e-6, 1e3]")
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    mu, cov = posterior(Xc, yc, alpha, lam, names)
    lambdas = np.full(X.shape[1], float(lam))
    return BayesianLinearModel(mu, cov, float(alpha), lambdas, ym - float(xm @ mu),
                               xm if fit_intercept else None, "brr",
                               pruned=np.zeros(X.shape[1], dtype=bool))


def ard_step(X, y, alpha, lambdas, bounds=LAMBDA_BOUNDS):
    """One evidence-maximisation update.

    Returns the posterior ``(mu, cov)`` at the given precisions together
    with the updated ``(alpha, lambdas)``.
    """
    n = X.shape[0]
    mu, cov = posterior(X, y, alpha, lambdas)
    well_determined = 1.0 - lambdas * np.diag(cov)
    new_lambdas = np.clip(well_determined / np.maximum(mu * mu, 1e-300), *bounds)
    resid = y - X @ mu
    sse = max(float(resid @ resid), 1e-300)
    new_alpha = max(n - float(well_determined.sum()), 1e-12) / sse
    return mu, cov, new_alpha, new_lambdas


def fit_ard(X, y, max_iter=300, tol=1e-4, alpha_init=None, lambda_init=1.0,
            fit_intercept=True, scale_target=True, bounds=LAMBDA_BOUNDS):
    """Automatic relevance determination by evidence maximisation.

    Iterates the fixed-point updates until the largest relative change of
    any precision falls below ``tol``. Prior precisions are clamped to
    ``bounds``; weights whose precision reaches the upper clamp are marked
    pruned. With ``scale_target`` the updates run on a unit-variance copy
    of the target so the clamp range is scale-free.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    n, p = X.shape
    Xc, yc, xm, ym = _center(X, y, fit_intercept)
    scale = float(yc.std()) if scale_target else 1.0
    if scale == 0.0:
        scale = 1.0
    ys = yc / scale
    alpha = float(alpha_init) if alpha_init is not None else 1.0 / max(float(ys.var()), 1e-12)
    lambdas = np.clip(np.broadcast_to(np.asarray(lambda_init, dtype=float), (p,)).copy(),
                      *bounds)
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        _, _, new_alpha, new_lambdas = ard_step(Xc, ys, alpha, lambdas, bounds)
        change = max(abs(new_alpha - alpha) / alpha,
                     float(np.max(np.abs(new_lambdas - lambdas) / lambdas)))
        alpha, lambdas = new_alpha, new_lambdas
        if change < tol:
            converged = True
            break
    mu, cov = posterior(Xc, ys, alpha, lambdas)
    pruned = lambdas >= bounds[1]
    weights = mu * scale
    return BayesianLinearModel(
        weights, cov * scale * scale, alpha / scale ** 2, lambdas / scale ** 2,
        ym - float(xm @ weights), xm if fit_intercept else None, "ard", it, converged,
        pruned)
