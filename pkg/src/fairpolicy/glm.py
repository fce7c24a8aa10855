"""Maximum-likelihood GLMs (logit and identity links) fit by IRLS/Newton.

The solver is deliberately small: dense design matrices, analytic gradient
and information matrix, step-halving on any likelihood decrease. That is
enough for the low-dimensional nuisance models used everywhere else.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import Dataset
from .formula import FormulaError, ModelFormula, build_design

__all__ = ["Glm", "GlmError", "GlmInputError", "GlmNonConvergence", "fit_glm", "expit"]

PROB_CLIP = 1e-12
GRAD_TOL = 1e-8
MAX_ITER = 100


class GlmError(RuntimeError):
    """Base class for GLM fitting failures."""


class GlmInputError(GlmError):
    """Invalid response, weights, or formula/data mismatch."""


class GlmNonConvergence(GlmError):
    """IRLS failed: singular information matrix or (near-)perfect separation."""


def expit(z: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-z))


def _bernoulli_loglik(y, p, w):
    p = np.clip(p, PROB_CLIP, 1.0 - PROB_CLIP)
    return float(np.sum(w * (y * np.log(p) + (1.0 - y) * np.log1p(-p))))


def _gaussian_loglik(y, mu, w):
    # profiled-variance Gaussian log-likelihood
    wsum = np.sum(w)
    sigma2 = float(np.sum(w * (y - mu) ** 2) / wsum)
    sigma2 = max(sigma2, 1e-300)
    return float(-0.5 * wsum * (np.log(2.0 * np.pi * sigma2) + 1.0))


class Glm(BaseEstimator):
    """GLM for a ModelFormula; the formula's link selects the family.

    Fitted attributes: ``coef_`` (intercept first, then terms in formula
    order), ``log_likelihood_``, ``converged_``, ``n_iter_``, and for the
    identity link ``sigma_`` (MLE residual standard deviation).
    """

    def __init__(self, formula: ModelFormula):
        self.formula = formula

    # ------------------------------------------------------------------
    def fit(self, data: Dataset, weights=None) -> "Glm":
        f = self.formula
        missing = [c for c in f.required_columns() if c not in data]
        if missing:
            raise FormulaError(f"data is missing formula columns: {missing}")
        y = data.column(f.response)
        X = build_design(data, f)
        if weights is None:
            w = np.ones(data.n_rows)
        else:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (data.n_rows,):
                raise GlmInputError("weights length does not match data")
            if np.any(w < 0):
                raise GlmInputError("weights must be nonnegative")

        if f.link == "identity":
            self._fit_identity(X, y, w)
        else:
            if not np.all((y == 0.0) | (y == 1.0)):
                raise GlmInputError(
                    f"logit link requires a binary response; {f.response!r} is not in {{0,1}}"
                )
            self._fit_logit(X, y, w)
        return self

    def _fit_identity(self, X, y, w):
        Xw = X * w[:, None]
        try:
            coef = np.linalg.solve(Xw.T @ X, Xw.T @ y)
        except np.linalg.LinAlgError:
            raise GlmNonConvergence("singular information matrix in least-squares fit") from None
        mu = X @ coef
        wsum = np.sum(w)
        self.coef_ = coef
        self.sigma_ = float(np.sqrt(np.sum(w * (y - mu) ** 2) / wsum))
        self.log_likelihood_ = _gaussian_loglik(y, mu, w)
        self.converged_ = True
        self.n_iter_ = 1

    def _fit_logit(self, X, y, w):
        coef = np.zeros(X.shape[1])
        ll = _bernoulli_loglik(y, expit(X @ coef), w)
        converged = False
        n_iter = 0
        for n_iter in range(1, MAX_ITER + 1):
            p = np.clip(expit(X @ coef), PROB_CLIP, 1.0 - PROB_CLIP)
            grad = X.T @ (w * (y - p))
            if np.max(np.abs(grad)) < GRAD_TOL:
                converged = True
                break
            info = (X * (w * p * (1.0 - p))[:, None]).T @ X
            try:
                step = np.linalg.solve(info, grad)
            except np.linalg.LinAlgError:
                raise GlmNonConvergence(
                    "singular information matrix (collinear design columns?)"
                ) from None
            # step-halving keeps the likelihood monotone
            new_ll = None
            for _ in range(40):
                cand = coef + step
                new_ll = _bernoulli_loglik(y, expit(X @ cand), w)
                if new_ll >= ll - 1e-10:
                    break
                step = 0.5 * step
            assert new_ll is not None and new_ll >= ll - 1e-8, "IRLS likelihood decreased"
            coef = coef + step
            ll = new_ll
        if not converged:
            p = expit(X @ coef)
            hard = (p < 1e-8) | (p > 1.0 - 1e-8)
            if np.any(hard) or np.max(np.abs(coef)) > 50.0:
                raise GlmNonConvergence(
                    "IRLS did not converge: (near-)perfect separation suspected "
                    f"(max |coef| = {np.max(np.abs(coef)):.1f})"
                )
            raise GlmNonConvergence(
                f"IRLS did not converge in {MAX_ITER} iterations "
                f"(max |gradient| = {np.max(np.abs(X.T @ (w * (y - p)))):.2e})"
            )
        self.coef_ = coef
        self.log_likelihood_ = ll
        self.converged_ = True
        self.n_iter_ = n_iter

    # ------------------------------------------------------------------
    def _check_fitted(self):
        if not hasattr(self, "coef_"):
            raise NotFittedError("this Glm instance is not fitted yet")

    def with_coef(self, coef: np.ndarray) -> "Glm":
        """A copy carrying externally supplied coefficients (constrained fits)."""
        out = Glm(self.formula)
        coef = np.asarray(coef, dtype=np.float64)
        if coef.shape != (self.formula.n_coef,):
            raise GlmInputError(
                f"coefficient vector has length {coef.shape[0]}, expected {self.formula.n_coef}"
            )
        out.coef_ = coef.copy()
        out.converged_ = True
        out.n_iter_ = 0
        out.log_likelihood_ = np.nan
        if hasattr(self, "sigma_"):
            out.sigma_ = self.sigma_
        return out

    def linear_predictor(self, data: Dataset, overrides: dict[str, float] | None = None) -> np.ndarray:
        self._check_fitted()
        X = build_design(data, self.formula, overrides)
        return X @ self.coef_

    def predict(self, data: Dataset, overrides: dict[str, float] | None = None) -> np.ndarray:
        """Identity link: the linear predictor. Logit link: P(response = 1)."""
        eta = self.linear_predictor(data, overrides)
        return expit(eta) if self.formula.link == "logit" else eta

    def density(self, data: Dataset, overrides: dict[str, float] | None = None) -> np.ndarray:
        """Probability of the *observed* response under the fitted logit model."""
        if self.formula.link != "logit":
            raise GlmInputError("density of the observed response requires the logit link")
        p = np.clip(self.predict(data, overrides), PROB_CLIP, 1.0 - PROB_CLIP)
        y = data.column(self.formula.response)
        return np.where(y == 1.0, p, 1.0 - p)

    def log_likelihood_at(self, coef: np.ndarray, data: Dataset, weights=None) -> float:
        """Log-likelihood of `data` at external coefficients (no refit)."""
        y = data.column(self.formula.response)
        X = build_design(data, self.formula)
        w = np.ones(data.n_rows) if weights is None else np.asarray(weights, dtype=np.float64)
        eta = X @ np.asarray(coef, dtype=np.float64)
        if self.formula.link == "logit":
            return _bernoulli_loglik(y, expit(eta), w)
        return _gaussian_loglik(y, eta, w)

    def log_likelihood_grad(self, coef: np.ndarray, data: Dataset, weights=None) -> np.ndarray:
        """Analytic score vector at external coefficients (logit link)."""
        if self.formula.link != "logit":
            raise GlmInputError("analytic score implemented for the logit link only")
        y = data.column(self.formula.response)
        X = build_design(data, self.formula)
        w = np.ones(data.n_rows) if weights is None else np.asarray(weights, dtype=np.float64)
        p = np.clip(expit(X @ np.asarray(coef, dtype=np.float64)), PROB_CLIP, 1.0 - PROB_CLIP)
        return X.T @ (w * (y - p))

    def sample(self, data: Dataset, rng: np.random.Generator,
               overrides: dict[str, float] | None = None) -> np.ndarray:
        """Draw responses given the covariates in `data`."""
        mu = self.predict(data, overrides)
        if self.formula.link == "logit":
            return (rng.random(data.n_rows) < mu).astype(np.float64)
        return mu + rng.normal(0.0, getattr(self, "sigma_", 0.0), data.n_rows)


def fit_glm(data: Dataset, formula: ModelFormula, weights=None) -> Glm:
    """Fit a GLM and return the fitted estimator."""
    return Glm(formula).fit(data, weights)
