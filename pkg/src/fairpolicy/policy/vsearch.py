"""Value search: direct maximization of the IPW policy-value estimate over a
restricted class of linear-score rules.

The value of a candidate rule set f is the empirical mean of
prod_k { I(A_k = f_k(H_k)) / pi_{f_k}(H_k) } * Y, where pi_{f_k} is the
behavior probability of the action f_k prescribes. Exhaustive enumeration
is available for small grids; the default search seeds coordinate ascent
from the best random grid points (full Cartesian grids over all stage
coefficients are astronomically large).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset
from ..glm import Glm, fit_glm
from ..stages import StageSpec
from .base import (
    LinearScorePolicy,
    PolicyError,
    PolicyValue,
    ResampledScorePolicy,
    ScoreRule,
    augment_with_fair_draws,
)

__all__ = [
    "StagePolicyClass",
    "ValueSearchResult",
    "value_search",
    "fair_value_search",
    "paper_grid",
]


def paper_grid() -> np.ndarray:
    return np.arange(-3.0, 3.0 + 1e-9, 0.5)


@dataclass(frozen=True)
class StagePolicyClass:
    """Searchable linear-score class for one stage: named product terms,
    a grid of values per term, and a fixed intercept offset."""

    terms: tuple[tuple[str, ...], ...]
    grids: tuple[np.ndarray, ...]
    intercept: float = -1.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(t) for t in self.terms))
        grids = tuple(np.asarray(g, dtype=np.float64) for g in self.grids)
        if len(grids) == 1 and len(self.terms) > 1:
            grids = grids * len(self.terms)
        if len(grids) != len(self.terms):
            raise PolicyError("one grid per term is required")
        object.__setattr__(self, "grids", grids)

    def term_matrix(self, data: Dataset) -> np.ndarray:
        cols = []
        for term in self.terms:
            prod = data.column(term[0]).copy()
            for name in term[1:]:
                prod = prod * data.column(name)
            cols.append(prod)
        return np.column_stack(cols)


@dataclass(frozen=True)
class ValueSearchResult:
    policy: object
    value: PolicyValue
    coefficients: tuple[tuple[float, ...], ...]
    n_evaluated: int
    n_undefined: int


class _Evaluator:
    """Vectorized IPW value of batches of candidate coefficient vectors.

    Values are weight-normalized (Hajek) by default: maximizing the raw
    1/N form over thousands of candidates rewards degenerate weight
    configurations, while the normalized form is bounded by the outcome
    range and keeps the logged-policy identity (weights one) intact.
    """

    def __init__(self, data: Dataset, spec: StageSpec, classes, propensity_fits,
                 normalize: bool = True):
        self.spec = spec
        self.classes = list(classes)
        self.normalize = normalize
        self.y = data.column(spec.final_outcome_col)
        self.n = data.n_rows
        self.T = [c.term_matrix(data) for c in self.classes]
        self.a_obs = [data.column(spec.action_col(k + 1)) for k in range(len(self.classes))]
        self.pi = []
        for k, fit in enumerate(propensity_fits):
            p = np.clip(fit.predict(data), 1e-6, 1 - 1e-6)
            self.pi.append(p)
        self.sizes = [len(c.terms) for c in self.classes]
        self.offsets = np.cumsum([0] + self.sizes)
        self.n_undefined = 0
        self.n_evaluated = 0

    @property
    def dim(self) -> int:
        return int(self.offsets[-1])

    def split(self, theta: np.ndarray):
        return [theta[..., self.offsets[k]:self.offsets[k + 1]] for k in range(len(self.classes))]

    def _weights(self, batch: np.ndarray) -> np.ndarray:
        B = batch.shape[0]
        w = np.ones((self.n, B))
        for k, cls in enumerate(self.classes):
            alpha = self.split(batch)[k]
            scores = self.T[k] @ alpha.T + cls.intercept
            f = scores > 0.0
            consistent = self.a_obs[k][:, None] == f
            pi_f = np.where(f, self.pi[k][:, None], 1.0 - self.pi[k][:, None])
            w *= consistent / pi_f
        return w

    def values(self, batch: np.ndarray) -> np.ndarray:
        """batch: (B, dim) coefficient rows -> (B,) IPW values (nan if undefined)."""
        batch = np.atleast_2d(batch)
        w = self._weights(batch)
        dead = ~np.any(w > 0.0, axis=0)
        self.n_undefined += int(dead.sum())
        self.n_evaluated += batch.shape[0]
        if self.normalize:
            with np.errstate(invalid="ignore", divide="ignore"):
                phi = (w * self.y[:, None]).sum(axis=0) / w.sum(axis=0)
        else:
            phi = (w * self.y[:, None]).mean(axis=0)
        phi[dead] = np.nan
        return phi

    def weights_at(self, theta: np.ndarray) -> np.ndarray:
        return self._weights(theta[None, :])[:, 0]


def _random_candidates(classes, n_random, rng) -> np.ndarray:
    cols = []
    for cls in classes:
        for g in cls.grids:
            cols.append(rng.choice(g, size=n_random))
    return np.column_stack(cols)


def _grid_axes(classes):
    axes = []
    for cls in classes:
        axes.extend(cls.grids)
    return axes


def _coordinate_ascent(ev: _Evaluator, theta: np.ndarray, max_sweeps: int) -> tuple[np.ndarray, float]:
    axes = _grid_axes(ev.classes)
    best = float(np.nan_to_num(ev.values(theta[None, :])[0], nan=-np.inf))
    for _ in range(max_sweeps):
        improved = False
        for j, axis in enumerate(axes):
            batch = np.repeat(theta[None, :], len(axis), axis=0)
            batch[:, j] = axis
            vals = np.nan_to_num(ev.values(batch), nan=-np.inf)
            i = int(np.argmax(vals))
            if vals[i] > best + 1e-12:
                best = float(vals[i])
                theta = batch[i]
                improved = True
        if not improved:
            break
    return theta, best


def _search(ev: _Evaluator, seed: int, method: str, n_random: int,
            n_restarts: int, max_sweeps: int, batch: int = 512):
    axes = _grid_axes(ev.classes)
    total = 1.0
    for a in axes:
        total *= len(a)
    if method == "auto":
        method = "exhaustive" if total <= 250_000 else "ascent"
    if method == "exhaustive":
        if total > 2_000_000:
            raise PolicyError(
                f"grid has {total:.3g} points; exhaustive enumeration is not feasible"
            )
        mesh = np.meshgrid(*axes, indexing="ij")
        cands = np.column_stack([m.ravel() for m in mesh])
        best_val = -np.inf
        best = None
        for start in range(0, cands.shape[0], batch):
            chunk = cands[start:start + batch]
            vals = np.nan_to_num(ev.values(chunk), nan=-np.inf)
            i = int(np.argmax(vals))
            if vals[i] > best_val:
                best_val = float(vals[i])
                best = chunk[i]
        return best, best_val
    if method != "ascent":
        raise PolicyError(f"unknown search method {method!r}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5EA2C4]))
    cands = _random_candidates(ev.classes, n_random, rng)
    vals = np.empty(n_random)
    for start in range(0, n_random, batch):
        vals[start:start + batch] = np.nan_to_num(
            ev.values(cands[start:start + batch]), nan=-np.inf
        )
    order = np.argsort(vals)[::-1]
    best = None
    best_val = -np.inf
    for i in order[:n_restarts]:
        theta, val = _coordinate_ascent(ev, cands[i].copy(), max_sweeps)
        if val > best_val:
            best_val = val
            best = theta
    return best, best_val


def _bootstrap_se(w: np.ndarray, y: np.ndarray, n_boot: int, seed: int,
                  normalize: bool) -> float:
    if n_boot < 2:
        return 0.0
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    n = w.shape[0]
    means = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, size=n)
        wb = w[idx]
        if normalize:
            means[b] = (wb * y[idx]).sum() / wb.sum() if wb.sum() > 0 else np.nan
        else:
            means[b] = (wb * y[idx]).mean()
    return float(np.nanstd(means, ddof=1))


def value_search(
    data: Dataset,
    spec: StageSpec,
    class_spec,
    propensity_fits,
    seed: int = 0,
    n_boot: int = 100,
    method: str = "auto",
    n_random: int = 4000,
    n_restarts: int = 3,
    max_sweeps: int = 8,
    normalize: bool = True,
) -> ValueSearchResult:
    """Maximize the IPW value over the class and return the best rule with
    its estimate and a nonparametric-bootstrap standard error."""
    classes = list(class_spec)
    if len(classes) != spec.n_stages:
        raise PolicyError(f"need {spec.n_stages} stage classes")
    ev = _Evaluator(data, spec, classes, propensity_fits, normalize=normalize)
    theta, best_val = _search(ev, seed, method, n_random, n_restarts, max_sweeps)
    if theta is None or not np.isfinite(best_val):
        raise PolicyError("no grid point produced a defined IPW value")
    rules = []
    for k, cls in enumerate(classes):
        alpha = ev.split(theta)[k]
        rules.append(ScoreRule(terms=((),) + cls.terms, coef=(cls.intercept, *alpha)))
    policy = LinearScorePolicy(rules, spec)
    se = _bootstrap_se(ev.weights_at(theta), ev.y, n_boot, seed, normalize)
    value = PolicyValue(mean=float(best_val), std_error=se,
                        method="ipw_empirical", n_replicates=n_boot)
    return ValueSearchResult(
        policy=policy,
        value=value,
        coefficients=tuple(tuple(map(float, ev.split(theta)[k])) for k in range(len(classes))),
        n_evaluated=ev.n_evaluated,
        n_undefined=ev.n_undefined,
    )


def fair_value_search(
    data: Dataset,
    spec: StageSpec,
    class_spec,
    fair,
    propensity_formulas,
    n_draws: int = 10,
    seed: int = 0,
    **search_kwargs,
) -> ValueSearchResult:
    """Value search on the fair-draw-augmented dataset, with propensities
    refit on the augmented rows; the returned policy resamples (S*, M*) at
    deployment."""
    if n_draws < 1:
        raise PolicyError("n_draws must be >= 1")
    augmented = augment_with_fair_draws(data, spec, fair, n_draws, seed)
    propensity_fits = [fit_glm(augmented, f) for f in propensity_formulas]
    result = value_search(augmented, spec, class_spec, propensity_fits,
                          seed=seed, **search_kwargs)
    fair_policy = ResampledScorePolicy(result.policy.rules, spec, fair)
    return ValueSearchResult(
        policy=fair_policy,
        value=result.value,
        coefficients=result.coefficients,
        n_evaluated=result.n_evaluated,
        n_undefined=result.n_undefined,
    )
