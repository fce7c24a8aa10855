"""Constrained maximum likelihood for the mediator and sensitive-feature
models: maximize their joint log-likelihood subject to box constraints on
selected path-specific effects, yielding the "fair world" models.

Solver: augmented Lagrangian (Powell-Hestenes-Rockafellar max(0,.)^2 form)
over the inequality constraints, BFGS inner solves with analytic likelihood
gradients and central finite-difference constraint gradients. All design
matrices are cached up front, so one constraint evaluation is a handful of
matrix-vector products.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .dataset import Dataset
from .formula import ModelFormula, build_design
from .glm import Glm, expit, fit_glm
from .pse import RATIO_CLIP, PseError
from .stages import StageSpec

__all__ = [
    "PseConstraint",
    "FairModels",
    "SolverReport",
    "ConstraintCheck",
    "InfeasibleError",
    "fit_fair_models",
    "verify_constraints",
]

PROB_CLIP = 1e-12
FD_REL_STEP = 1e-5


class InfeasibleError(RuntimeError):
    """No feasible stationary point found within the outer iteration budget."""

    def __init__(self, message: str, max_violation: float):
        super().__init__(message)
        self.max_violation = max_violation


@dataclass(frozen=True)
class PseConstraint:
    """One tolerated band for an impermissible effect."""

    target: str                 # "sy" or "sa"
    scale: str                  # "mean_difference" or "odds_ratio"
    lower: float
    upper: float
    stage: int | None = None

    def __post_init__(self):
        if self.target not in ("sy", "sa"):
            raise PseError(f"unknown constraint target {self.target!r}")
        if self.target == "sa" and self.stage is None:
            raise PseError("action constraints need a stage index")
        if self.lower > self.upper:
            raise PseError("constraint lower bound exceeds upper bound")
        if self.scale == "odds_ratio" and self.lower <= 0.0:
            raise PseError("odds-ratio bounds must be positive")

    def label(self) -> str:
        return self.target if self.target == "sy" else f"sa_{self.stage}"


@dataclass(frozen=True)
class SolverReport:
    outer_iterations: int
    inner_iterations: int
    final_penalty: float
    max_violation: float
    violation_history: tuple[float, ...]


@dataclass(frozen=True)
class ConstraintCheck:
    constraint: PseConstraint
    value: float
    satisfied: bool


@dataclass(frozen=True)
class FairModels:
    """Constrained mediator/sensitive fits plus solver diagnostics."""

    m_fits: tuple[Glm, ...]
    s_fit: Glm
    achieved: tuple[ConstraintCheck, ...]
    loglik_constrained: float
    loglik_unconstrained: float
    solver_report: SolverReport

    def to_json(self) -> str:
        return json.dumps(
            {
                "m_models": [
                    {
                        "formula": f.formula.text(),
                        "coef": dict(zip(f.formula.coef_names(), map(float, f.coef_))),
                    }
                    for f in self.m_fits
                ],
                "s_model": {
                    "formula": self.s_fit.formula.text(),
                    "coef": dict(zip(self.s_fit.formula.coef_names(), map(float, self.s_fit.coef_))),
                },
                "achieved": [
                    {
                        "target": c.constraint.label(),
                        "scale": c.constraint.scale,
                        "lower": c.constraint.lower,
                        "upper": c.constraint.upper,
                        "value": c.value,
                        "satisfied": c.satisfied,
                    }
                    for c in self.achieved
                ],
                "loglik_constrained": self.loglik_constrained,
                "loglik_unconstrained": self.loglik_unconstrained,
                "solver": {
                    "outer_iterations": self.solver_report.outer_iterations,
                    "inner_iterations": self.solver_report.inner_iterations,
                    "final_penalty": self.solver_report.final_penalty,
                    "max_violation": self.solver_report.max_violation,
                },
            }
        )


# ----------------------------------------------------------------------
# compiled evaluation engine
# ----------------------------------------------------------------------

class _Engine:
    """Caches designs/targets so likelihood and constraint values at any
    parameter vector are pure matrix arithmetic."""

    def __init__(self, data: Dataset, spec: StageSpec, m_formulas, s_formula, constraints, clip):
        self.spec = spec
        self.clip = clip
        self.constraints = list(constraints)
        s, sp = spec.s_active, spec.s_reference

        self.m_parts = []
        for f in m_formulas:
            self.m_parts.append(
                {
                    "formula": f,
                    "y": data.column(f.response),
                    "X": build_design(data, f),
                    "X_s": build_design(data, f, overrides={spec.s_col: s}),
                    "X_sp": build_design(data, f, overrides={spec.s_col: sp}),
                }
            )
        self.s_formula = s_formula
        self.s_obs = data.column(spec.s_col)
        self.X_s_model = build_design(data, s_formula)
        self.ind_s = (self.s_obs == s).astype(np.float64)
        self.ind_sp = (self.s_obs == sp).astype(np.float64)
        self.targets = {}
        for c in self.constraints:
            col = spec.final_outcome_col if c.target == "sy" else spec.action_col(c.stage)
            self.targets[id(c)] = data.column(col)

        sizes = [p["formula"].n_coef for p in self.m_parts] + [s_formula.n_coef]
        self.slices = []
        start = 0
        for size in sizes:
            self.slices.append(slice(start, start + size))
            start += size
        self.n_params = start

    def split(self, theta: np.ndarray) -> list[np.ndarray]:
        return [theta[sl] for sl in self.slices]

    # -- likelihood ----------------------------------------------------
    def neg_loglik_grad(self, theta: np.ndarray) -> tuple[float, np.ndarray]:
        parts = self.split(theta)
        ll = 0.0
        grads = []
        for part, coef in zip(self.m_parts, parts[:-1]):
            p = np.clip(expit(part["X"] @ coef), PROB_CLIP, 1 - PROB_CLIP)
            y = part["y"]
            ll += float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))
            grads.append(part["X"].T @ (y - p))
        coef_s = parts[-1]
        p = np.clip(expit(self.X_s_model @ coef_s), PROB_CLIP, 1 - PROB_CLIP)
        # the S model is a logistic model for P(S = 1 | X)
        y = (self.s_obs == 1.0).astype(np.float64)
        ll += float(np.sum(y * np.log(p) + (1 - y) * np.log1p(-p)))
        grads.append(self.X_s_model.T @ (y - p))
        return -ll, -np.concatenate(grads)

    def loglik(self, theta: np.ndarray) -> float:
        return -self.neg_loglik_grad(theta)[0]

    # -- constraint values ----------------------------------------------
    def weights(self, theta: np.ndarray):
        parts = self.split(theta)
        num = np.ones_like(self.s_obs)
        den = np.ones_like(self.s_obs)
        for part, coef in zip(self.m_parts, parts[:-1]):
            y = part["y"]
            p_s = np.clip(expit(part["X_s"] @ coef), PROB_CLIP, 1 - PROB_CLIP)
            p_sp = np.clip(expit(part["X_sp"] @ coef), PROB_CLIP, 1 - PROB_CLIP)
            num = num * np.where(y == 1.0, p_sp, 1 - p_sp)
            den = den * np.where(y == 1.0, p_s, 1 - p_s)
        ratio = np.clip(num / den, self.clip[0], self.clip[1])
        p_s1 = np.clip(expit(self.X_s_model @ parts[-1]), PROB_CLIP, 1 - PROB_CLIP)
        p_s_obs = np.where(self.s_obs == 1.0, p_s1, 1 - p_s1)
        w1 = self.ind_s / p_s_obs * ratio
        w2 = self.ind_sp / p_s_obs
        return w1, w2

    def pse_values(self, theta: np.ndarray) -> np.ndarray:
        w1, w2 = self.weights(theta)
        sw1, sw2 = np.sum(w1), np.sum(w2)
        out = np.empty(len(self.constraints))
        for j, c in enumerate(self.constraints):
            t = self.targets[id(c)]
            if c.scale == "mean_difference":
                out[j] = np.mean((w1 - w2) * t)
            else:
                p1 = min(max(float(np.sum(w1 * t) / sw1), PROB_CLIP), 1 - PROB_CLIP)
                p2 = min(max(float(np.sum(w2 * t) / sw2), PROB_CLIP), 1 - PROB_CLIP)
                out[j] = (p1 / (1 - p1)) / (p2 / (1 - p2))
        return out

    def pse_jacobian(self, theta: np.ndarray) -> np.ndarray:
        """Central finite differences of every constraint value at once."""
        jac = np.empty((len(self.constraints), self.n_params))
        for i in range(self.n_params):
            h = FD_REL_STEP * max(1.0, abs(theta[i]))
            up = theta.copy()
            up[i] += h
            down = theta.copy()
            down[i] -= h
            jac[:, i] = (self.pse_values(up) - self.pse_values(down)) / (2 * h)
        return jac

    def inequality_values(self, theta: np.ndarray) -> np.ndarray:
        """c(theta) <= 0 form: (value - upper, lower - value) per constraint."""
        g = self.pse_values(theta)
        out = np.empty(2 * len(self.constraints))
        for j, c in enumerate(self.constraints):
            out[2 * j] = g[j] - c.upper
            out[2 * j + 1] = c.lower - g[j]
        return out

    def inequality_jacobian(self, theta: np.ndarray) -> np.ndarray:
        jg = self.pse_jacobian(theta)
        out = np.empty((2 * len(self.constraints), self.n_params))
        out[0::2] = jg
        out[1::2] = -jg
        return out


# ----------------------------------------------------------------------
# the solver
# ----------------------------------------------------------------------

def fit_fair_models(
    data: Dataset,
    spec: StageSpec,
    m_formulas,
    s_formula: ModelFormula,
    constraints,
    tol_feas: float = 1e-4,
    clip: tuple[float, float] = RATIO_CLIP,
    rho0: float = 10.0,
    max_outer: int = 12,
    inner_maxiter: int = 300,
) -> FairModels:
    """Maximize the joint mediator+sensitive log-likelihood subject to the
    given effect bands, starting from the unconstrained MLE."""
    if not constraints:
        raise PseError("at least one constraint is required")
    if isinstance(m_formulas, ModelFormula):
        m_formulas = [m_formulas]
    m_formulas = list(m_formulas)
    for f in m_formulas + [s_formula]:
        if f.link != "logit":
            raise PseError("constrained fitting expects logistic mediator/sensitive models")

    m_mle = [fit_glm(data, f) for f in m_formulas]
    s_mle = fit_glm(data, s_formula)
    engine = _Engine(data, spec, m_formulas, s_formula, constraints, clip)
    theta0 = np.concatenate([f.coef_ for f in m_mle] + [s_mle.coef_])
    loglik_unconstrained = engine.loglik(theta0)

    # inactive-constraint shortcut: the MLE itself may already be feasible
    c0 = engine.inequality_values(theta0)
    history = [float(np.max(np.maximum(c0, 0.0)))]
    if history[0] <= tol_feas:
        return _package(engine, theta0, m_mle, s_mle, loglik_unconstrained,
                        SolverReport(0, 0, 0.0, history[0], tuple(history)), tol_feas)

    n_ineq = 2 * len(engine.constraints)
    lam = np.zeros(n_ineq)
    rho = float(rho0)
    theta = theta0.copy()
    inner_total = 0

    for outer in range(1, max_outer + 1):
        def objective(th):
            f, g = engine.neg_loglik_grad(th)
            c = engine.inequality_values(th)
            active = np.maximum(0.0, lam + rho * c)
            f += float(np.sum(active**2 - lam**2) / (2.0 * rho))
            jc = engine.inequality_jacobian(th)
            g = g + jc.T @ active
            return f, g

        res = minimize(
            objective,
            theta,
            method="BFGS",
            jac=True,
            options={"maxiter": inner_maxiter, "gtol": 1e-6},
        )
        theta = res.x
        inner_total += int(res.nit)
        c = engine.inequality_values(theta)
        viol = float(np.max(np.maximum(c, 0.0)))
        history.append(viol)
        lam = np.maximum(0.0, lam + rho * c)
        if viol <= tol_feas:
            report = SolverReport(outer, inner_total, rho, viol, tuple(history))
            return _package(engine, theta, m_mle, s_mle, loglik_unconstrained, report, tol_feas)
        rho *= 10.0

    raise InfeasibleError(
        f"constrained fit infeasible after {max_outer} outer iterations "
        f"(max violation {history[-1]:.3e})",
        max_violation=history[-1],
    )


def _package(engine, theta, m_mle, s_mle, loglik_unconstrained, report, tol_feas) -> FairModels:
    parts = engine.split(theta)
    m_fits = tuple(mle.with_coef(c) for mle, c in zip(m_mle, parts[:-1]))
    s_fit = s_mle.with_coef(parts[-1])
    loglik_constrained = engine.loglik(theta)
    if not np.isfinite(loglik_constrained):
        raise PseError("non-finite constrained log-likelihood")
    values = engine.pse_values(theta)
    achieved = tuple(
        ConstraintCheck(
            constraint=c,
            value=float(v),
            satisfied=bool(c.lower - tol_feas <= v <= c.upper + tol_feas),
        )
        for c, v in zip(engine.constraints, values)
    )
    return FairModels(
        m_fits=m_fits,
        s_fit=s_fit,
        achieved=achieved,
        loglik_constrained=float(loglik_constrained),
        loglik_unconstrained=float(loglik_unconstrained),
        solver_report=report,
    )


def verify_constraints(
    models: FairModels,
    data: Dataset,
    spec: StageSpec,
    constraints=None,
    tol_feas: float = 1e-4,
    clip: tuple[float, float] = RATIO_CLIP,
) -> list[ConstraintCheck]:
    """Re-evaluate every constrained effect at the fitted parameters."""
    if constraints is None:
        constraints = [c.constraint for c in models.achieved]
    m_formulas = [f.formula for f in models.m_fits]
    engine = _Engine(data, spec, m_formulas, models.s_fit.formula, constraints, clip)
    theta = np.concatenate([f.coef_ for f in models.m_fits] + [models.s_fit.coef_])
    values = engine.pse_values(theta)
    return [
        ConstraintCheck(
            constraint=c,
            value=float(v),
            satisfied=bool(c.lower - tol_feas <= v <= c.upper + tol_feas),
        )
        for c, v in zip(constraints, values)
    ]
