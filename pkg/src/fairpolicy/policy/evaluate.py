"""Policy-value estimation: Monte Carlo against a generating process, or
IPW on logged data."""

from __future__ import annotations

import numpy as np

from ..dataset import Dataset
from ..stages import StageSpec
from ..synth import DgpSpec, generate
from .base import PolicyError, PolicyValue

__all__ = ["evaluate_policy_mc", "evaluate_policy_ipw", "LoggedPolicy"]


class LoggedPolicy:
    """The behavior policy itself, represented by its fitted propensities.

    Its IPW value reduces to the sample mean of the outcome (unit weights).
    """

    uses_fair_history = False

    def __init__(self, propensity_fits, spec: StageSpec):
        self.propensity_fits = tuple(propensity_fits)
        self.spec = spec

    @property
    def n_stages(self) -> int:
        return len(self.propensity_fits)

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        if rng is None:
            raise PolicyError("the logged policy draws actions; an RNG is required")
        p = self.propensity_fits[stage - 1].predict(data)
        return (rng.random(data.n_rows) < p).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.propensity_fits[stage - 1].predict(data)


def _replicate_seed(seed: int, r: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0x3C0, r]).generate_state(1)[0])


def evaluate_policy_mc(
    policy,
    dgp: DgpSpec,
    spec: StageSpec,
    n: int = 10000,
    n_replicates: int = 20,
    seed: int = 0,
) -> PolicyValue:
    """Mean final outcome under the policy, simulated from the generating
    equations; the standard error is across independent replicates.

    ``policy`` may be "logged" to score the observed behavior (no
    intervention), or any object with a ``decide`` method. Fair policies
    never see the simulated sensitive/mediator columns: their decision
    rules average over or resample the constrained models internally.
    """
    if n_replicates < 2:
        raise PolicyError("n_replicates must be >= 2")
    means = np.empty(n_replicates)
    for r in range(n_replicates):
        rep_seed = _replicate_seed(seed, r)
        if policy == "logged":
            data = generate(dgp, n, seed=rep_seed)
        else:
            interventions = {}
            for k, (a_col, _) in enumerate(spec.stages, start=1):
                interventions[a_col] = (
                    lambda partial, rng, k=k: policy.decide(partial, k, rng)
                )
            data = generate(dgp, n, seed=rep_seed, interventions=interventions)
        means[r] = data.column(spec.final_outcome_col).mean()
    return PolicyValue(
        mean=float(means.mean()),
        std_error=float(means.std(ddof=1) / np.sqrt(n_replicates)),
        method="monte_carlo_dgp",
        n_replicates=n_replicates,
    )


def evaluate_policy_ipw(
    policy,
    data: Dataset,
    spec: StageSpec,
    propensity_fits,
    n_boot: int = 100,
    seed: int = 0,
) -> PolicyValue:
    """IPW value on logged data: mean of prod_k {p_f(A_k|H_k)/pi(A_k|H_k)} Y.

    For deterministic rules the numerator is the consistency indicator
    I(A_k = f_k(H_k)); for stochastic rules it is the rule's probability of
    the observed action. Standard error by nonparametric bootstrap of the
    per-row weighted terms.
    """
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x1B3]))
    w = np.ones(data.n_rows)
    for k in range(1, spec.n_stages + 1):
        a_obs = data.column(spec.action_col(k))
        pf1 = np.asarray(policy.action_prob(data, k, rng), dtype=np.float64)
        pf_obs = np.where(a_obs == 1.0, pf1, 1.0 - pf1)
        pi1 = np.clip(propensity_fits[k - 1].predict(data), 1e-6, 1 - 1e-6)
        pi_obs = np.where(a_obs == 1.0, pi1, 1.0 - pi1)
        w *= pf_obs / pi_obs
    terms = w * data.column(spec.final_outcome_col)
    if not np.any(w > 0.0):
        raise PolicyError("IPW value undefined: the policy is inconsistent with every row")
    boot_rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xB007]))
    means = np.empty(n_boot)
    for b in range(n_boot):
        idx = boot_rng.integers(0, data.n_rows, size=data.n_rows)
        means[b] = terms[idx].mean()
    return PolicyValue(
        mean=float(terms.mean()),
        std_error=float(means.std(ddof=1)),
        method="ipw_empirical",
        n_replicates=n_boot,
    )
