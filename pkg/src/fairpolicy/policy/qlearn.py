"""Q-learning by backward recursion, plus its fair variants.

Stage K regresses the final outcome on history and action; each earlier
stage regresses the action-maximized fitted value of the next stage. The
fair variants either average the fitted Q-functions over candidate
(mediator, sensitive) values weighted by the constrained models, or refit
on histories with those columns resampled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..dataset import Dataset
from ..formula import ModelFormula
from ..glm import Glm, GlmError, fit_glm
from ..stages import StageSpec
from .base import (
    FairQPolicy,
    PolicyError,
    QPolicy,
    ResampledQPolicy,
    augment_with_fair_draws,
)

__all__ = ["QFit", "q_learning", "fair_q_star", "fair_q_resample", "value_column_name"]


def value_column_name(stage: int) -> str:
    return f"_V{stage}"


@dataclass(frozen=True)
class QFit:
    """Fitted per-stage Q models (stage K first in time, last in recursion)."""

    stage_fits: tuple[Glm, ...]
    spec: StageSpec
    values: dict[str, np.ndarray]

    @property
    def n_stages(self) -> int:
        return len(self.stage_fits)

    def policy(self) -> QPolicy:
        return QPolicy(self.stage_fits, self.spec)


def q_learning(data: Dataset, spec: StageSpec, stage_formulas) -> QFit:
    """Backward-recursive regression fit of all stage Q-functions.

    ``stage_formulas[k-1]`` describes the stage-k regression; formulas for
    stages below K are refit against the computed value column, whatever
    response they declare. Each stage model must include the stage action
    among its terms.
    """
    stage_formulas = list(stage_formulas)
    if len(stage_formulas) != spec.n_stages:
        raise PolicyError(f"need {spec.n_stages} stage formulas")
    K = spec.n_stages
    for k, f in enumerate(stage_formulas, start=1):
        a_col = spec.action_col(k)
        if all(a_col not in t for t in f.terms):
            raise PolicyError(f"stage {k} formula does not involve the action {a_col!r}")

    work = data
    fits: list[Glm] = [None] * K
    values: dict[str, np.ndarray] = {}
    for k in range(K, 0, -1):
        f = stage_formulas[k - 1]
        response = spec.outcome_col(K) if k == K else value_column_name(k + 1)
        if f.response != response:
            f = replace(f, response=response)
        if f.link != "identity" and not (k == K and work.is_binary(response)):
            f = replace(f, link="identity")
        try:
            fits[k - 1] = fit_glm(work, f)
        except GlmError as exc:
            raise PolicyError(f"stage {k} regression failed: {exc}") from exc
        a_col = spec.action_col(k)
        q1 = fits[k - 1].predict(work, overrides={a_col: 1.0})
        q0 = fits[k - 1].predict(work, overrides={a_col: 0.0})
        v = np.maximum(q1, q0)
        values[value_column_name(k)] = v
        if k > 1:
            work = work.with_columns({value_column_name(k): v})
    return QFit(stage_fits=tuple(fits), spec=spec, values=values)


def fair_q_star(
    qfit: QFit,
    fair,
    behavior_a_fits,
    spec: StageSpec | None = None,
    condition_on_actions: bool = True,
    condition_on_current_action: bool = False,
    condition_on_intermediates: bool = False,
    behavior_y_fits=None,
) -> FairQPolicy:
    """Fair policy from Q-functions averaged over (m, s) candidates.

    ``behavior_a_fits`` are the fitted full-history action models whose
    densities weight each candidate by how well it explains the decisions
    observed so far; optionally the weights also condition on the
    contemplated current action and on intermediate stage outcomes.
    """
    return FairQPolicy(
        stage_fits=qfit.stage_fits,
        spec=spec or qfit.spec,
        fair=fair,
        behavior_a_fits=behavior_a_fits,
        condition_on_actions=condition_on_actions,
        condition_on_current_action=condition_on_current_action,
        condition_on_intermediates=condition_on_intermediates,
        behavior_y_fits=behavior_y_fits,
    )


def fair_q_resample(
    data: Dataset,
    spec: StageSpec,
    fair,
    stage_formulas,
    n_draws: int = 10,
    seed: int = 0,
) -> ResampledQPolicy:
    """Fair policy from Q-learning on an (S*, M*)-resampled dataset."""
    augmented = augment_with_fair_draws(data, spec, fair, n_draws, seed)
    qfit = q_learning(augmented, spec, stage_formulas)
    return ResampledQPolicy(qfit.stage_fits, spec, fair)
