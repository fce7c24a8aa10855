"""Policy learning against the observed or fair world: Q-learning, value
search, and single-stage g-estimation, each with a fair variant."""

from .base import (
    AveragedScorePolicy,
    ConstantPolicy,
    DegenerateHistoryError,
    FairQPolicy,
    LinearScorePolicy,
    PolicyError,
    PolicyValue,
    QPolicy,
    RandomPolicy,
    ResampledQPolicy,
    ResampledScorePolicy,
    ScoreRule,
    augment_with_fair_draws,
    sample_fair_columns,
)
from .evaluate import LoggedPolicy, evaluate_policy_ipw, evaluate_policy_mc
from .gest import GEstimationFit, fair_g_estimation, g_estimation
from .qlearn import QFit, fair_q_resample, fair_q_star, q_learning, value_column_name
from .vsearch import (
    StagePolicyClass,
    ValueSearchResult,
    fair_value_search,
    paper_grid,
    value_search,
)

__all__ = [
    "AveragedScorePolicy",
    "ConstantPolicy",
    "DegenerateHistoryError",
    "FairQPolicy",
    "GEstimationFit",
    "LinearScorePolicy",
    "LoggedPolicy",
    "PolicyError",
    "PolicyValue",
    "QFit",
    "QPolicy",
    "RandomPolicy",
    "ResampledQPolicy",
    "ResampledScorePolicy",
    "ScoreRule",
    "StagePolicyClass",
    "ValueSearchResult",
    "augment_with_fair_draws",
    "evaluate_policy_ipw",
    "evaluate_policy_mc",
    "fair_g_estimation",
    "fair_q_resample",
    "fair_q_star",
    "fair_value_search",
    "g_estimation",
    "paper_grid",
    "q_learning",
    "sample_fair_columns",
    "value_column_name",
    "value_search",
]
