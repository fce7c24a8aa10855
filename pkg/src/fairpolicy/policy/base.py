"""Decision-rule objects shared by the policy learners.

Every policy maps a dataset of histories to binary actions per stage via
``decide``. Rules that must not consume the observed sensitive feature or
mediators (because those were drawn from the unfair world) carry
``uses_fair_history = True`` and either average over or resample the
constrained models at decision time.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass

import numpy as np

from ..dataset import Dataset
from ..glm import Glm
from ..stages import StageSpec

__all__ = [
    "PolicyError",
    "DegenerateHistoryError",
    "PolicyValue",
    "ScoreRule",
    "QPolicy",
    "FairQPolicy",
    "ResampledQPolicy",
    "LinearScorePolicy",
    "ResampledScorePolicy",
    "AveragedScorePolicy",
    "ConstantPolicy",
    "RandomPolicy",
    "sample_fair_columns",
    "augment_with_fair_draws",
]


class PolicyError(RuntimeError):
    pass


class DegenerateHistoryError(PolicyError):
    """All candidate (mediator, sensitive) weights vanished for some row."""


@dataclass(frozen=True)
class PolicyValue:
    mean: float
    std_error: float
    method: str          # "monte_carlo_dgp" or "ipw_empirical"
    n_replicates: int

    def __post_init__(self):
        if self.std_error < 0:
            raise PolicyError("standard error must be nonnegative")

    def to_json(self) -> str:
        return json.dumps(
            {"mean": self.mean, "std_error": self.std_error,
             "method": self.method, "n_replicates": self.n_replicates}
        )


# ----------------------------------------------------------------------
# fair-history draws
# ----------------------------------------------------------------------

def sample_fair_columns(data: Dataset, spec: StageSpec, fair, rng) -> dict[str, np.ndarray]:
    """One draw of (S*, M*) per row from the constrained models."""
    s_star = fair.s_fit.sample(data, rng)
    cols = {spec.s_col: s_star}
    work = data.with_columns(cols)
    for fit in fair.m_fits:
        name = fit.formula.response
        cols[name] = fit.sample(work, rng)
        work = work.with_columns({name: cols[name]})
    return cols


def augment_with_fair_draws(
    data: Dataset, spec: StageSpec, fair, n_draws: int, seed: int
) -> Dataset:
    """Each row replicated ``n_draws`` times with (S*, M*) resampled."""
    if n_draws < 1:
        raise PolicyError("n_draws must be >= 1")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0xFA12]))
    big = data.replicate_rows(n_draws)
    return big.with_columns(sample_fair_columns(big, spec, fair, rng))


# ----------------------------------------------------------------------
# score rules
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreRule:
    """A linear score over named product terms; act iff the score is > 0.

    The empty term () is the intercept. Exact zero scores take the
    reference action, so rules are deterministic.
    """

    terms: tuple[tuple[str, ...], ...]
    coef: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(tuple(t) for t in self.terms))
        object.__setattr__(self, "coef", tuple(float(c) for c in self.coef))
        if len(self.terms) != len(self.coef):
            raise PolicyError("terms and coefficients must align")

    def score(self, data: Dataset, overrides: dict | None = None) -> np.ndarray:
        overrides = overrides or {}
        out = np.zeros(data.n_rows)
        for term, c in zip(self.terms, self.coef):
            if not term:
                out += c
                continue
            prod = np.ones(data.n_rows)
            for name in term:
                if name in overrides:
                    prod = prod * np.broadcast_to(
                        np.asarray(overrides[name], dtype=np.float64), (data.n_rows,)
                    )
                else:
                    prod = prod * data.column(name)
            out += c * prod
        return out

    def to_dict(self):
        return {"terms": [":".join(t) if t else "1" for t in self.terms],
                "coef": list(self.coef)}


# ----------------------------------------------------------------------
# policies
# ----------------------------------------------------------------------

class QPolicy:
    """Argmax of fitted stage Q-functions over the full history."""

    uses_fair_history = False

    def __init__(self, stage_fits, spec: StageSpec):
        self.stage_fits = tuple(stage_fits)
        self.spec = spec

    @property
    def n_stages(self) -> int:
        return len(self.stage_fits)

    def q_values(self, data: Dataset, stage: int, action: float) -> np.ndarray:
        a_col = self.spec.action_col(stage)
        return self.stage_fits[stage - 1].predict(data, overrides={a_col: float(action)})

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        q1 = self.q_values(data, stage, 1.0)
        q0 = self.q_values(data, stage, 0.0)
        return (q1 > q0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rule": "q_argmax",
                "fair_history": False,
                "stages": [
                    {"formula": f.formula.text(),
                     "coef": dict(zip(f.formula.coef_names(), map(float, f.coef_)))}
                    for f in self.stage_fits
                ],
            }
        )


class FairQPolicy:
    """Argmax of Q-functions averaged over (mediator, sensitive) candidates.

    The stage-k weight of a candidate (m, s) is the constrained-model prior
    p*(m, s | X) times the likelihood of the observed earlier actions (and
    of the contemplated current action) under the behavior models evaluated
    at that candidate, normalized per row.
    """

    uses_fair_history = True

    def __init__(
        self,
        stage_fits,
        spec: StageSpec,
        fair,
        behavior_a_fits,
        condition_on_actions: bool = True,
        condition_on_current_action: bool = False,
        condition_on_intermediates: bool = False,
        behavior_y_fits=None,
    ):
        self.stage_fits = tuple(stage_fits)
        self.spec = spec
        self.fair = fair
        self.behavior_a_fits = tuple(behavior_a_fits)
        self.behavior_y_fits = tuple(behavior_y_fits or ())
        self.condition_on_actions = condition_on_actions
        self.condition_on_current_action = condition_on_current_action
        self.condition_on_intermediates = condition_on_intermediates
        if condition_on_intermediates and len(self.behavior_y_fits) < spec.n_stages - 1:
            raise PolicyError("conditioning on intermediates needs stage-outcome fits")

    @property
    def n_stages(self) -> int:
        return len(self.stage_fits)

    def _candidate_weights(self, data: Dataset, stage: int):
        """Unnormalized weights per (m, s) candidate, before the current-action factor."""
        spec = self.spec
        n = data.n_rows
        combos = []
        m_cols = spec.all_m_cols()
        for s_val in (0.0, 1.0):
            for m_vals in itertools.product((0.0, 1.0), repeat=len(m_cols)):
                ov = {spec.s_col: s_val, **dict(zip(m_cols, m_vals))}
                p_s1 = self.fair.s_fit.predict(data)
                w = np.where(s_val == 1.0, p_s1, 1.0 - p_s1).copy()
                for fit, value in zip(self.fair.m_fits, m_vals):
                    pm = fit.predict(data, overrides=ov)
                    w *= np.where(value == 1.0, pm, 1.0 - pm)
                if self.condition_on_actions:
                    for i in range(1, stage):
                        a_obs = data.column(spec.action_col(i))
                        pa = self.behavior_a_fits[i - 1].predict(data, overrides=ov)
                        w *= np.where(a_obs == 1.0, pa, 1.0 - pa)
                if self.condition_on_intermediates:
                    for i in range(1, stage):
                        y_obs = data.column(spec.outcome_col(i))
                        py = self.behavior_y_fits[i - 1].predict(data, overrides=ov)
                        w *= np.where(y_obs == 1.0, py, 1.0 - py)
                combos.append((ov, w))
        return combos

    def fair_q_values(self, data: Dataset, stage: int, action: float) -> np.ndarray:
        spec = self.spec
        a_col = spec.action_col(stage)
        combos = self._candidate_weights(data, stage)
        num = np.zeros(data.n_rows)
        den = np.zeros(data.n_rows)
        for ov, w in combos:
            w_a = w
            if self.condition_on_current_action:
                pa = self.behavior_a_fits[stage - 1].predict(data, overrides=ov)
                w_a = w * np.where(action == 1.0, pa, 1.0 - pa)
            q = self.stage_fits[stage - 1].predict(data, overrides={**ov, a_col: float(action)})
            num += w_a * q
            den += w_a
        if np.any(den <= 0.0):
            row = int(np.argmax(den <= 0.0))
            raise DegenerateHistoryError(f"zero candidate-weight normalizer at row {row}")
        return num / den

    def normalized_weights(self, data: Dataset, stage: int, action: float) -> np.ndarray:
        """(n_combos, n_rows) normalized weights; columns sum to one."""
        combos = self._candidate_weights(data, stage)
        spec = self.spec
        rows = []
        for ov, w in combos:
            w_a = w
            if self.condition_on_current_action:
                pa = self.behavior_a_fits[stage - 1].predict(data, overrides=ov)
                w_a = w * np.where(action == 1.0, pa, 1.0 - pa)
            rows.append(w_a)
        mat = np.vstack(rows)
        total = mat.sum(axis=0)
        if np.any(total <= 0.0):
            raise DegenerateHistoryError("zero candidate-weight normalizer")
        return mat / total

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        q1 = self.fair_q_values(data, stage, 1.0)
        q0 = self.fair_q_values(data, stage, 0.0)
        return (q1 > q0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rule": "fair_q_argmax",
                "fair_history": True,
                "condition_on_actions": self.condition_on_actions,
                "condition_on_current_action": self.condition_on_current_action,
                "condition_on_intermediates": self.condition_on_intermediates,
                "stages": [
                    {"formula": f.formula.text(),
                     "coef": dict(zip(f.formula.coef_names(), map(float, f.coef_)))}
                    for f in self.stage_fits
                ],
            }
        )


class ResampledQPolicy:
    """Argmax of Q-functions trained on resampled histories; decisions draw
    fresh (S*, M*) from the constrained models."""

    uses_fair_history = True

    def __init__(self, stage_fits, spec: StageSpec, fair):
        self.stage_fits = tuple(stage_fits)
        self.spec = spec
        self.fair = fair

    @property
    def n_stages(self) -> int:
        return len(self.stage_fits)

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        if rng is None:
            raise PolicyError("resampling policies need an RNG at decision time")
        star = sample_fair_columns(data, self.spec, self.fair, rng)
        a_col = self.spec.action_col(stage)
        fit = self.stage_fits[stage - 1]
        q1 = fit.predict(data, overrides={**star_as_overrides(star), a_col: 1.0})
        q0 = fit.predict(data, overrides={**star_as_overrides(star), a_col: 0.0})
        return (q1 > q0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage, rng)

    def to_json(self) -> str:
        return json.dumps(
            {
                "rule": "resampled_q_argmax",
                "fair_history": True,
                "stages": [
                    {"formula": f.formula.text(),
                     "coef": dict(zip(f.formula.coef_names(), map(float, f.coef_)))}
                    for f in self.stage_fits
                ],
            }
        )


def star_as_overrides(star: dict[str, np.ndarray]) -> dict:
    # per-row overrides are arrays; build_design broadcasting handles them
    return dict(star)


class LinearScorePolicy:
    """Per-stage linear score rules over the full history."""

    uses_fair_history = False

    def __init__(self, rules, spec: StageSpec):
        self.rules = tuple(rules)
        self.spec = spec

    @property
    def n_stages(self) -> int:
        return len(self.rules)

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return (self.rules[stage - 1].score(data) > 0.0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage)

    def to_json(self) -> str:
        return json.dumps(
            {"rule": "linear_score", "fair_history": False,
             "stages": [r.to_dict() for r in self.rules]}
        )


class ResampledScorePolicy:
    """Score rules consuming resampled (S*, M*) at decision time."""

    uses_fair_history = True

    def __init__(self, rules, spec: StageSpec, fair):
        self.rules = tuple(rules)
        self.spec = spec
        self.fair = fair

    @property
    def n_stages(self) -> int:
        return len(self.rules)

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        if rng is None:
            raise PolicyError("resampling policies need an RNG at decision time")
        star = sample_fair_columns(data, self.spec, self.fair, rng)
        score = self.rules[stage - 1].score(data, overrides=star)
        return (score > 0.0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage, rng)

    def to_json(self) -> str:
        return json.dumps(
            {"rule": "resampled_linear_score", "fair_history": True,
             "stages": [r.to_dict() for r in self.rules]}
        )


class AveragedScorePolicy:
    """Score rules averaged over (m, s) candidates under the constrained
    models: act iff the expected score is positive."""

    uses_fair_history = True

    def __init__(self, rules, spec: StageSpec, fair):
        self.rules = tuple(rules)
        self.spec = spec
        self.fair = fair

    @property
    def n_stages(self) -> int:
        return len(self.rules)

    def expected_score(self, data: Dataset, stage: int) -> np.ndarray:
        spec = self.spec
        m_cols = spec.all_m_cols()
        total = np.zeros(data.n_rows)
        p_s1 = self.fair.s_fit.predict(data)
        for s_val in (0.0, 1.0):
            for m_vals in itertools.product((0.0, 1.0), repeat=len(m_cols)):
                ov = {spec.s_col: s_val, **dict(zip(m_cols, m_vals))}
                w = np.where(s_val == 1.0, p_s1, 1.0 - p_s1).copy()
                for fit, value in zip(self.fair.m_fits, m_vals):
                    pm = fit.predict(data, overrides=ov)
                    w *= np.where(value == 1.0, pm, 1.0 - pm)
                total += w * self.rules[stage - 1].score(data, overrides=ov)
        return total

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return (self.expected_score(data, stage) > 0.0).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage)

    def to_json(self) -> str:
        return json.dumps(
            {"rule": "averaged_linear_score", "fair_history": True,
             "stages": [r.to_dict() for r in self.rules]}
        )


class ConstantPolicy:
    uses_fair_history = False

    def __init__(self, action: float, n_stages: int):
        self.action = float(action)
        self._n = n_stages

    @property
    def n_stages(self) -> int:
        return self._n

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return np.full(data.n_rows, self.action)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return self.decide(data, stage)

    def to_json(self) -> str:
        return json.dumps({"rule": "constant", "action": self.action})


class RandomPolicy:
    uses_fair_history = False

    def __init__(self, p: float, n_stages: int):
        self.p = float(p)
        self._n = n_stages

    @property
    def n_stages(self) -> int:
        return self._n

    def decide(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        if rng is None:
            raise PolicyError("random policies need an RNG at decision time")
        return (rng.random(data.n_rows) < self.p).astype(np.float64)

    def action_prob(self, data: Dataset, stage: int, rng=None) -> np.ndarray:
        return np.full(data.n_rows, self.p)

    def to_json(self) -> str:
        return json.dumps({"rule": "random", "p": self.p})
