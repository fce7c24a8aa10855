"""Path-specific effect estimators.

Three routes to the same targets:

* inverse-probability weighting from fitted mediator/sensitive models,
* the plug-in g-formula (fitted outcome + mediator models, empirical X),
* exact enumeration on a finite discrete joint (the oracle).

The impermissible effects are the S-to-outcome and S-to-action contrasts
that bypass the allowed mediator block(s): E[T(s, M(s'))] - E[T(s')] on the
mean-difference scale, or the odds ratio of the two counterfactual means
for binary targets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .dataset import Dataset
from .discrete import DiscreteJoint
from .glm import Glm
from .stages import StageSpec

__all__ = [
    "PseError",
    "DegenerateWeightError",
    "WeightsSummary",
    "PseEstimate",
    "estimate_pse_sy_ipw",
    "estimate_pse_sak_ipw",
    "estimate_pse_plugin",
    "estimate_pse_multimediator",
    "population_ipw_pse",
    "enumeration_pse",
    "RATIO_CLIP",
]

RATIO_CLIP = (1e-6, 1e6)


class PseError(RuntimeError):
    pass


class DegenerateWeightError(PseError):
    """A propensity or mediator density degenerated to 0/1 mass."""


@dataclass(frozen=True)
class WeightsSummary:
    min: float
    max: float
    mean: float
    n_clipped: int = 0


@dataclass(frozen=True)
class PseEstimate:
    kind: str                 # "sy" or "sa"
    scale: str                # "mean_difference" or "odds_ratio"
    value: float
    method: str               # "ipw" or "plugin"
    stage: int | None = None
    weights: WeightsSummary | None = None

    def __post_init__(self):
        if self.scale == "odds_ratio" and not self.value > 0.0:
            raise PseError(f"odds ratio must be positive, got {self.value}")

    def to_json(self) -> str:
        blob = {
            "kind": self.kind,
            "stage": self.stage,
            "scale": self.scale,
            "value": self.value,
            "method": self.method,
        }
        if self.weights is not None:
            blob["weights"] = {
                "min": self.weights.min,
                "max": self.weights.max,
                "mean": self.weights.mean,
                "n_clipped": self.weights.n_clipped,
            }
        return json.dumps(blob)


# ----------------------------------------------------------------------
# shared weight machinery
# ----------------------------------------------------------------------

def _as_fit_list(fits) -> list[Glm]:
    return list(fits) if isinstance(fits, (list, tuple)) else [fits]


def _block_density(data: Dataset, fits: Sequence[Glm], s_col: str, s_value: float) -> np.ndarray:
    """Density of the observed mediator block under S := s_value.

    Vector blocks factorize as sequential binary models in column order;
    earlier components enter later fits through their observed values.
    """
    dens = np.ones(data.n_rows)
    for fit in fits:
        dens = dens * fit.density(data, overrides={s_col: s_value})
    return dens


def _check_positive(values: np.ndarray, what: str) -> None:
    if np.any(values <= 0.0):
        row = int(np.argmax(values <= 0.0))
        raise DegenerateWeightError(f"{what} is zero at row {row}")


def theorem1_weights(
    data: Dataset,
    spec: StageSpec,
    m_fits,
    s_fit: Glm,
    clip: tuple[float, float] = RATIO_CLIP,
    n_blocks: int | None = None,
):
    """The two Theorem-style weight vectors (counterfactual arm, reference arm).

    Weight 1 is I(S=s)/p(S|X) times the mediator density ratio under s'
    versus s (a product over blocks in the multi-block layout); weight 2 is
    I(S=s')/p(S|X). Ratios are clipped to `clip` with a diagnostic count.
    """
    s, sp = spec.s_active, spec.s_reference
    s_obs = data.column(spec.s_col)
    p_s1 = s_fit.predict(data)
    p_s_obs = np.where(s_obs == 1.0, p_s1, 1.0 - p_s1)
    _check_positive(p_s_obs, "sensitive-model propensity")

    if spec.multi_mediator:
        blocks = spec.m_blocks if n_blocks is None else spec.m_blocks[:n_blocks]
        fits_per_block = m_fits if n_blocks is None else m_fits[:n_blocks]
        num = np.ones(data.n_rows)
        den = np.ones(data.n_rows)
        for block_fits in fits_per_block:
            num = num * _block_density(data, _as_fit_list(block_fits), spec.s_col, sp)
            den = den * _block_density(data, _as_fit_list(block_fits), spec.s_col, s)
    else:
        fits = _as_fit_list(m_fits)
        num = _block_density(data, fits, spec.s_col, sp)
        den = _block_density(data, fits, spec.s_col, s)
    _check_positive(den, "mediator density under s")
    ratio = num / den
    n_clipped = int(np.sum((ratio < clip[0]) | (ratio > clip[1])))
    ratio = np.clip(ratio, clip[0], clip[1])

    w1 = (s_obs == s).astype(np.float64) / p_s_obs * ratio
    w2 = (s_obs == sp).astype(np.float64) / p_s_obs
    return w1, w2, n_clipped


def _summary(w1, w2, n_clipped) -> WeightsSummary:
    w = w1 + w2  # indicators are disjoint, so this stacks the two arms
    return WeightsSummary(float(w.min()), float(w.max()), float(w.mean()), n_clipped)


def _mean_difference(w1, w2, target) -> float:
    return float(np.mean((w1 - w2) * target))


def _odds(p: float) -> float:
    return p / (1.0 - p)


def _odds_ratio(w1, w2, target) -> float:
    """Odds ratio of the two weighted counterfactual means (weights normalized)."""
    p1 = float(np.sum(w1 * target) / np.sum(w1))
    p2 = float(np.sum(w2 * target) / np.sum(w2))
    for name, p in (("counterfactual arm", p1), ("reference arm", p2)):
        if not 0.0 < p < 1.0:
            raise DegenerateWeightError(f"weighted mean of the {name} is {p}, outside (0,1)")
    return _odds(p1) / _odds(p2)


# ----------------------------------------------------------------------
# IPW estimators on data
# ----------------------------------------------------------------------

def estimate_pse_sy_ipw(
    data: Dataset,
    spec: StageSpec,
    m_fits,
    s_fit: Glm,
    clip: tuple[float, float] = RATIO_CLIP,
) -> PseEstimate:
    """Weighted-mean contrast of the final outcome (mean-difference scale)."""
    w1, w2, n_clipped = theorem1_weights(data, spec, m_fits, s_fit, clip)
    y = data.column(spec.final_outcome_col)
    return PseEstimate(
        kind="sy",
        scale="mean_difference",
        value=_mean_difference(w1, w2, y),
        method="ipw",
        weights=_summary(w1, w2, n_clipped),
    )


def estimate_pse_sak_ipw(
    data: Dataset,
    spec: StageSpec,
    stage: int,
    m_fits,
    s_fit: Glm,
    scale: str = "odds_ratio",
    clip: tuple[float, float] = RATIO_CLIP,
) -> PseEstimate:
    """Contrast of the stage-`stage` action under the same weighting."""
    if not 1 <= stage <= spec.n_stages:
        raise PseError(f"stage must be in 1..{spec.n_stages}")
    n_blocks = stage if spec.multi_mediator else None
    w1, w2, n_clipped = theorem1_weights(data, spec, m_fits, s_fit, clip, n_blocks=n_blocks)
    a = data.column(spec.action_col(stage))
    if scale == "mean_difference":
        value = _mean_difference(w1, w2, a)
    elif scale == "odds_ratio":
        if not data.is_binary(spec.action_col(stage)):
            raise PseError("odds-ratio scale requires a binary action")
        value = _odds_ratio(w1, w2, a)
    else:
        raise PseError(f"unknown scale {scale!r}")
    return PseEstimate(
        kind="sa",
        scale=scale,
        value=value,
        method="ipw",
        stage=stage,
        weights=_summary(w1, w2, n_clipped),
    )


def estimate_pse_multimediator(
    data: Dataset,
    spec: StageSpec,
    block_fits,
    s_fit: Glm,
    kind: str = "sy",
    stage: int | None = None,
    scale: str | None = None,
    clip: tuple[float, float] = RATIO_CLIP,
) -> PseEstimate:
    """IPW with a density-ratio product over per-stage mediator blocks.

    For the action target at stage k only the first k block ratios enter;
    later blocks are downstream of A_k and integrate to one.
    """
    if not spec.multi_mediator:
        raise PseError("spec is not in multi-block mediator mode")
    if kind == "sy":
        est = estimate_pse_sy_ipw(data, spec, block_fits, s_fit, clip)
        return est
    if kind == "sa":
        if stage is None:
            raise PseError("stage index required for the action target")
        return estimate_pse_sak_ipw(
            data, spec, stage, block_fits, s_fit, scale or "odds_ratio", clip
        )
    raise PseError(f"unknown kind {kind!r}")


# ----------------------------------------------------------------------
# plug-in g-formula
# ----------------------------------------------------------------------

def _plugin_fitted(
    data: Dataset,
    spec: StageSpec,
    outcome_fit: Glm,
    m_fits,
    target_col: str,
    scale: str,
) -> float:
    """Empirical-X plug-in: sum the identifying functional over mediator
    configurations with model-based conditionals, averaging over observed X."""
    if spec.multi_mediator:
        raise PseError("fitted plug-in supports the single-block layout")
    fits = _as_fit_list(m_fits)
    m_cols = spec.m_cols
    s, sp = spec.s_active, spec.s_reference
    n = data.n_rows
    p1 = np.zeros(n)
    p2 = np.zeros(n)
    import itertools

    for values in itertools.product((0.0, 1.0), repeat=len(m_cols)):
        m_over = dict(zip(m_cols, values))
        # p(M = m | s', X_n): sequential factorization, components see the
        # candidate values of earlier components through overrides
        dens = np.ones(n)
        for j, fit in enumerate(fits):
            pj = fit.predict(data, overrides={spec.s_col: sp, **m_over})
            dens = dens * np.where(values[j] == 1.0, pj, 1.0 - pj)
        mu_s = outcome_fit.predict(data, overrides={spec.s_col: s, **m_over})
        mu_sp = outcome_fit.predict(data, overrides={spec.s_col: sp, **m_over})
        p1 += dens * mu_s
        p2 += dens * mu_sp
    if scale == "mean_difference":
        return float(np.mean(p1 - p2))
    return _odds(float(np.mean(p1))) / _odds(float(np.mean(p2)))


def estimate_pse_plugin(
    population,
    spec: StageSpec,
    kind: str = "sy",
    stage: int | None = None,
    scale: str = "mean_difference",
    outcome_fit: Glm | None = None,
    m_fits=None,
) -> PseEstimate:
    """Plug-in evaluation of the identifying functional.

    `population` is either a DiscreteJoint (exact summation) or a Dataset
    (empirical X average; requires `outcome_fit` for E[target | S, M, X]
    and `m_fits` for the mediator block).
    """
    target_col = spec.final_outcome_col if kind == "sy" else spec.action_col(stage)
    if kind == "sa" and stage is None:
        raise PseError("stage index required for the action target")
    if isinstance(population, DiscreteJoint):
        value = enumeration_pse(population, spec, kind, stage, scale)
    else:
        if outcome_fit is None or m_fits is None:
            raise PseError("fitted plug-in needs outcome_fit and m_fits")
        value = _plugin_fitted(population, spec, outcome_fit, m_fits, target_col, scale)
    return PseEstimate(kind=kind, scale=scale, value=value, method="plugin", stage=stage)


# ----------------------------------------------------------------------
# exact oracles on a DiscreteJoint
# ----------------------------------------------------------------------

def _counterfactual_means_single(joint, spec, target_col, s, sp):
    """(E[T(s, M(s'))], E[T(s')]) by summing the identifying functional."""
    m_cols = list(spec.m_cols)
    x_cols = list(spec.x_cols)
    p_active = 0.0
    p_ref = 0.0
    for x in joint.assignments(x_cols):
        px = joint.prob(x) if x_cols else 1.0
        if px == 0.0:
            continue
        for m in joint.assignments(m_cols):
            pm = joint.conditional_prob(m, {spec.s_col: sp, **x})
            if pm == 0.0:
                continue
            p_active += px * pm * joint.conditional_mean(target_col, {spec.s_col: s, **m, **x})
            p_ref += px * pm * joint.conditional_mean(target_col, {spec.s_col: sp, **m, **x})
    return p_active, p_ref


def _gformula_mean_multi(joint, spec, target_col, s_mediator, s_rest, upto_stage):
    """Nested-counterfactual mean in the multi-block layout: every mediator
    block follows ``s_mediator``, every other mechanism and the target
    follow ``s_rest``."""
    x_cols = list(spec.x_cols)
    total = 0.0
    blocks = spec.m_blocks[:upto_stage]
    inter = spec.stages[: upto_stage - 1]  # (a, y) pairs strictly before the target stage
    m_flat = [c for b in blocks for c in b]
    inter_flat = [c for pair in inter for c in pair]
    for x in joint.assignments(x_cols):
        px = joint.prob(x) if x_cols else 1.0
        if px == 0.0:
            continue
        for m in joint.assignments(m_flat):
            for h in joint.assignments(inter_flat):
                weight = px
                for j, block in enumerate(blocks):
                    past = {c: m[c] for b in blocks[:j] for c in b}
                    for a_col, y_col in inter[:j]:
                        past[a_col] = h[a_col]
                        past[y_col] = h[y_col]
                    block_event = {c: m[c] for c in block}
                    weight *= joint.conditional_prob(
                        block_event, {spec.s_col: s_mediator, **past, **x}
                    )
                    if weight == 0.0:
                        break
                if weight == 0.0:
                    continue
                for j, (a_col, y_col) in enumerate(inter):
                    seen_m = {c: m[c] for b in blocks[: j + 1] for c in b}
                    past = {}
                    for pa, py in inter[:j]:
                        past[pa] = h[pa]
                        past[py] = h[py]
                    weight *= joint.conditional_prob(
                        {a_col: h[a_col]}, {spec.s_col: s_rest, **seen_m, **past, **x}
                    )
                    weight *= joint.conditional_prob(
                        {y_col: h[y_col]},
                        {spec.s_col: s_rest, **seen_m, **past, a_col: h[a_col], **x},
                    )
                    if weight == 0.0:
                        break
                if weight == 0.0:
                    continue
                total += weight * joint.conditional_mean(
                    target_col, {spec.s_col: s_rest, **m, **h, **x}
                )
    return total


def _counterfactual_means_multi(joint, spec, target_col, s, sp, upto_stage):
    """(E[T(s, all blocks at s')], E[T(s')]): two separate g-formula arms;
    the reference arm takes s' in every mechanism."""
    p_active = _gformula_mean_multi(joint, spec, target_col, sp, s, upto_stage)
    p_ref = _gformula_mean_multi(joint, spec, target_col, sp, sp, upto_stage)
    return p_active, p_ref


def enumeration_pse(
    joint: DiscreteJoint,
    spec: StageSpec,
    kind: str = "sy",
    stage: int | None = None,
    scale: str = "mean_difference",
) -> float:
    """Exact g-formula value of the path-specific contrast."""
    s, sp = spec.s_active, spec.s_reference
    target_col = spec.final_outcome_col if kind == "sy" else spec.action_col(stage)
    if spec.multi_mediator:
        upto = spec.n_stages if kind == "sy" else stage
        p1, p2 = _counterfactual_means_multi(joint, spec, target_col, s, sp, upto)
    else:
        p1, p2 = _counterfactual_means_single(joint, spec, target_col, s, sp)
    if scale == "mean_difference":
        return p1 - p2
    return _odds(p1) / _odds(p2)


def population_ipw_pse(
    joint: DiscreteJoint,
    spec: StageSpec,
    kind: str = "sy",
    stage: int | None = None,
    scale: str = "mean_difference",
) -> float:
    """The IPW functional evaluated with exact conditionals as a population
    expectation over the joint (no sampling, no fitting)."""
    s, sp = spec.s_active, spec.s_reference
    target_col = spec.final_outcome_col if kind == "sy" else spec.action_col(stage)
    x_cols = list(spec.x_cols)

    if spec.multi_mediator:
        upto = spec.n_stages if kind == "sy" else stage
        blocks = spec.m_blocks[:upto]
        inter = spec.stages[: upto - 1]
    else:
        blocks = None

    def ratio_at(row):
        x = {c: row[c] for c in x_cols}
        if blocks is None:
            event = {c: row[c] for c in spec.m_cols}
            num = joint.conditional_prob(event, {spec.s_col: sp, **x})
            den = joint.conditional_prob(event, {spec.s_col: s, **x})
            return num / den
        value = 1.0
        for j, block in enumerate(blocks):
            past = {c: row[c] for b in blocks[:j] for c in b}
            for a_col, y_col in inter[:j]:
                past[a_col] = row[a_col]
                past[y_col] = row[y_col]
            event = {c: row[c] for c in block}
            num = joint.conditional_prob(event, {spec.s_col: sp, **past, **x})
            den = joint.conditional_prob(event, {spec.s_col: s, **past, **x})
            value *= num / den
        return value

    def arm(row, s_value, with_ratio):
        if row[spec.s_col] != s_value:
            return 0.0
        x = {c: row[c] for c in x_cols}
        p_s = joint.conditional_prob({spec.s_col: s_value}, x)
        w = 1.0 / p_s
        if with_ratio:
            w *= ratio_at(row)
        return w

    if scale == "mean_difference":
        return joint.expectation(
            lambda row: (arm(row, s, True) - arm(row, sp, False)) * row[target_col]
        )
    num1 = joint.expectation(lambda row: arm(row, s, True) * row[target_col])
    den1 = joint.expectation(lambda row: arm(row, s, True))
    num2 = joint.expectation(lambda row: arm(row, sp, False) * row[target_col])
    den2 = joint.expectation(lambda row: arm(row, sp, False))
    return _odds(num1 / den1) / _odds(num2 / den2)
