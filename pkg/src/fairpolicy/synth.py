"""Synthetic structural-equation generators, induced-world simulation, and
bootstrap machinery.

A DgpSpec is a list of equations in temporal order; each equation is a
linear-in-parameters coefficient map over earlier variables plus one of
three noise laws. Generation is deterministic in the seed and independent
of equation insertion order: every variable draws from its own named
substream and sampling follows a canonical topological order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Dataset
from .glm import expit

__all__ = [
    "Equation",
    "DgpSpec",
    "DgpError",
    "BootstrapResult",
    "generate",
    "generate_induced",
    "bootstrap",
    "two_stage_dgp",
    "single_stage_dgp",
    "preset",
    "dgp_from_json",
    "PRESETS",
]

NOISE_LAWS = ("bernoulli_logit", "gaussian", "half_gaussian")


class DgpError(ValueError):
    pass


Term = tuple[str, ...]


@dataclass(frozen=True)
class Equation:
    """One structural assignment: linear predictor terms plus a noise law.

    ``terms`` maps tuples of parent names to coefficients; the empty tuple
    is the intercept. ``half_gaussian`` ignores the terms and draws
    |N(0, scale)| (used for nonnegative baseline covariates).
    """

    name: str
    terms: Mapping[Term, float] = field(default_factory=dict)
    noise: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.noise not in NOISE_LAWS:
            raise DgpError(f"unknown noise law {self.noise!r}")
        object.__setattr__(
            self, "terms", {tuple(k): float(v) for k, v in dict(self.terms).items()}
        )

    def parents(self) -> set[str]:
        return {name for term in self.terms for name in term}

    def linear_predictor(self, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        eta = np.zeros(n)
        for term, coef in self.terms.items():
            if not term:
                eta += coef
                continue
            prod = columns[term[0]].copy()
            for name in term[1:]:
                prod = prod * columns[name]
            eta += coef * prod
        return eta

    def draw(self, columns: Mapping[str, np.ndarray], n: int, rng: np.random.Generator) -> np.ndarray:
        if self.noise == "half_gaussian":
            return np.abs(rng.normal(0.0, self.scale, n))
        eta = self.linear_predictor(columns, n)
        if self.noise == "bernoulli_logit":
            return (rng.random(n) < expit(eta)).astype(np.float64)
        return eta + rng.normal(0.0, self.scale, n)

    def mean(self, columns: Mapping[str, np.ndarray], n: int) -> np.ndarray:
        """Conditional mean given parents (probability for the logit law)."""
        if self.noise == "half_gaussian":
            return np.full(n, self.scale * np.sqrt(2.0 / np.pi))
        eta = self.linear_predictor(columns, n)
        return expit(eta) if self.noise == "bernoulli_logit" else eta


@dataclass(frozen=True)
class DgpSpec:
    """Equations in temporal order; each may reference only earlier names."""

    kind: str
    equations: tuple[Equation, ...]
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "equations", tuple(self.equations))
        names = [eq.name for eq in self.equations]
        if len(set(names)) != len(names):
            raise DgpError("duplicate equation names")
        seen: set[str] = set()
        for eq in self.equations:
            unknown = eq.parents() - seen
            if unknown:
                raise DgpError(
                    f"equation {eq.name!r} references later/unknown variables: {sorted(unknown)}"
                )
            seen.add(eq.name)

    def equation(self, name: str) -> Equation:
        for eq in self.equations:
            if eq.name == name:
                return eq
        raise DgpError(f"no equation named {name!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(eq.name for eq in self.equations)


def _canonical_order(equations: Sequence[Equation]) -> list[Equation]:
    """Kahn topological sort with alphabetical tie-breaking, so insertion
    order can never influence generation."""
    by_name = {eq.name: eq for eq in equations}
    remaining = dict(by_name)
    done: set[str] = set()
    out: list[Equation] = []
    while remaining:
        ready = sorted(n for n, eq in remaining.items() if eq.parents() <= done)
        if not ready:
            raise DgpError("cyclic equation dependencies")
        for name in ready:
            out.append(remaining.pop(name))
            done.add(name)
    return out


def _stream(seed: int, name: str) -> np.random.Generator:
    key = int.from_bytes(name.encode("utf-8"), "big")
    return np.random.default_rng(np.random.SeedSequence([int(seed), key]))


def generate(
    dgp: DgpSpec,
    n: int,
    seed: int | None = None,
    interventions: Mapping[str, Callable[[Dataset, np.random.Generator], np.ndarray]] | None = None,
) -> Dataset:
    """Ancestral sampling of n rows, deterministic in the seed.

    ``interventions`` replaces the structural draw of named variables with a
    caller-supplied rule receiving the columns generated so far (used to run
    policies against the generating mechanisms).
    """
    if n < 1:
        raise DgpError("n must be >= 1")
    seed = dgp.seed if seed is None else seed
    interventions = dict(interventions or {})
    columns: dict[str, np.ndarray] = {}
    for eq in _canonical_order(dgp.equations):
        rng = _stream(seed, eq.name)
        if eq.name in interventions:
            partial = Dataset(columns) if columns else None
            values = np.asarray(interventions[eq.name](partial, rng), dtype=np.float64)
            if values.shape == ():
                values = np.full(n, float(values))
        else:
            values = eq.draw(columns, n, rng)
        columns[eq.name] = values
    return Dataset({name: columns[name] for name in dgp.names})


# ----------------------------------------------------------------------
# induced fair world
# ----------------------------------------------------------------------

def generate_induced(
    dgp: DgpSpec,
    spec,
    m_fits,
    s_fit,
    behavior="logged",
    n: int = 10000,
    seed: int = 0,
    x_data: Dataset | None = None,
    y_mechanisms: Mapping[str, object] | None = None,
) -> Dataset:
    """Sample the joint induced by constrained sensitive/mediator models.

    X comes from the empirical distribution of ``x_data`` (sampled with
    replacement) when given, otherwise from the generating equations. S and
    the mediator block come from the supplied (typically constrained) fits;
    actions come from ``behavior`` (a policy object with ``decide``,
    "logged", "random", or ("constant", a)); stage outcomes come from
    ``y_mechanisms`` fits when given, else from the generating equations.
    """
    m_fit_list = list(m_fits) if isinstance(m_fits, (list, tuple)) else [m_fits]
    y_mechanisms = dict(y_mechanisms or {})
    columns: dict[str, np.ndarray] = {}

    if x_data is not None:
        rng_x = _stream(seed, "__x_resample__")
        idx = rng_x.integers(0, x_data.n_rows, size=n)
        for c in spec.x_cols:
            columns[c] = x_data.column(c)[idx]
    else:
        for eq in _canonical_order([dgp.equation(c) for c in spec.x_cols]):
            columns[eq.name] = eq.draw(columns, n, _stream(seed, eq.name))

    def partial() -> Dataset:
        return Dataset(columns)

    columns[spec.s_col] = s_fit.sample(partial(), _stream(seed, spec.s_col))
    for fit in m_fit_list:
        name = fit.formula.response
        columns[name] = fit.sample(partial(), _stream(seed, name))

    for k, (a_col, y_col) in enumerate(spec.stages, start=1):
        rng_a = _stream(seed, a_col)
        if behavior == "logged":
            columns[a_col] = dgp.equation(a_col).draw(columns, n, rng_a)
        elif behavior == "random":
            columns[a_col] = (rng_a.random(n) < 0.5).astype(np.float64)
        elif isinstance(behavior, tuple) and behavior[0] == "constant":
            columns[a_col] = np.full(n, float(behavior[1]))
        else:
            columns[a_col] = np.asarray(
                behavior.decide(partial(), k, rng_a), dtype=np.float64
            )
        rng_y = _stream(seed, y_col)
        if y_col in y_mechanisms:
            columns[y_col] = y_mechanisms[y_col].sample(partial(), rng_y)
        else:
            columns[y_col] = dgp.equation(y_col).draw(columns, n, rng_y)
    return Dataset(columns)


# ----------------------------------------------------------------------
# bootstrap
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class BootstrapResult:
    estimates: np.ndarray
    mean: float
    std_error: float
    n_failed: int = 0


def bootstrap(
    data: Dataset,
    statistic: Callable[[Dataset], float],
    B: int = 100,
    seed: int = 0,
) -> BootstrapResult:
    """Nonparametric bootstrap of a scalar statistic over row resamples.

    Replicates that raise are recorded and excluded; more than 10% failures
    aborts. The standard error is the sample SD of the replicate estimates.
    """
    if B < 2:
        raise ValueError("B must be >= 2")
    root = np.random.SeedSequence([int(seed), 0x626F6F74])
    children = root.spawn(B)
    estimates = []
    n_failed = 0
    for child in children:
        rng = np.random.default_rng(child)
        idx = rng.integers(0, data.n_rows, size=data.n_rows)
        try:
            estimates.append(float(statistic(data.select_rows(idx))))
        except Exception:
            n_failed += 1
            if n_failed > 0.1 * B:
                raise RuntimeError(
                    f"bootstrap aborted: {n_failed} of {B} replicates failed"
                ) from None
    est = np.asarray(estimates)
    return BootstrapResult(
        estimates=est,
        mean=float(est.mean()),
        std_error=float(est.std(ddof=1)),
        n_failed=n_failed,
    )


# ----------------------------------------------------------------------
# presets
# ----------------------------------------------------------------------

def _logit_eq(name: str, coefs: Mapping[str, float]) -> Equation:
    terms = {_parse_term(k): v for k, v in coefs.items()}
    return Equation(name=name, terms=terms, noise="bernoulli_logit")


def _parse_term(key: str) -> Term:
    return () if key == "1" else tuple(key.split(":"))


def _terms(coefs: Mapping[str, float]) -> dict[Term, float]:
    return {_parse_term(k): float(v) for k, v in coefs.items()}


# Shared baseline block: one nonnegative covariate, two centered covariates,
# a randomized binary sensitive feature, and a binary mediator whose
# dependence on the sensitive feature is strongly covariate-modulated.
_BASE_EQS = lambda: [
    Equation("X1", noise="half_gaussian"),
    Equation("X2", noise="gaussian", scale=1.0),
    Equation("X3", noise="gaussian", scale=1.0),
    _logit_eq("S", {"1": 0.0}),
    _logit_eq("M", {"1": -1, "X1": 1, "X2": 1, "X3": 1, "S": 1,
                    "S:X1": 3, "S:X2": 1, "S:X3": 1}),
    _logit_eq("A1", {"1": 1, "X1": -1, "X2": 1, "S": 1, "M": 1,
                     "S:X1": -1, "S:X2": 1, "M:S": 1, "M:X1": -3, "M:X2": 0.5}),
]


def two_stage_dgp(seed: int = 0) -> DgpSpec:
    """Two-decision synthetic world with binary intermediates and a
    continuous final outcome."""
    eqs = _BASE_EQS() + [
        _logit_eq("Y1", {"1": -2, "X1": 1, "X2": 1, "S": 1, "M": 1, "A1": 1,
                         "S:X2": 1, "M:S": 1, "A1:S": 1, "A1:M": 1}),
        _logit_eq("A2", {"1": 1, "X1": -1, "X2": 1, "M": 1, "A1": 1, "Y1": 1,
                         "S": 1, "S:X1": -1, "S:X2": 1, "S:M": 1, "S:A1": -1,
                         "M:X1": -3, "M:X2": 0.5, "A1:X1": -1, "A1:X2": -1}),
        Equation(
            "Y2",
            terms=_terms({"1": 2.5, "X1": 1, "X2": 1, "M": 1, "Y1": 1, "A2": 1,
                          "S": 1, "S:X1": 1, "S:X2": 1, "S:M": 1, "S:A1": 1,
                          "S:Y1": 1, "A1": 1, "A1:M": 1, "A1:Y1": -2, "M:Y1": 1,
                          "A2:X1": -1, "A2:X2": 2, "A2:M": -1, "Y1:X1": 1}),
            noise="gaussian",
            scale=1.0,
        ),
    ]
    return DgpSpec(kind="two_stage", equations=tuple(eqs), seed=seed)


def single_stage_dgp(seed: int = 0) -> DgpSpec:
    """Single-decision variant sharing the baseline block."""
    base = _BASE_EQS()
    eqs = base[:5] + [
        _logit_eq("A", dict(zip(
            ["1", "X1", "X2", "S", "M", "S:X1", "S:X2", "M:S", "M:X1", "M:X2"],
            [1, -1, 1, 1, 1, -1, 1, 1, -3, 0.5]))),
        Equation(
            "Y",
            terms=_terms({"1": -2, "X1": 1, "S": 1, "M": 1, "A": 1, "S:X2": -3,
                          "M:S": 1, "A:S": 1, "A:M": 1, "A:X2": 1, "A:X3": 1}),
            noise="gaussian",
            scale=1.0,
        ),
    ]
    return DgpSpec(kind="single_stage", equations=tuple(eqs), seed=seed)


PRESETS: dict[str, Callable[[int], DgpSpec]] = {
    "paper-two-stage": two_stage_dgp,
    "paper-single-stage": single_stage_dgp,
}


def preset(name: str, seed: int = 0) -> DgpSpec:
    try:
        return PRESETS[name](seed)
    except KeyError:
        raise DgpError(f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None


def dgp_from_json(blob: str | dict) -> DgpSpec:
    """Custom DGPs from a JSON coefficient-map document."""
    cfg = json.loads(blob) if isinstance(blob, str) else dict(blob)
    eqs = []
    for eq_cfg in cfg["equations"]:
        eqs.append(
            Equation(
                name=eq_cfg["name"],
                terms=_terms(eq_cfg.get("terms", {})),
                noise=eq_cfg.get("noise", "gaussian"),
                scale=float(eq_cfg.get("scale", 1.0)),
            )
        )
    return DgpSpec(kind=cfg.get("kind", "custom"), equations=tuple(eqs), seed=int(cfg.get("seed", 0)))
