"""Regression formulas: parsing, validation, and design-matrix construction.

Formula text follows the "Y ~ 1 + X1 + X2 + S:X1" convention: ":" forms a
product interaction (up to three columns), a bare "1" keeps the intercept
(the default), and "-1" removes it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset

__all__ = ["FormulaError", "ModelFormula", "parse_formula", "build_design", "formula_from_json"]

LINKS = ("logit", "identity")


class FormulaError(ValueError):
    """Bad formula specification or a reference to a missing column."""


@dataclass(frozen=True)
class ModelFormula:
    """A response, a list of product terms, an intercept flag, and a link.

    Each term is a tuple of 1-3 column names; a singleton is a main effect,
    longer tuples are row-wise products. Term order fixes coefficient order.
    """

    response: str
    terms: tuple[tuple[str, ...], ...]
    intercept: bool = True
    link: str = "logit"

    def __post_init__(self):
        if self.link not in LINKS:
            raise FormulaError(f"unknown link {self.link!r}; expected one of {LINKS}")
        canon = []
        for term in self.terms:
            term = tuple(term)
            if not 1 <= len(term) <= 3:
                raise FormulaError(f"term {term} must involve 1-3 columns")
            canon.append(term)
        if len(set(canon)) != len(canon):
            raise FormulaError("duplicate terms in formula")
        object.__setattr__(self, "terms", tuple(canon))

    @property
    def n_coef(self) -> int:
        return len(self.terms) + (1 if self.intercept else 0)

    def coef_names(self) -> list[str]:
        names = ["(intercept)"] if self.intercept else []
        names.extend(":".join(t) for t in self.terms)
        return names

    def required_columns(self) -> set[str]:
        cols = {c for t in self.terms for c in t}
        cols.add(self.response)
        return cols

    def text(self) -> str:
        rhs = ["1" if self.intercept else "-1"]
        rhs.extend(":".join(t) for t in self.terms)
        return f"{self.response} ~ {' + '.join(rhs)}"

    def to_json(self) -> str:
        return json.dumps(
            {
                "response": self.response,
                "terms": [list(t) for t in self.terms],
                "intercept": self.intercept,
                "link": self.link,
            }
        )


def parse_formula(text: str, link: str = "logit") -> ModelFormula:
    """Parse "Y ~ 1 + X1 + S:X1" text into a ModelFormula."""
    if "~" not in text:
        raise FormulaError(f"formula {text!r} has no '~'")
    lhs, rhs = text.split("~", 1)
    response = lhs.strip()
    if not response:
        raise FormulaError("empty response")
    intercept = True
    terms: list[tuple[str, ...]] = []
    # normalize "a - 1" intercept removal into tokens
    rhs = rhs.replace("-1", "+ -1").replace("−1", "+ -1")
    for raw in rhs.split("+"):
        tok = raw.strip()
        if not tok:
            continue
        if tok == "1":
            intercept = True
        elif tok == "-1":
            intercept = False
        else:
            term = tuple(part.strip() for part in tok.split(":"))
            if any(not p for p in term):
                raise FormulaError(f"malformed term {tok!r}")
            terms.append(term)
    return ModelFormula(response=response, terms=tuple(terms), intercept=intercept, link=link)


def formula_from_json(blob: str | dict) -> ModelFormula:
    """Build a ModelFormula from a JSON config with keys response/terms/intercept/link."""
    cfg = json.loads(blob) if isinstance(blob, str) else dict(blob)
    try:
        terms = tuple(tuple(t) if not isinstance(t, str) else (t,) for t in cfg["terms"])
        return ModelFormula(
            response=cfg["response"],
            terms=terms,
            intercept=bool(cfg.get("intercept", True)),
            link=cfg.get("link", "logit"),
        )
    except KeyError as exc:
        raise FormulaError(f"formula config is missing key {exc}") from None


def build_design(
    data: Dataset,
    formula: ModelFormula,
    overrides: dict | None = None,
) -> np.ndarray:
    """n_rows x p design matrix: optional leading ones column, then one
    column per term as the row-wise product of its columns.

    `overrides` substitutes a constant (or a per-row vector) for a column
    before construction, so counterfactual designs (e.g. S set to s') never
    materialize a copy of the dataset.
    """
    overrides = overrides or {}
    n = data.n_rows

    def col(name: str) -> np.ndarray:
        if name in overrides:
            arr = np.asarray(overrides[name], dtype=np.float64)
            if arr.ndim == 0:
                return np.full(n, float(arr))
            if arr.shape != (n,):
                raise FormulaError(f"override for {name!r} has wrong length")
            return arr
        if name not in data:
            raise FormulaError(f"formula references unknown column {name!r}")
        return data.column(name)

    cols: list[np.ndarray] = []
    if formula.intercept:
        cols.append(np.ones(n))
    for term in formula.terms:
        prod = col(term[0]).copy()
        for name in term[1:]:
            prod = prod * col(name)
        cols.append(prod)
    if not cols:
        raise FormulaError("formula has no intercept and no terms")
    return np.column_stack(cols)
