"""Exact finite discrete distributions over binary variables.

This is the oracle side of every estimator check: a joint over binary
variables in topological order, with conditional tables for each variable
given all predecessors, supports exact enumeration of g-formula functionals
and population-level IPW expectations.
"""

from __future__ import annotations

import itertools
from typing import Callable, Mapping, Sequence

import numpy as np

from .dataset import Dataset

__all__ = ["DiscreteJoint"]


class DiscreteJoint:
    """Joint distribution of ordered binary variables via conditional tables.

    ``tables[i]`` maps each configuration of variables 0..i-1 (as an index
    into a flat array of length 2**i, most recent variable fastest) to
    P(V_i = 1 | predecessors).
    """

    def __init__(self, names: Sequence[str], tables: Sequence[np.ndarray]):
        self.names = tuple(names)
        if len(tables) != len(self.names):
            raise ValueError("one conditional table per variable is required")
        self.tables = []
        for i, t in enumerate(tables):
            t = np.asarray(t, dtype=np.float64).reshape(-1)
            if t.shape[0] != 2**i:
                raise ValueError(f"table for {self.names[i]!r} must have 2**{i} entries")
            if np.any((t < 0) | (t > 1)):
                raise ValueError(f"table for {self.names[i]!r} has entries outside [0,1]")
            self.tables.append(t)
        self._index = {n: i for i, n in enumerate(self.names)}
        d = len(self.names)
        # all 2**d configurations and their joint probabilities
        self.configs = np.array(list(itertools.product((0.0, 1.0), repeat=d)))
        probs = np.ones(self.configs.shape[0])
        for i in range(d):
            idx = np.zeros(self.configs.shape[0], dtype=np.int64)
            for j in range(i):
                idx = idx * 2 + self.configs[:, j].astype(np.int64)
            p1 = self.tables[i][idx]
            probs *= np.where(self.configs[:, i] == 1.0, p1, 1.0 - p1)
        self.probs = probs

    # ------------------------------------------------------------------
    @classmethod
    def random(
        cls,
        names: Sequence[str],
        rng: np.random.Generator,
        low: float = 0.1,
        high: float = 0.9,
    ) -> "DiscreteJoint":
        """Random conditional tables with probabilities in [low, high]."""
        tables = [rng.uniform(low, high, size=2**i) for i in range(len(names))]
        return cls(names, tables)

    def column(self, name: str) -> np.ndarray:
        return self.configs[:, self._index[name]]

    def _mask(self, given: Mapping[str, float]) -> np.ndarray:
        mask = np.ones(self.configs.shape[0], dtype=bool)
        for name, value in given.items():
            mask &= self.configs[:, self._index[name]] == float(value)
        return mask

    def prob(self, given: Mapping[str, float]) -> float:
        """Joint probability of a (partial) assignment."""
        return float(np.sum(self.probs[self._mask(given)]))

    def conditional_prob(self, event: Mapping[str, float], given: Mapping[str, float]) -> float:
        denom = self.prob(given)
        if denom <= 0.0:
            raise ZeroDivisionError(f"conditioning event has probability 0: {given}")
        return self.prob({**event, **given}) / denom

    def conditional_mean(self, target: str, given: Mapping[str, float]) -> float:
        denom = self.prob(given)
        if denom <= 0.0:
            raise ZeroDivisionError(f"conditioning event has probability 0: {given}")
        mask = self._mask(given)
        return float(np.sum(self.probs[mask] * self.column(target)[mask]) / denom)

    def expectation(self, fn: Callable[[Mapping[str, float]], float]) -> float:
        """E[fn(Z)] by full enumeration; fn sees one row dict per configuration."""
        total = 0.0
        for cfg, p in zip(self.configs, self.probs):
            if p > 0.0:
                total += p * fn(dict(zip(self.names, cfg)))
        return float(total)

    def assignments(self, cols: Sequence[str]):
        """All configurations of a subset of variables, as dicts."""
        for values in itertools.product((0.0, 1.0), repeat=len(cols)):
            yield dict(zip(cols, values))

    def sample(self, n: int, rng: np.random.Generator) -> Dataset:
        """Ancestral sample of n rows as a Dataset."""
        idx = rng.choice(self.configs.shape[0], size=n, p=self.probs / self.probs.sum())
        rows = self.configs[idx]
        return Dataset({name: rows[:, i] for i, name in enumerate(self.names)})
