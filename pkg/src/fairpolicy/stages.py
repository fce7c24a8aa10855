"""Role map of dataset columns onto the K-stage decision DAG."""

from __future__ import annotations

from dataclasses import dataclass, field

from .dataset import Dataset

__all__ = ["StageSpec", "StageSpecError"]


class StageSpecError(ValueError):
    """Inconsistent column role assignment."""


@dataclass(frozen=True)
class StageSpec:
    """Columns in temporal order X, S, M, A_1, Y_1, ..., A_K, Y_K.

    ``m_cols`` holds a single mediator block preceding all decisions. The
    multi-block variant (one mediator set ahead of each stage) uses
    ``m_blocks`` instead, with temporal order X, S, M_1, A_1, Y_1, M_2, ...
    Exactly one of the two must be given.

    ``s_active`` / ``s_reference`` are the (s, s') values of the sensitive
    contrast; swapping them negates mean-difference effects and inverts
    odds ratios.
    """

    x_cols: tuple[str, ...]
    s_col: str
    stages: tuple[tuple[str, str], ...]
    m_cols: tuple[str, ...] = ()
    m_blocks: tuple[tuple[str, ...], ...] = ()
    s_active: float = 1.0
    s_reference: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "x_cols", tuple(self.x_cols))
        object.__setattr__(self, "m_cols", tuple(self.m_cols))
        object.__setattr__(self, "m_blocks", tuple(tuple(b) for b in self.m_blocks))
        object.__setattr__(self, "stages", tuple((a, y) for a, y in self.stages))
        if bool(self.m_cols) == bool(self.m_blocks):
            raise StageSpecError("exactly one of m_cols / m_blocks must be non-empty")
        if self.m_blocks and len(self.m_blocks) != len(self.stages):
            raise StageSpecError("m_blocks must supply one mediator block per stage")
        if {self.s_active, self.s_reference} != {0.0, 1.0}:
            raise StageSpecError("s_active and s_reference must be 0 and 1 in some order")
        if not self.stages:
            raise StageSpecError("at least one (action, outcome) stage is required")
        roles = [*self.x_cols, self.s_col, *self.all_m_cols()]
        for a, y in self.stages:
            roles.extend((a, y))
        if len(set(roles)) != len(roles):
            dupes = sorted({c for c in roles if roles.count(c) > 1})
            raise StageSpecError(f"columns assigned to multiple roles: {dupes}")

    # ------------------------------------------------------------------
    @property
    def n_stages(self) -> int:
        return len(self.stages)

    @property
    def multi_mediator(self) -> bool:
        return bool(self.m_blocks)

    def all_m_cols(self) -> tuple[str, ...]:
        if self.m_cols:
            return self.m_cols
        return tuple(c for block in self.m_blocks for c in block)

    def action_col(self, k: int) -> str:
        return self.stages[k - 1][0]

    def outcome_col(self, k: int) -> str:
        return self.stages[k - 1][1]

    @property
    def final_outcome_col(self) -> str:
        return self.stages[-1][1]

    def history_cols(self, k: int) -> tuple[str, ...]:
        """Columns observed before the stage-k action (full history H_k)."""
        cols = [*self.x_cols, self.s_col]
        if self.m_cols:
            cols.extend(self.m_cols)
            for a, y in self.stages[: k - 1]:
                cols.extend((a, y))
        else:
            for i, (a, y) in enumerate(self.stages[:k]):
                cols.extend(self.m_blocks[i])
                if i < k - 1:
                    cols.extend((a, y))
        return tuple(cols)

    def validate_against(self, data: Dataset) -> None:
        cols = [*self.x_cols, self.s_col, *self.all_m_cols()]
        for a, y in self.stages:
            cols.extend((a, y))
        missing = [c for c in cols if c not in data]
        if missing:
            raise StageSpecError(f"data is missing role columns: {missing}")
        if not data.is_binary(self.s_col):
            raise StageSpecError(f"sensitive column {self.s_col!r} must be binary")
        for c in self.all_m_cols():
            if not data.is_binary(c):
                raise StageSpecError(f"mediator column {c!r} must be binary")
        for a, _ in self.stages:
            if not data.is_binary(a):
                raise StageSpecError(f"action column {a!r} must be binary")
