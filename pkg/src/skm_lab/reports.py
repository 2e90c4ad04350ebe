from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class InequalityReport:
    """Signed margins (RHS - LHS) of one inequality over a batch of cases.

    ``passed`` holds iff ``min_margin >= -tolerance``. For equality-type
    checks (e.g. variance constancy) the margin is ``-|deviation|``.
    """

    name: str
    margins: np.ndarray = field(repr=False)
    tolerance: float

    def __post_init__(self):
        object.__setattr__(self, "margins", np.asarray(self.margins, dtype=float).ravel())

    @property
    def cases(self) -> int:
        return int(self.margins.size)

    @property
    def min_margin(self) -> float:
        # an empty batch is vacuously satisfied
        return float(self.margins.min()) if self.margins.size else float("inf")

    @property
    def passed(self) -> bool:
        return self.min_margin >= -self.tolerance

    def to_record(self) -> dict:
        return {
            "name": self.name,
            "min_margin": self.min_margin if self.margins.size else None,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "cases": self.cases,
        }
