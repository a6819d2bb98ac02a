"""Result containers shared across the treatment-effect estimators."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import DomainError


@dataclass(frozen=True)
class Decomposition:
    """Split of a total treatment effect into its two channels.

    ``direct`` moves the frontier itself; ``indirect`` moves expected
    inefficiency.  The identity ``total = direct - indirect`` holds by
    construction: a positive indirect component (more inefficiency) drags
    the total below the direct effect.
    """

    total: float
    direct: float
    indirect: float

    def __post_init__(self):
        for name in ("total", "direct", "indirect"):
            object.__setattr__(self, name, float(getattr(self, name)))
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"decomposition component {name} must be finite")
        if abs(self.total - (self.direct - self.indirect)) > 1e-10 * max(
            1.0, abs(self.total), abs(self.direct), abs(self.indirect)
        ):
            raise DomainError("decomposition identity total = direct - indirect violated")

    @classmethod
    def from_channels(cls, direct: float, indirect: float) -> "Decomposition":
        return cls(total=direct - indirect, direct=direct, indirect=indirect)
