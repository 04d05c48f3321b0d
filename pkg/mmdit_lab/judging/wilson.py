from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from ..exceptions import EmptyPool

Z_95 = 1.96


def round_half_away(value: float, places: int = 1) -> Decimal:
    quantum = Decimal(1).scaleb(-places)
    return Decimal(value).quantize(quantum, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class WilsonInterval:
    """Score interval around ``successes / n``; every percentage is unrounded."""

    successes: int
    n: int
    z: float
    lower: float
    upper: float

    @property
    def p_bar(self) -> float:
        return 100.0 * self.successes / self.n

    @property
    def delta_lo(self) -> float:
        return max(0.0, self.p_bar - 100.0 * self.lower)

    @property
    def delta_hi(self) -> float:
        return max(0.0, 100.0 * self.upper - self.p_bar)

    def render(self) -> str:
        """``p_{-lo}^{+hi}`` with one decimal, rounded half away from zero."""
        p, lo, hi = (round_half_away(v) for v in (self.p_bar, self.delta_lo, self.delta_hi))
        return f"{p}_{{-{lo}}}^{{+{hi}}}"

    def __str__(self) -> str:
        return self.render()


def wilson(successes: int, n: int, z: float = Z_95) -> WilsonInterval:
    if n == 0:
        raise EmptyPool("cannot build an interval from zero judgments")
    if n < 0 or not 0 <= successes <= n:
        raise ValueError(f"need 0 <= successes <= n, got {successes}/{n}")
    p = successes / n
    z2 = z * z
    centre = p + z2 / (2 * n)
    spread = z * math.sqrt(p * (1 - p) / n + z2 / (4 * n * n))
    scale = 1 + z2 / n
    lower = (centre - spread) / scale
    upper = (centre + spread) / scale
    # the closed form reaches the ends exactly; pin them against rounding error
    lower = 0.0 if successes == 0 else min(max(lower, 0.0), p)
    upper = 1.0 if successes == n else max(min(upper, 1.0), p)
    return WilsonInterval(successes, n, z, lower, upper)
