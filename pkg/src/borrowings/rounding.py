"""Half-up decimal rounding used everywhere a score is rendered.

Scores and percentages are kept at full precision internally and
rounded to two decimals only for reporting, with ties going away from
zero (so 89.605 renders as 89.61, not 89.60).
"""

from __future__ import annotations

from decimal import ROUND_HALF_UP, Decimal

_TWO_PLACES = Decimal("0.01")


def round2(value: float) -> Decimal:
    """Round to two decimals, half away from zero, as an exact Decimal."""
    return Decimal(value).quantize(_TWO_PLACES, rounding=ROUND_HALF_UP)


def fmt2(value: float) -> str:
    """Render a score with exactly two decimals."""
    return str(round2(value))
