"""Pyramid-level assignment mirror.

The scoring core owns the level rule; this module re-implements it so the
extractor can assign levels in-process during batch inference. The test
suite locks the two implementations together by piping random sizes
through the core's ``assign-levels`` subcommand and demanding exact
agreement, so any drift fails loudly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

BASE_BOX_SIDE = 224.0


@dataclass(frozen=True)
class PyramidSettings:
    """Level-assignment knobs; defaults mirror the scoring core."""

    base_level: int = 3
    min_level: int = 2
    max_level: int = 5
    small_thresh: float = 64.0
    large_thresh: float = 512.0

    def __post_init__(self) -> None:
        if not self.min_level <= self.base_level <= self.max_level:
            raise ValueError(
                f"need min <= base <= max, got {self.min_level} <= "
                f"{self.base_level} <= {self.max_level}"
            )
        if not 0 < self.small_thresh < self.large_thresh:
            raise ValueError(
                f"need 0 < small_thresh < large_thresh, got "
                f"{self.small_thresh} vs {self.large_thresh}"
            )


def assign_level(
    box_w: float, box_h: float, settings: PyramidSettings | None = None
) -> int:
    """Feature-pyramid level for a box of the given pixel size.

    Boxes whose longest side is strictly below ``small_thresh`` pin to the
    minimum level and strictly above ``large_thresh`` to the maximum;
    everything else follows floor(base + log2(sqrt(w*h) / 224)), clamped.
    """
    if settings is None:
        settings = PyramidSettings()
    if box_w <= 0 or box_h <= 0:
        raise ValueError(f"box dims must be positive, got {box_w}x{box_h}")
    longest = max(box_w, box_h)
    if longest < settings.small_thresh:
        return settings.min_level
    if longest > settings.large_thresh:
        return settings.max_level
    level = math.floor(
        settings.base_level
        + math.log2(math.sqrt(box_w * box_h) / BASE_BOX_SIDE)
    )
    return min(max(level, settings.min_level), settings.max_level)
