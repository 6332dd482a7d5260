"""Per-step inpainting mask schedules.

A schedule partitions the denoising trajectory [0, T) into ranges, each with
its own active mask.  The hybrid schedule preserves reprojected pixels for
the first N steps (inpainting only the disoccluded region M ∧ ¬M_vis) and
inpaints the full object mask for the remaining T − N steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


@dataclass(frozen=True)
class ScheduleEntry:
    step_lo: int   # inclusive
    step_hi: int   # exclusive
    mask: np.ndarray  # (H, W) bool

    def __post_init__(self):
        object.__setattr__(self, "mask", np.asarray(self.mask, dtype=bool))
        if self.step_lo < 0 or self.step_hi <= self.step_lo:
            raise ConfigurationError(
                f"schedule entry range [{self.step_lo}, {self.step_hi}) is empty or negative"
            )


@dataclass(frozen=True)
class MaskSchedule:
    total_steps: int
    entries: tuple[ScheduleEntry, ...]

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.total_steps < 1:
            raise ConfigurationError(f"total_steps must be >= 1, got {self.total_steps}")
        if not self.entries:
            raise ConfigurationError("schedule needs at least one entry")
        shape = self.entries[0].mask.shape
        cursor = 0
        for entry in self.entries:
            if entry.mask.shape != shape:
                raise ConfigurationError(
                    f"schedule masks disagree in shape: {entry.mask.shape} vs {shape}"
                )
            if entry.step_lo != cursor:
                raise ConfigurationError(
                    f"schedule entries must partition [0, {self.total_steps}) without "
                    f"gaps or overlaps; expected step {cursor}, got {entry.step_lo}"
                )
            cursor = entry.step_hi
        if cursor != self.total_steps:
            raise ConfigurationError(
                f"schedule entries cover [0, {cursor}) but total_steps is {self.total_steps}"
            )

    def mask_shape(self) -> tuple[int, int]:
        return self.entries[0].mask.shape

    def active_step_count(self) -> np.ndarray:
        """Per-pixel number of steps whose mask covers the pixel."""
        counts = np.zeros(self.mask_shape(), dtype=np.int64)
        for entry in self.entries:
            counts += (entry.step_hi - entry.step_lo) * entry.mask
        return counts

    def union_mask(self) -> np.ndarray:
        out = np.zeros(self.mask_shape(), dtype=bool)
        for entry in self.entries:
            out |= entry.mask
        return out


def full_mask_schedule(mask: np.ndarray, total_steps: int) -> MaskSchedule:
    """One mask active for the whole trajectory."""
    return MaskSchedule(total_steps, (ScheduleEntry(0, total_steps, mask),))


def build_hybrid_schedule(
    mask: np.ndarray,
    vis_mask: np.ndarray,
    projection_steps: int,
    total_steps: int,
) -> MaskSchedule:
    """Hybrid schedule: inpaint only M ∧ ¬M_vis for the first N steps, then
    the full M.  N = 0 degenerates to plain inpainting; N = T preserves the
    reprojected region throughout."""
    mask = np.asarray(mask, dtype=bool)
    vis_mask = np.asarray(vis_mask, dtype=bool)
    if mask.shape != vis_mask.shape:
        raise ConfigurationError(
            f"mask shape {mask.shape} does not match visibility shape {vis_mask.shape}"
        )
    if not 0 <= projection_steps <= total_steps:
        raise ConfigurationError(
            f"projection steps {projection_steps} outside [0, {total_steps}]"
        )
    disoccluded = mask & ~vis_mask
    if projection_steps == 0:
        return MaskSchedule(total_steps, (ScheduleEntry(0, total_steps, mask),))
    if projection_steps == total_steps:
        return MaskSchedule(total_steps, (ScheduleEntry(0, total_steps, disoccluded),))
    return MaskSchedule(
        total_steps,
        (
            ScheduleEntry(0, projection_steps, disoccluded),
            ScheduleEntry(projection_steps, total_steps, mask),
        ),
    )
