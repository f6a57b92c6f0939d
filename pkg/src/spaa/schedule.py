"""Timestep-aware decaying amplification ratios.

The per-step Value scaling factor starts at an initial ratio and drops
by a fixed decrement each completed denoising step until it reaches a
floor (default 1.0, i.e. no amplification).  Arithmetic is exact: the
schedule stores rationals, so traces can be checked without float
drift.  Color runs default to 5.0 decaying by 0.1 per step; material
runs to 10.0 decaying by 0.2 per step.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from numbers import Rational
from typing import FrozenSet, Optional, Union

RatioLike = Union[int, float, str, Fraction]

ATTRIBUTE_KINDS = ("color", "material", "custom")


def _as_fraction(value: RatioLike) -> Fraction:
    """Coerce to an exact rational; floats are read as their decimal literal."""
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class AmplificationSchedule:
    """Decaying ratio: ``ratio(k) = max(initial - k * decrement, floor)``."""

    attribute_kind: str = "custom"
    initial_ratio: RatioLike = 1
    decrement_per_step: RatioLike = 0
    floor: RatioLike = 1

    def __post_init__(self):
        object.__setattr__(self, "initial_ratio", _as_fraction(self.initial_ratio))
        object.__setattr__(
            self, "decrement_per_step", _as_fraction(self.decrement_per_step)
        )
        object.__setattr__(self, "floor", _as_fraction(self.floor))
        if self.attribute_kind not in ATTRIBUTE_KINDS:
            raise ValueError(
                f"attribute_kind must be one of {ATTRIBUTE_KINDS}, "
                f"got {self.attribute_kind!r}"
            )
        if self.floor <= 0:
            raise ValueError(f"floor must be positive, got {self.floor}")
        if self.initial_ratio < self.floor:
            raise ValueError(
                f"initial_ratio {self.initial_ratio} below floor {self.floor}"
            )
        if self.decrement_per_step < 0:
            raise ValueError(
                f"decrement_per_step must be nonnegative, "
                f"got {self.decrement_per_step}"
            )

    def floor_step(self) -> int:
        """First step index at which the ratio sits on the floor."""
        if self.decrement_per_step == 0:
            return 0 if self.initial_ratio == self.floor else -1
        import math

        return math.ceil((self.initial_ratio - self.floor) / self.decrement_per_step)


def ratio_at(schedule: AmplificationSchedule, step_index: int) -> Fraction:
    """Exact amplification ratio after ``step_index`` completed steps.

    Step 0 is the first (noisiest) denoising step.
    """
    if step_index < 0:
        raise ValueError(f"step_index must be >= 0, got {step_index}")
    return max(
        schedule.initial_ratio - step_index * schedule.decrement_per_step,
        schedule.floor,
    )


def color_schedule() -> AmplificationSchedule:
    return AmplificationSchedule("color", 5, Fraction(1, 10), 1)


def material_schedule() -> AmplificationSchedule:
    return AmplificationSchedule("material", 10, Fraction(1, 5), 1)


def unit_schedule() -> AmplificationSchedule:
    """Constant ratio 1.0: amplification disabled."""
    return AmplificationSchedule("custom", 1, 0, 1)


@dataclass(frozen=True)
class InterventionConfig:
    """Knobs for one dual-branch run.

    ``resolution_gate`` is the minimum spatial side length at which
    target self-attention maps are replaced by source maps (inclusive).
    ``replace_throughout`` keeps injection active at every timestep;
    setting it False disables injection entirely so the amplification
    branch can be ablated in isolation.  ``amplify_target`` scales the
    cross-attention Value rows in the production path; ``"key"`` is kept
    only for the key-vs-value ablation since key scaling perturbs the
    attention map itself.  When ``active_stages`` is set, the run is
    split into ``total_stages`` contiguous stages and amplification is
    held at the schedule floor outside the active ones.
    """

    schedule: AmplificationSchedule = field(default_factory=unit_schedule)
    resolution_gate: int = 32
    replace_throughout: bool = True
    amplify_target: str = "value"
    active_stages: Optional[FrozenSet[int]] = None
    total_stages: int = 10

    def __post_init__(self):
        if self.resolution_gate < 1:
            raise ValueError(f"resolution_gate must be >= 1, got {self.resolution_gate}")
        if self.amplify_target not in ("value", "key"):
            raise ValueError(
                f"amplify_target must be 'value' or 'key', got {self.amplify_target!r}"
            )
        if self.total_stages < 1:
            raise ValueError(f"total_stages must be >= 1, got {self.total_stages}")
        if self.active_stages is not None:
            bad = [s for s in self.active_stages if not 0 <= s < self.total_stages]
            if bad:
                raise ValueError(
                    f"stage indices {bad} out of range for "
                    f"{self.total_stages} stages"
                )


def stage_mask_amplification(
    config: InterventionConfig,
    active_stages: set[int] | frozenset[int],
    total_stages: int = 10,
) -> InterventionConfig:
    """Restrict amplification to the given stages of the denoising run.

    Steps are partitioned evenly into ``total_stages`` contiguous stages;
    outside active stages the applied ratio is the schedule floor.  An
    empty set disables amplification everywhere.
    """
    import logging

    if not active_stages:
        logging.getLogger(__name__).warning(
            "stage mask with no active stages: amplification disabled for this config"
        )
    return replace(
        config,
        active_stages=frozenset(active_stages),
        total_stages=total_stages,
    )


def stage_of_step(step_index: int, total_steps: int, total_stages: int) -> int:
    """Stage index of a step under even contiguous partitioning."""
    return step_index * total_stages // total_steps


def applied_ratio(
    config: InterventionConfig, step_index: int, total_steps: int
) -> Fraction:
    """The ratio actually applied at ``step_index`` of a ``total_steps`` run."""
    if config.active_stages is not None:
        stage = stage_of_step(step_index, total_steps, config.total_stages)
        if stage not in config.active_stages:
            return Fraction(config.schedule.floor)
    return ratio_at(config.schedule, step_index)
