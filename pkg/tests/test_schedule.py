from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spaa.schedule import (
    AmplificationSchedule,
    InterventionConfig,
    applied_ratio,
    color_schedule,
    material_schedule,
    ratio_at,
    stage_mask_amplification,
    stage_of_step,
    unit_schedule,
)


class TestRatioAt:
    def test_color_step0_is_5(self):
        assert ratio_at(color_schedule(), 0) == Fraction(5)

    def test_color_floor_reached_and_held(self):
        sched = color_schedule()
        assert ratio_at(sched, 40) == Fraction(1)
        assert ratio_at(sched, 41) == Fraction(1)

    def test_material_step10(self):
        assert ratio_at(material_schedule(), 10) == Fraction(8)

    def test_negative_step_rejected(self):
        with pytest.raises(ValueError):
            ratio_at(color_schedule(), -1)

    def test_exact_rational_sequences(self):
        for sched, r, d in (
            (color_schedule(), Fraction(5), Fraction(1, 10)),
            (material_schedule(), Fraction(10), Fraction(1, 5)),
        ):
            for k in range(101):
                assert ratio_at(sched, k) == max(r - k * d, Fraction(1))

    def test_floor_step(self):
        assert color_schedule().floor_step() == 40
        assert material_schedule().floor_step() == 45

    @settings(max_examples=50, deadline=None)
    @given(
        r=st.integers(1, 20),
        d_num=st.integers(0, 5),
        k=st.integers(0, 300),
    )
    def test_nonincreasing_and_floored(self, r, d_num, k):
        sched = AmplificationSchedule("custom", r, Fraction(d_num, 10), 1)
        a, b = ratio_at(sched, k), ratio_at(sched, k + 1)
        assert a >= b >= Fraction(1)


class TestScheduleValidation:
    def test_floor_above_initial_rejected(self):
        with pytest.raises(ValueError):
            AmplificationSchedule("custom", 1, 0, 2)

    def test_negative_decrement_rejected(self):
        with pytest.raises(ValueError):
            AmplificationSchedule("custom", 5, -0.1, 1)

    def test_float_literals_become_exact(self):
        sched = AmplificationSchedule("color", 5.0, 0.1, 1.0)
        assert sched.decrement_per_step == Fraction(1, 10)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError):
            AmplificationSchedule("texture", 5, 0.1, 1)


class TestStageMasking:
    def test_all_stages_matches_unmasked(self):
        cfg = InterventionConfig(schedule=color_schedule())
        masked = stage_mask_amplification(cfg, set(range(10)), 10)
        for k in range(50):
            assert applied_ratio(masked, k, 50) == applied_ratio(cfg, k, 50)

    def test_empty_stages_holds_floor(self):
        cfg = InterventionConfig(schedule=color_schedule())
        masked = stage_mask_amplification(cfg, set(), 10)
        assert all(applied_ratio(masked, k, 50) == Fraction(1) for k in range(50))

    def test_first_stage_only(self):
        cfg = InterventionConfig(schedule=color_schedule())
        masked = stage_mask_amplification(cfg, {0}, 10)
        for k in range(50):
            expected = (
                ratio_at(color_schedule(), k) if k < 5 else Fraction(1)
            )
            assert applied_ratio(masked, k, 50) == expected

    def test_stage_partition_is_even(self):
        assert [stage_of_step(k, 50, 10) for k in range(50)] == [
            k // 5 for k in range(50)
        ]

    def test_out_of_range_stage_rejected(self):
        cfg = InterventionConfig(schedule=unit_schedule())
        with pytest.raises(ValueError):
            stage_mask_amplification(cfg, {10}, 10)


class TestInterventionConfig:
    def test_defaults(self):
        cfg = InterventionConfig()
        assert cfg.resolution_gate == 32
        assert cfg.replace_throughout is True
        assert cfg.amplify_target == "value"

    def test_bad_amplify_target(self):
        with pytest.raises(ValueError):
            InterventionConfig(amplify_target="query")
