"""Reward-shape oracles and schedule lookup semantics."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from adaptive_exposure.reward import (
    DEFAULT_SCHEDULE,
    DesiredSchedule,
    RewardParams,
    desired_at,
    reward,
    segment_index_at,
)

levels = st.integers(0, 10)


def test_peak_is_one_at_every_target():
    for d in range(11):
        assert reward(d, d) == pytest.approx(1.0, abs=1e-12)


def test_hand_computed_values():
    # 2*exp(-16/8) - 1 and 2*exp(-4/8) - 1 with sigma = 2.
    assert reward(7, 3, RewardParams(sigma=2.0)) == pytest.approx(-0.7293294335267746, abs=1e-9)
    assert reward(3, 7, RewardParams(sigma=2.0)) == pytest.approx(2 * math.exp(-2.0) - 1, abs=1e-12)
    assert reward(5, 3, RewardParams(sigma=2.0)) == pytest.approx(2 * math.exp(-0.5) - 1, abs=1e-12)
    # Narrower sigma: same value at half the distance.
    assert reward(4, 3, RewardParams(sigma=1.0)) == pytest.approx(2 * math.exp(-0.5) - 1, abs=1e-12)


@given(levels, levels)
def test_symmetry_and_bounds(a, d):
    r = reward(a, d)
    assert reward(d, a) == pytest.approx(r, abs=1e-12)
    assert -1.0 < r <= 1.0


@given(levels)
def test_strictly_decreasing_in_distance(d):
    values = [reward(d, d)]
    delta = 1
    while 0 <= d + delta <= 10 or 0 <= d - delta <= 10:
        probe = d + delta if d + delta <= 10 else d - delta
        values.append(reward(probe, d))
        delta += 1
    for closer, farther in zip(values, values[1:]):
        assert farther < closer


def test_level_validation():
    with pytest.raises(ValueError):
        reward(-1, 5)
    with pytest.raises(ValueError):
        reward(5, 11)


def test_sigma_must_be_positive():
    with pytest.raises(ValueError):
        RewardParams(sigma=0.0)


def test_default_schedule_segments():
    assert [(s.target, s.duration_s) for s in DEFAULT_SCHEDULE.segments] == [(3, 140.0), (7, 140.0)]
    assert DEFAULT_SCHEDULE.total_duration_s == 280.0


def test_desired_at_left_closed_boundaries():
    assert desired_at(DEFAULT_SCHEDULE, 0.0) == 3
    assert desired_at(DEFAULT_SCHEDULE, 139.999) == 3
    assert desired_at(DEFAULT_SCHEDULE, 140.0) == 7
    assert desired_at(DEFAULT_SCHEDULE, 279.999) == 7
    assert segment_index_at(DEFAULT_SCHEDULE, 139.999) == 0
    assert segment_index_at(DEFAULT_SCHEDULE, 140.0) == 1


def test_desired_at_rejects_out_of_range_times():
    with pytest.raises(ValueError):
        desired_at(DEFAULT_SCHEDULE, -0.1)
    with pytest.raises(ValueError):
        desired_at(DEFAULT_SCHEDULE, 280.0)


def test_schedule_json_round_trip():
    schedule = DesiredSchedule.from_pairs([(2, 60.0), (8, 40.0), (5, 20.0)])
    assert DesiredSchedule.from_json(schedule.to_json()) == schedule


def test_schedule_rejects_bad_segments():
    with pytest.raises(ValueError):
        DesiredSchedule.from_pairs([])
    with pytest.raises(ValueError):
        DesiredSchedule.from_pairs([(11, 60.0)])
    with pytest.raises(ValueError):
        DesiredSchedule.from_pairs([(3, 0.0)])
