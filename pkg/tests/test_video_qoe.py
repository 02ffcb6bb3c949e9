import math

import pytest
from hypothesis import given, strategies as st

from u2usim.video_qoe import (DEFAULT_LADDER, QoeWeights, Resolution, ResolutionLadder, frame_tx_time, qoe_reward,
                              quality, slot_delay, smoothness_penalty)

W = QoeWeights()
LADDER = ResolutionLadder()


def test_ladder_defaults():
    assert [r.label for r in DEFAULT_LADDER] == ["144p", "240p", "360p", "480p", "720p", "1080p"]
    assert LADDER.min_rates.tolist() == [80e3, 300e3, 700e3, 1000e3, 2000e3, 3000e3]
    assert LADDER[0].pixels == 256 * 144


def test_ladder_must_increase():
    with pytest.raises(ValueError):
        ResolutionLadder((Resolution("a", 10, 10, 2.0), Resolution("b", 20, 20, 1.0)))
    with pytest.raises(ValueError):
        ResolutionLadder(())


def test_weights_ordering_enforced():
    with pytest.raises(ValueError):
        QoeWeights(kappa=0.5, omega=0.5)
    with pytest.raises(ValueError):
        QoeWeights(omega=0.0)


def test_frame_time_frozen():
    # 1920 * 1080 * 12 bits at 10 Mbit/s
    assert frame_tx_time(5, 10e6, W) == pytest.approx(2.48832)
    assert frame_tx_time(0, 0.0, W) == math.inf


def test_delay_is_lateness_of_slowest_frame():
    assert slot_delay([0.01, 0.02], W) == 0.0
    assert slot_delay([0.01, 0.5], W) == pytest.approx(0.5 - 1 / 30)
    assert slot_delay([], W) == 0.0


def test_quality_is_log_ratio():
    assert quality(80e3, 0) == 0.0
    assert quality(80e3 * math.e, 0) == pytest.approx(1.0)
    assert quality(0.0, 3) == -math.inf


def test_reward_hand_example():
    per_ue = [(1.0, 0.5), (0.2, 0.2)]
    # (1 - 0.5 + 0.2 - 0) / 2 - 0.5 * 0.1
    assert qoe_reward(per_ue, 0.1, W, 1, 2) == pytest.approx(0.3)
    assert smoothness_penalty(per_ue) == pytest.approx(0.5)


def test_reward_with_no_ues_only_pays_delay():
    assert qoe_reward([], 0.2, W, 0, 4) == pytest.approx(-0.1)


@given(st.lists(st.tuples(st.floats(-20, 20), st.floats(-20, 20)), min_size=1, max_size=8),
       st.floats(0, 100))
def test_reward_bounded_by_quality(per_ue, delay):
    n = len(per_ue)
    r = qoe_reward(per_ue, delay, W, 1, n)
    assert r <= sum(q for q, _ in per_ue) / n + 1e-9


@given(st.floats(1.0, 1e9), st.integers(0, 5))
def test_rate_below_minimum_means_negative_quality(rate, res):
    q = quality(rate, res)
    assert (q < 0) == (rate < LADDER[res].min_rate)
