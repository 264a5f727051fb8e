import math
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import OFFICE, OFFICE_SID, PARKING, PARKING_SID
from geosid.geo import GeoPoint
from geosid.reward import (
    RewardConfig,
    composite_reward,
    distance_reward,
    distance_slope,
    extract_prediction,
    format_reward,
    group_advantages,
    score_rollouts,
    sid_accuracy_reward,
)
from geosid.sid import SidConfig, SidRegistry, SpatialSemanticId

# 1 - (ln 2 - ln 1.1) / (ln 4 - ln 1.1), evaluated with 50-digit mpmath
D_ONE_KM = 0.53691376748985409

GOLD = OFFICE_SID
GOLD_POINT = GeoPoint(*OFFICE[2:4])


@pytest.fixture
def registry():
    return SidRegistry(
        {"office": OFFICE_SID, "parking": PARKING_SID},
        SidConfig(),
        points={"office": OFFICE[2:4], "parking": PARKING[2:4]},
    )


# -- distance ----------------------------------------------------------------


def test_distance_reward_examples():
    assert distance_reward(0.05) == 1.0
    assert distance_reward(3.0) == 0.0
    assert distance_reward(50.0) == 0.0
    assert distance_reward(1.0) == pytest.approx(D_ONE_KM, abs=1e-6)
    assert distance_reward(1.0) == pytest.approx(0.536914, abs=1e-6)


def test_distance_reward_oracle_high_precision():
    mpmath = pytest.importorskip("mpmath")
    mpmath.mp.dps = 40
    for d in (0.1, 0.25, 0.5, 1.0, 2.0, 2.99):
        lo, hi = mpmath.log(1 + mpmath.mpf("0.1")), mpmath.log(4)
        want = 1 + (-1 / (hi - lo)) * (mpmath.log(1 + mpmath.mpf(d)) - lo)
        want = min(max(want, 0), 1)
        assert distance_reward(d) == pytest.approx(float(want), abs=1e-12)


def test_distance_reward_boundaries_exact():
    cfg = RewardConfig(d_near_km=0.25, d_far_km=7.0, r_min=-1.0, r_max=2.5)
    assert distance_reward(0.25, cfg) == 2.5
    assert distance_reward(7.0, cfg) == -1.0
    assert distance_reward(0.1) == 1.0


def test_slope_matches_closed_form():
    assert distance_slope() == pytest.approx(-1 / (math.log(4) - math.log(1.1)), rel=1e-15)


def test_distance_reward_rejects_negative():
    with pytest.raises(ValueError):
        distance_reward(-0.1)


def _base10_reward(d, cfg=RewardConfig()):
    lo, hi = math.log10(1 + cfg.d_near_km), math.log10(1 + cfg.d_far_km)
    kappa = (cfg.r_min - cfg.r_max) / (hi - lo)
    r = cfg.r_max + kappa * (math.log10(1 + d) - lo)
    return min(cfg.r_max, max(cfg.r_min, r))


def test_base_invariance_1000_distances():
    rng = random.Random(2024)
    worst = 0.0
    for _ in range(1000):
        d = rng.choice([rng.uniform(0, 0.2), rng.uniform(0, 5), rng.expovariate(0.1)])
        worst = max(worst, abs(distance_reward(d) - _base10_reward(d)))
    assert worst <= 1e-12


@given(st.floats(0, 1e4), st.floats(0, 1e4))
def test_distance_reward_monotone(d1, d2):
    lo, hi = sorted((d1, d2))
    assert distance_reward(lo) >= distance_reward(hi)
    assert 0.0 <= distance_reward(hi) <= 1.0


@pytest.mark.parametrize(
    "kwargs",
    [
        {"d_near_km": 3.0, "d_far_km": 3.0},
        {"r_min": 1.0, "r_max": 1.0},
        {"lambda_u": -0.1},
        {"lambda_u": 0.2},
    ],
)
def test_reward_config_validation(kwargs):
    with pytest.raises(ValueError):
        RewardConfig(**kwargs)


# -- SID accuracy ------------------------------------------------------------


def sid(g, s, u=0):
    return SpatialSemanticId(tuple(g), tuple(s), u)


@pytest.mark.parametrize(
    "pred, want",
    [
        (sid([161, 115], [12, 7]), 1.0),
        (sid([161, 1], [1, 1]), 0.3),
        (sid([161, 115], [1, 1]), 0.5),
        (sid([161, 115], [12, 7], 3), 0.9),
        (sid([0, 115], [12, 7]), 0.4),
        (sid([0, 0], [0, 7]), 0.0),
    ],
)
def test_sid_accuracy_cases(pred, want):
    assert sid_accuracy_reward(pred, GOLD) == want


def test_sid_accuracy_shape_mismatch():
    with pytest.raises(ValueError):
        sid_accuracy_reward(sid([1], [1, 2]), GOLD)


def test_geo_weights_for_other_depths():
    gold1 = sid([7], [1, 2])
    assert sid_accuracy_reward(sid([7], [0, 0]), gold1) == pytest.approx(0.5)
    gold3 = sid([1, 2, 3], [4, 5])
    assert sid_accuracy_reward(sid([1, 0, 0], [0, 0]), gold3) == pytest.approx(0.3)
    assert sid_accuracy_reward(sid([1, 2, 0], [0, 0]), gold3) == pytest.approx(0.4)
    assert sid_accuracy_reward(sid([1, 2, 3], [0, 0]), gold3) == pytest.approx(0.5)
    assert sid_accuracy_reward(gold3, gold3) == pytest.approx(1.0)


components = st.lists(st.booleans(), min_size=5, max_size=5)


@given(components, st.integers(0, 4))
def test_sid_accuracy_never_drops_when_a_component_matches(mask, flip):
    gold = sid([10, 20], [3, 4], 1)

    def build(m):
        return sid(
            [10 if m[0] else 11, 20 if m[1] else 21],
            [3 if m[2] else 5, 4 if m[3] else 6],
            1 if m[4] else 2,
        )

    better = list(mask)
    better[flip] = True
    assert sid_accuracy_reward(build(better), gold) >= sid_accuracy_reward(build(mask), gold)


# -- format ------------------------------------------------------------------


def test_reference_trace_format(golden_trace):
    assert format_reward(golden_trace) == 2.0
    assert format_reward("\n  " + golden_trace + "\n\n") == 2.0


def mutations(trace):
    sid_run = "<m_161><n_115><a_12><b_7><c_0>"
    return {
        "no step 1": trace.replace("Step 1:", "Stage 1:"),
        "no step 2": trace.replace("Step 2:", "Step two:"),
        "no step 3": trace.replace("Step 3:", "Step:"),
        "steps out of order": trace.replace("Step 1:", "Step X:").replace("Step 3:", "Step 1:").replace("Step X:", "Step 3:"),
        "duplicated sid run": trace + sid_run,
        "sid run twice with space": trace + " " + sid_run,
        "no sid after think": trace.replace(sid_run, ""),
        "text after sid": trace + " because of routine",
        "missing closing tag": trace.replace("</think>", ""),
        "two think blocks": "<think>Step 1: Step 2: Step 3:</think>\n" + trace,
        "text before think": "Sure! " + trace,
        "truncated sid": trace[:-6],
    }


def test_mutated_traces_fail(golden_trace):
    muts = mutations(golden_trace)
    assert len(muts) >= 10
    for name, text in muts.items():
        assert format_reward(text) == 0.0, name


# -- extraction and composite ------------------------------------------------


def test_extract_from_reference_trace(golden_trace, registry):
    pred = extract_prediction(golden_trace, registry)
    assert pred.sid.render() == "<m_161><n_115><a_12><b_7><c_0>"
    assert pred.point == GOLD_POINT


def test_extract_without_tokens(registry):
    assert extract_prediction("<think>Step 1:</think> the office", registry) is None
    assert extract_prediction("", registry) is None


def test_extract_uses_text_after_last_think(registry):
    text = "<think>maybe <m_161><n_17><a_21><b_8><c_0></think>\n<m_161><n_115><a_12><b_7><c_0>"
    assert extract_prediction(text, registry).sid == OFFICE_SID


def test_unregistered_sid_has_no_point(registry, golden_trace):
    stranger = "<m_1><n_2><a_3><b_4><c_0>"
    pred = extract_prediction(stranger, registry)
    assert pred.sid.render() == stranger and pred.point is None
    br = composite_reward(golden_trace.replace(OFFICE_SID.render(), stranger), GOLD, GOLD_POINT, registry)
    assert br.r_dist == 0.0 and br.haversine_error_km is None
    assert br.total == 2.0


def test_composite_examples(golden_trace, registry):
    perfect = composite_reward(golden_trace, GOLD, GOLD_POINT, registry)
    assert (perfect.r_fmt, perfect.r_acc, perfect.r_dist, perfect.total) == (2.0, 1.0, 1.0, 5.0)
    bare = composite_reward(OFFICE_SID.render(), GOLD, GOLD_POINT, registry)
    assert bare.total == 3.0 and bare.r_fmt == 0.0
    nothing = composite_reward("no idea", GOLD, GOLD_POINT, registry)
    assert nothing.total == 0 and nothing.parsed_sid is None


def test_composite_wrong_nearby_poi(golden_trace, registry):
    text = golden_trace.replace(OFFICE_SID.render(), PARKING_SID.render())
    br = composite_reward(text, GOLD, GOLD_POINT, registry)
    assert br.r_acc == 0.3
    assert 0.0 < br.r_dist < 1.0
    assert br.r_dist == distance_reward(br.haversine_error_km)


@given(st.floats(0, 5), st.floats(0, 5))
def test_composite_linear_in_components(alpha, beta):
    reg = SidRegistry(
        {"office": OFFICE_SID, "parking": PARKING_SID},
        points={"office": OFFICE[2:4], "parking": PARKING[2:4]},
    )
    cfg = RewardConfig(alpha=alpha, beta=beta)
    text = "<think>Step 1: a Step 2: b Step 3: c</think>" + PARKING_SID.render()
    br = composite_reward(text, GOLD, GOLD_POINT, reg, cfg)
    assert br.total == pytest.approx(br.r_fmt + alpha * br.r_acc + beta * br.r_dist, abs=1e-12)
    assert 0 <= br.r_acc <= 1 and 0 <= br.r_dist <= 1 and br.r_fmt in (0.0, cfg.fmt_value)


# -- advantages --------------------------------------------------------------


def test_zero_variance_group():
    assert group_advantages([3, 3, 3, 3]) == [0.0, 0.0, 0.0, 0.0]
    assert group_advantages([1.5]) == [0.0]


def test_two_member_group():
    a = group_advantages([4, 2])
    assert a == pytest.approx([1.0, -1.0], abs=1e-5)


def test_three_member_group():
    assert group_advantages([5, 3, 1]) == pytest.approx([1.2247, 0.0, -1.2247], abs=1e-4)


def test_empty_group_rejected():
    with pytest.raises(ValueError):
        group_advantages([])


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=16))
def test_advantages_normalized(rewards):
    n = len(rewards)
    mean = sum(rewards) / n
    std = math.sqrt(sum((r - mean) ** 2 for r in rewards) / n)
    adv = group_advantages(rewards)
    if std < 1e-6:
        assert adv == [0.0] * n
        return
    m = sum(adv) / n
    s = math.sqrt(sum((a - m) ** 2 for a in adv) / n)
    assert abs(m) <= 1e-9
    # dividing by std + eps instead of std shrinks the spread by eps / (std + eps)
    assert s == pytest.approx(std / (std + 1e-6), abs=1e-9)
    assert abs(s - 1) <= 1e-6 / std + 1e-9


# -- batch scoring -----------------------------------------------------------


def test_score_rollouts(golden_trace, registry):
    labels = {"q1": {"target_sid_surface": OFFICE_SID.render(), "gt_lat": OFFICE[2], "gt_lng": OFFICE[3]}}
    rollouts = [
        {"prompt_id": "q1", "completion_index": 1, "completion_text": "nothing"},
        {"prompt_id": "q1", "completion_index": 0, "completion_text": golden_trace},
        {"prompt_id": "missing", "completion_index": 0, "completion_text": golden_trace},
        {"prompt_id": "q1", "completion_text": golden_trace},
        {"prompt_id": "q1", "completion_index": 0, "completion_text": "duplicate index"},
    ]
    rows, skipped = score_rollouts(rollouts, labels, registry)
    assert skipped == 3
    assert [(r["completion_index"], r["total"]) for r in rows] == [(0, 5.0), (1, 0.0)]
    assert rows[0]["advantage"] == pytest.approx(1.0, abs=1e-5)
    assert rows[0]["pred_sid"] == OFFICE_SID.render() and rows[1]["pred_sid"] is None
