"""Composite rollout reward: format + hierarchical SID accuracy + distance,
and group-relative advantages over the rollouts of one prompt."""
from __future__ import annotations

import math
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

from .geo import GeoPoint, haversine_km
from .sid import SidParseError, SidRegistry, SpatialSemanticId, sid_pattern
from .sid.codes import sid_from_match


@dataclass(frozen=True)
class HierarchyWeights:
    g1: float = 0.3
    g1g2: float = 0.2
    s1: float = 0.25
    s1s2: float = 0.15


@dataclass(frozen=True)
class RewardConfig:
    alpha: float = 2.0
    beta: float = 1.0
    lambda_u: float = 0.1
    d_near_km: float = 0.1
    d_far_km: float = 3.0
    r_min: float = 0.0
    r_max: float = 1.0
    weights: HierarchyWeights = field(default_factory=HierarchyWeights)
    fmt_value: float = 2.0
    advantage_epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", HierarchyWeights(**self.weights))
        w = self.weights
        if not 0 <= self.d_near_km < self.d_far_km:
            raise ValueError("need 0 <= d_near_km < d_far_km")
        if not self.r_min < self.r_max:
            raise ValueError("need r_min < r_max")
        if min(w.g1, w.g1g2, w.s1, w.s1s2, self.lambda_u) < 0:
            raise ValueError("weights must be non-negative")
        if w.g1 + w.g1g2 + w.s1 + w.s1s2 + self.lambda_u > 1 + 1e-12:
            raise ValueError("hierarchy weights plus lambda_u must not exceed 1")


@dataclass(frozen=True)
class RewardBreakdown:
    r_fmt: float
    r_acc: float
    r_dist: float
    total: float
    parsed_sid: SpatialSemanticId | None = None
    haversine_error_km: float | None = None


@dataclass(frozen=True)
class Prediction:
    sid: SpatialSemanticId
    point: GeoPoint | None


# -- distance ----------------------------------------------------------------


def distance_reward(d_km: float, cfg: RewardConfig = RewardConfig()) -> float:
    """Clipped linear reward in log(1 + d): r_max inside d_near, r_min beyond d_far."""
    if d_km < 0 or math.isnan(d_km):
        raise ValueError(f"distance must be non-negative, got {d_km}")
    lo = math.log1p(cfg.d_near_km)
    hi = math.log1p(cfg.d_far_km)
    t = (math.log1p(d_km) - lo) / (hi - lo)
    # t is the slope-free form of kappa * (log1p(d) - log1p(d_near))
    if t <= 0.0:
        return cfg.r_max
    if t >= 1.0:
        return cfg.r_min
    return cfg.r_max + (cfg.r_min - cfg.r_max) * t


def distance_slope(cfg: RewardConfig = RewardConfig()) -> float:
    return (cfg.r_min - cfg.r_max) / (math.log1p(cfg.d_far_km) - math.log1p(cfg.d_near_km))


# -- SID accuracy ------------------------------------------------------------


def _level_weights(first: float, rest: float, n: int) -> list[float]:
    # n == 2 gives (first, rest); other depths keep the same total, with the
    # first weight unchanged and the remainder split evenly
    if n == 1:
        return [first + rest]
    return [first] + [rest / (n - 1)] * (n - 1)


def _cumulative_matches(a: Sequence[int], b: Sequence[int]) -> list[bool]:
    out, ok = [], True
    for x, y in zip(a, b):
        ok = ok and x == y
        out.append(ok)
    return out


def sid_accuracy_reward(
    pred: SpatialSemanticId, gold: SpatialSemanticId, cfg: RewardConfig = RewardConfig()
) -> float:
    if pred.shape != gold.shape:
        raise ValueError(f"SID shapes differ: {pred.shape} vs {gold.shape}")
    w = cfg.weights
    geo_w = _level_weights(w.g1, w.g1g2, len(gold.g))
    sem_w = _level_weights(w.s1, w.s1s2, len(gold.s))
    base = sum((wt for wt, hit in zip(geo_w, _cumulative_matches(pred.g, gold.g)) if hit), 0.0)
    base += sum((wt for wt, hit in zip(sem_w, _cumulative_matches(pred.s, gold.s)) if hit), 0.0)
    if pred == gold:
        base += cfg.lambda_u
    return min(1.0, base)


# -- format ------------------------------------------------------------------

_STEPS = ("Step 1:", "Step 2:", "Step 3:")


def format_reward(
    completion: str,
    cfg: RewardConfig = RewardConfig(),
    geo_tokens: int = 2,
    semantic_levels: int = 2,
) -> float:
    """``fmt_value`` if the completion is one think block holding Step 1..3 in
    order, followed by exactly one SID run and nothing else."""
    if completion.count("<think>") != 1 or completion.count("</think>") != 1:
        return 0.0
    head, _, rest = completion.partition("<think>")
    body, _, tail = rest.partition("</think>")
    if head.strip():
        return 0.0
    pos = -1
    for step in _STEPS:
        nxt = body.find(step)
        if nxt <= pos:
            return 0.0
        pos = nxt
    if not sid_pattern(geo_tokens, semantic_levels).fullmatch(tail.strip()):
        return 0.0
    return cfg.fmt_value


# -- prediction extraction ---------------------------------------------------


def extract_prediction(completion: str, registry: SidRegistry) -> Prediction | None:
    """First SID run after the last ``</think>`` (whole text if there is none)."""
    _, sep, tail = completion.rpartition("</think>")
    text = tail if sep else completion
    cfg = registry.config
    m = sid_pattern(cfg.geo_token_count, cfg.rvq_levels).search(text)
    if m is None:
        return None
    try:
        sid = sid_from_match(m, cfg.geo_token_count, cfg.rvq_codebook_size)
    except SidParseError:
        return None
    return Prediction(sid, registry.point_of(sid))


def composite_reward(
    completion: str,
    gold_sid: SpatialSemanticId,
    gold_point: tuple[float, float],
    registry: SidRegistry,
    cfg: RewardConfig = RewardConfig(),
) -> RewardBreakdown:
    cfg_sid = registry.config
    r_fmt = format_reward(completion, cfg, cfg_sid.geo_token_count, cfg_sid.rvq_levels)
    pred = extract_prediction(completion, registry)
    r_acc = r_dist = 0.0
    err = None
    if pred is not None:
        r_acc = sid_accuracy_reward(pred.sid, gold_sid, cfg)
        if pred.point is not None:
            err = haversine_km(pred.point, gold_point)
            r_dist = distance_reward(err, cfg)
    total = r_fmt + cfg.alpha * r_acc + cfg.beta * r_dist
    return RewardBreakdown(r_fmt, r_acc, r_dist, total, pred.sid if pred else None, err)


# -- advantages --------------------------------------------------------------


def group_advantages(rewards: Sequence[float], cfg: RewardConfig = RewardConfig()) -> list[float]:
    """(r - mean) / (population std + eps); all zeros when std < eps."""
    if not rewards:
        raise ValueError("need at least one reward")
    n = len(rewards)
    mean = math.fsum(rewards) / n
    std = math.sqrt(math.fsum((r - mean) ** 2 for r in rewards) / n)
    eps = cfg.advantage_epsilon
    if std < eps:
        return [0.0] * n
    return [(r - mean) / (std + eps) for r in rewards]


# -- batch scoring -----------------------------------------------------------


@dataclass
class RolloutGroup:
    prompt_id: str
    completions: list[str] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    advantages: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.rewards and len(self.rewards) != len(self.completions):
            raise ValueError("rewards and completions differ in length")
        if self.advantages and len(self.advantages) != len(self.rewards):
            raise ValueError("advantages and rewards differ in length")


def score_rollouts(
    rollouts: Sequence[Mapping],
    labels: Mapping[str, Mapping],
    registry: SidRegistry,
    cfg: RewardConfig = RewardConfig(),
) -> tuple[list[dict], int]:
    """Score ``{prompt_id, completion_index, completion_text}`` records.

    Records that are incomplete or refer to an unknown prompt are skipped and
    counted. Rows come back ordered by (prompt_id, completion_index) with the
    advantage computed within each prompt's group.
    """
    skipped = 0
    keyed: dict[tuple[str, int], RewardBreakdown] = {}
    for rec in rollouts:
        try:
            prompt_id = str(rec["prompt_id"])
            index = int(rec["completion_index"])
            text = rec["completion_text"]
            label = labels[prompt_id]
            if not isinstance(text, str) or (prompt_id, index) in keyed:
                raise ValueError("bad rollout")
            gold = registry.parse(label["target_sid_surface"])
            gold_point = GeoPoint(float(label["gt_lat"]), float(label["gt_lng"]))
        except (KeyError, ValueError, TypeError):
            skipped += 1
            continue
        keyed[(prompt_id, index)] = composite_reward(text, gold, gold_point, registry, cfg)

    groups: dict[str, list[tuple[int, RewardBreakdown]]] = {}
    for (prompt_id, index), br in sorted(keyed.items(), key=lambda kv: kv[0]):
        groups.setdefault(prompt_id, []).append((index, br))
    rows = []
    for prompt_id, members in groups.items():
        advs = group_advantages([br.total for _, br in members], cfg)
        for (index, br), adv in zip(members, advs):
            rows.append(
                {
                    "prompt_id": prompt_id,
                    "completion_index": index,
                    "r_fmt": br.r_fmt,
                    "r_acc": br.r_acc,
                    "r_dist": br.r_dist,
                    "total": br.total,
                    "advantage": adv,
                    "pred_sid": br.parsed_sid.render() if br.parsed_sid else None,
                    "err_km": br.haversine_error_km,
                }
            )
    return rows, skipped
