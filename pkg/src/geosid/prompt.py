"""Render trajectories as next-POI prompts and emit SID grounding examples."""
from __future__ import annotations

import json
from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .geo import GeoPoint, bucket_distance, haversine_km
from .ingest import CheckIn, DatasetSplit, PoiRecord, Trajectory
from .sid import SidRegistry, SpatialSemanticId

DEFAULT_INSTRUCTION = (
    "Here is a record of a user's POI accesses, your task is based on the history to "
    "predict the POI that the user is likely to access at the specified time."
)
ADDRESS_PLACEHOLDER = "an unknown address"

_MONTHS = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)
_WEEKDAYS = ("Monday", "Tuesday", "Wednesday", "Thursday", "Friday", "Saturday", "Sunday")


@dataclass(frozen=True)
class SerializationConfig:
    max_history_checkins_train: int = 50
    max_history_checkins_eval: int = 300
    include_addresses: bool = True
    include_distances: bool = True
    instruction: str = DEFAULT_INSTRUCTION

    def __post_init__(self) -> None:
        if self.max_history_checkins_train < 1 or self.max_history_checkins_eval < 1:
            raise ValueError("history limits must be >= 1")


@dataclass(frozen=True)
class PromptRecord:
    prompt_id: str
    user_id: str
    prompt_text: str
    ground_truth_sid: SpatialSemanticId
    ground_truth_point: GeoPoint
    target_local_time: datetime

    def to_record(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "user_id": self.user_id,
            "prompt": self.prompt_text,
            "target_sid_surface": self.ground_truth_sid.render(),
            "gt_lat": self.ground_truth_point.latitude,
            "gt_lng": self.ground_truth_point.longitude,
            "target_time_iso": self.target_local_time.isoformat(),
        }


@dataclass(frozen=True)
class AlignmentPair:
    poi_id: str
    direction: str  # "text_to_sid" or "sid_to_text"
    input_text: str
    target_text: str


def ordinal(day: int) -> str:
    if 11 <= day % 100 <= 13:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(day % 10, "th")
    return f"{day}{suffix}"


def format_datetime(dt: datetime) -> str:
    """e.g. ``April 11th, 2012, Wednesday, 04:59``"""
    return (
        f"{_MONTHS[dt.month - 1]} {ordinal(dt.day)}, {dt.year}, "
        f"{_WEEKDAYS[dt.weekday()]}, {dt.hour:02d}:{dt.minute:02d}"
    )


def format_checkin_line(
    c: CheckIn,
    sid_surface: str,
    prev: CheckIn | None = None,
    *,
    address: str | None = None,
    include_address: bool = True,
    include_distance: bool = True,
) -> str:
    place = c.category_name
    if include_address:
        place += f" at {address or ADDRESS_PLACEHOLDER}"
    line = f"{format_datetime(c.local_time)}, visit {place} {sid_surface}"
    if prev is not None and include_distance:
        line += f", distance is {bucket_distance(haversine_km(prev.point, c.point)).label}"
    return line + "."


def _render_block(
    items: Sequence[tuple[CheckIn, CheckIn | None]],
    registry: SidRegistry,
    config: SerializationConfig,
    addresses: Mapping[str, str],
) -> list[str]:
    return [
        format_checkin_line(
            c,
            registry.sid_of(c.poi_id).render(),
            prev,
            address=addresses.get(c.poi_id),
            include_address=config.include_addresses,
            include_distance=config.include_distances,
        )
        + " "
        for c, prev in items
    ]


def _with_predecessors(checkins: Sequence[CheckIn]) -> list[tuple[CheckIn, CheckIn | None]]:
    return [(c, checkins[k - 1] if k else None) for k, c in enumerate(checkins)]


def build_eval_prompt(
    history: Sequence[Trajectory],
    context: Sequence[CheckIn],
    target: CheckIn,
    registry: SidRegistry,
    config: SerializationConfig = SerializationConfig(),
    *,
    addresses: Mapping[str, str] | None = None,
    limit: int | None = None,
    prompt_id: str | None = None,
) -> PromptRecord:
    """Serialize history blocks, the current context and the target line.

    At most ``limit`` check-ins are rendered (default: the eval limit); the
    newest are kept, so the oldest whole trajectories go first. Distance
    clauses always refer to the true predecessor within the trajectory.
    """
    if not context:
        raise ValueError("current trajectory needs at least one context check-in")
    limit = config.max_history_checkins_eval if limit is None else limit
    if limit < 1:
        raise ValueError("limit must be >= 1")
    addresses = addresses or {}

    blocks = [_with_predecessors(t.checkins) for t in history]
    blocks.append(_with_predecessors(context))
    budget = limit
    kept: list[list[tuple[CheckIn, CheckIn | None]]] = []
    for block in reversed(blocks):
        take = block[max(0, len(block) - budget) :] if budget > 0 else []
        budget -= len(take)
        kept.append(take)
    kept.reverse()
    *hist_blocks, current = kept

    lines = []
    if config.instruction:
        lines.append(config.instruction)
    lines.append("Given user historical data:")
    n = 0
    for block in hist_blocks:
        if not block:
            continue
        n += 1
        lines.append(f"User Traj#{n}:")
        lines.extend(_render_block(block, registry, config, addresses))
    lines.append("Given user behavior sequence:")
    lines.extend(_render_block(current, registry, config, addresses))
    lines.append(f"At {format_datetime(target.local_time)}, user will visit ")
    gold = registry.sid_of(target.poi_id)
    return PromptRecord(
        prompt_id=prompt_id or f"{target.user_id}:{target.row}",
        user_id=target.user_id,
        prompt_text="\n".join(lines),
        ground_truth_sid=gold,
        ground_truth_point=GeoPoint(target.latitude, target.longitude),
        target_local_time=target.local_time,
    )


def _history_index(trajectories: Iterable[Trajectory]) -> dict[str, list[Trajectory]]:
    index: dict[str, list[Trajectory]] = defaultdict(list)
    for t in trajectories:
        index[t.user_id].append(t)
    for seq in index.values():
        seq.sort(key=lambda t: (t.start, t.trajectory_id))
    return index


def _prior(index: Mapping[str, list[Trajectory]], traj: Trajectory) -> list[Trajectory]:
    return [
        t for t in index.get(traj.user_id, ())
        if t.end < traj.start and t.trajectory_id != traj.trajectory_id
    ]


def emit_eval_prompts(
    split: DatasetSplit,
    registry: SidRegistry,
    config: SerializationConfig = SerializationConfig(),
    part: str = "test",
    addresses: Mapping[str, str] | None = None,
) -> list[PromptRecord]:
    """One query per valid/test trajectory: predict its last check-in."""
    index = _history_index(split.train)
    out = []
    for traj in getattr(split, part):
        if len(traj) < 2:
            continue
        out.append(
            build_eval_prompt(
                _prior(index, traj),
                traj.checkins[:-1],
                traj.checkins[-1],
                registry,
                config,
                addresses=addresses,
                limit=config.max_history_checkins_eval,
                prompt_id=traj.trajectory_id,
            )
        )
    return out


def emit_pretrain_examples(
    split: DatasetSplit,
    registry: SidRegistry,
    config: SerializationConfig = SerializationConfig(),
    addresses: Mapping[str, str] | None = None,
) -> list[PromptRecord]:
    """Every (prefix, next check-in) pair of every train trajectory."""
    index = _history_index(split.train)
    out = []
    for traj in split.train:
        history = _prior(index, traj)
        for i in range(1, len(traj)):
            out.append(
                build_eval_prompt(
                    history,
                    traj.checkins[:i],
                    traj.checkins[i],
                    registry,
                    config,
                    addresses=addresses,
                    limit=config.max_history_checkins_train,
                    prompt_id=f"{traj.trajectory_id}:{i}",
                )
            )
    return out


def poi_description(poi: PoiRecord, address: str | None = None) -> str:
    return f"Category: {poi.category_name}. Address: {address or poi.address or ADDRESS_PLACEHOLDER}."


def emit_alignment_pairs(
    registry: SidRegistry,
    catalog: Mapping[str, PoiRecord],
    addresses: Mapping[str, str] | None = None,
) -> list[AlignmentPair]:
    addresses = addresses or {}
    out = []
    for poi_id in sorted(catalog):
        text = poi_description(catalog[poi_id], addresses.get(poi_id))
        surface = registry.sid_of(poi_id).render()
        out.append(AlignmentPair(poi_id, "text_to_sid", text, surface))
        out.append(AlignmentPair(poi_id, "sid_to_text", surface, text))
    return out


def write_prompts(records: Iterable[PromptRecord], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_record(), ensure_ascii=False) + "\n")
            n += 1
    return n


def write_alignment(pairs: Iterable[AlignmentPair], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            rec = {
                "poi_id": p.poi_id,
                "direction": p.direction,
                "input": p.input_text,
                "target": p.target_text,
            }
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_prompt_labels(path: str | Path) -> dict[str, dict]:
    """prompt_id -> prompt record, for joining rollouts and predictions."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            for key in ("prompt_id", "target_sid_surface", "gt_lat", "gt_lng"):
                if key not in rec:
                    raise ValueError(f"{path}:{lineno}: prompt record lacks {key!r}")
            out[rec["prompt_id"]] = rec
    return out
