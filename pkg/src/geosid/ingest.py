"""Check-in parsing, activity filtering, trajectory segmentation and the
temporal train/valid/test split."""
from __future__ import annotations

import calendar
import csv
import json
import logging
from collections import Counter, defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import asdict, dataclass, field
from datetime import datetime, timedelta, timezone
from pathlib import Path

logger = logging.getLogger(__name__)

FORMATS = ("foursquare_tsv", "gowalla")
MAX_MALFORMED_FRACTION = 0.01

_MONTHS = {
    name: i + 1
    for i, name in enumerate(
        ["Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec"]
    )
}

# field -> column index
DEFAULT_COLUMNS = {
    "foursquare_tsv": {
        "user_id": 0, "poi_id": 1, "category_id": 2, "category_name": 3,
        "latitude": 4, "longitude": 5, "tz_offset_minutes": 6, "time": 7,
    },
    "gowalla": {
        "user_id": 0, "time": 1, "latitude": 2, "longitude": 3, "poi_id": 4,
        "category_id": 5, "category_name": 6,
    },
}
_OPTIONAL = {"category_id", "category_name", "tz_offset_minutes"}


class CheckinFormatError(ValueError):
    def __init__(self, message: str, line_number: int | None = None) -> None:
        super().__init__(message)
        self.line_number = line_number


@dataclass(frozen=True)
class CheckIn:
    user_id: str
    poi_id: str
    category_id: str
    category_name: str
    latitude: float
    longitude: float
    utc_timestamp: int
    tz_offset_minutes: int = 0
    # position among the well-formed records of the source file
    row: int = -1

    @property
    def local_timestamp(self) -> int:
        return self.utc_timestamp + self.tz_offset_minutes * 60

    @property
    def local_time(self) -> datetime:
        tz = timezone(timedelta(minutes=self.tz_offset_minutes))
        return datetime.fromtimestamp(self.utc_timestamp, tz)

    @property
    def point(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


@dataclass(frozen=True)
class Trajectory:
    user_id: str
    trajectory_id: str
    checkins: tuple[CheckIn, ...]

    def __len__(self) -> int:
        return len(self.checkins)

    @property
    def start(self) -> int:
        return self.checkins[0].local_timestamp

    @property
    def end(self) -> int:
        return self.checkins[-1].local_timestamp

    @property
    def end_utc(self) -> int:
        return self.checkins[-1].utc_timestamp


@dataclass(frozen=True)
class PoiRecord:
    poi_id: str
    category_id: str
    category_name: str
    latitude: float
    longitude: float
    address: str | None = None

    @property
    def point(self) -> tuple[float, float]:
        return (self.latitude, self.longitude)


@dataclass
class DatasetSplit:
    train: list[Trajectory] = field(default_factory=list)
    valid: list[Trajectory] = field(default_factory=list)
    test: list[Trajectory] = field(default_factory=list)
    poi_catalog: dict[str, PoiRecord] = field(default_factory=dict)

    def parts(self) -> list[tuple[str, list[Trajectory]]]:
        return [("train", self.train), ("valid", self.valid), ("test", self.test)]


@dataclass(frozen=True)
class DatasetStats:
    users: int = 0
    pois: int = 0
    all_trajectories: int = 0
    train_trajectories: int = 0
    valid_trajectories: int = 0
    test_trajectories: int = 0
    categories: int = 0
    checkins: int = 0

    def as_dict(self) -> dict[str, int]:
        return asdict(self)


# -- parsing -----------------------------------------------------------------


def _parse_foursquare_time(text: str) -> int:
    # e.g. "Tue Apr 03 18:00:09 +0000 2012"
    parts = text.split()
    if len(parts) != 6:
        raise ValueError(f"bad time {text!r}")
    _, mon, day, hms, tz, year = parts
    hh, mm, ss = (int(x) for x in hms.split(":"))
    if len(tz) != 5 or tz[0] not in "+-":
        raise ValueError(f"bad zone {tz!r}")
    offset = (int(tz[1:3]) * 60 + int(tz[3:5])) * (1 if tz[0] == "+" else -1)
    dt = datetime(int(year), _MONTHS[mon], int(day), hh, mm, ss)
    return calendar.timegm(dt.timetuple()) - offset * 60


def _parse_iso_time(text: str) -> tuple[int, int]:
    text = text.strip()
    if text.endswith("Z"):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    offset = dt.utcoffset()
    return int(dt.timestamp()), int(offset.total_seconds() // 60) if offset else 0


def _decode(raw: bytes) -> str:
    try:
        return raw.decode("utf-8")
    except UnicodeDecodeError:
        return raw.decode("latin-1")


def _parse_line(fields: list[str], fmt: str, cols: Mapping[str, int]) -> dict:
    def get(name: str) -> str | None:
        idx = cols.get(name)
        if idx is None or idx >= len(fields):
            if name in _OPTIONAL:
                return None
            raise ValueError(f"missing column {name}")
        return fields[idx].strip()

    lat = float(get("latitude"))
    lng = float(get("longitude"))
    if not (-90.0 <= lat <= 90.0) or not (-180.0 <= lng <= 180.0):
        raise ValueError("coordinate out of bounds")
    user, poi = get("user_id"), get("poi_id")
    if not user or not poi:
        raise ValueError("empty id")
    if fmt == "foursquare_tsv":
        ts = _parse_foursquare_time(get("time"))
        tz = get("tz_offset_minutes")
        offset = int(tz) if tz else 0
    else:
        ts, offset = _parse_iso_time(get("time"))
        tz = get("tz_offset_minutes")
        if tz:
            offset = int(tz)
    cat_id = get("category_id") or ""
    cat_name = get("category_name") or cat_id
    return dict(
        user_id=user, poi_id=poi, category_id=cat_id, category_name=cat_name,
        latitude=lat, longitude=lng, utc_timestamp=ts, tz_offset_minutes=offset,
    )


def read_checkins(
    path: str | Path,
    fmt: str = "foursquare_tsv",
    columns: Mapping[str, int] | None = None,
) -> tuple[list[CheckIn], list[int], int]:
    """Parse every line; return (records, malformed line numbers, data line count)."""
    if fmt not in FORMATS:
        raise ValueError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    cols = dict(DEFAULT_COLUMNS[fmt])
    if columns:
        cols.update(columns)
    out: list[CheckIn] = []
    bad: list[int] = []
    total = 0
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = _decode(raw).rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t") if "\t" in line else next(csv.reader([line]))
            try:
                rec = _parse_line(fields, fmt, cols)
            except (ValueError, KeyError, IndexError, OverflowError):
                if total == 0 and not bad and _looks_like_header(fields, cols):
                    continue
                total += 1
                bad.append(lineno)
                continue
            total += 1
            out.append(CheckIn(**rec, row=len(out)))
    return out, bad, total


def _looks_like_header(fields: list[str], cols: Mapping[str, int]) -> bool:
    idx = cols["latitude"]
    return idx < len(fields) and any(ch.isalpha() for ch in fields[idx])


def parse_checkin_file(
    path: str | Path,
    fmt: str = "foursquare_tsv",
    columns: Mapping[str, int] | None = None,
) -> list[CheckIn]:
    records, bad, total = read_checkins(path, fmt, columns)
    if bad:
        logger.warning("%s: skipped %d malformed line(s), first at line %d", path, len(bad), bad[0])
        if len(bad) > MAX_MALFORMED_FRACTION * total:
            raise CheckinFormatError(
                f"{path}: {len(bad)} of {total} lines malformed (first at line {bad[0]})",
                line_number=bad[0],
            )
    return records


# -- filtering and segmentation ----------------------------------------------


def filter_min_activity(
    checkins: Sequence[CheckIn], min_count: int = 10, fixpoint: bool = False
) -> list[CheckIn]:
    """Drop POIs with fewer than ``min_count`` check-ins, then users with fewer
    than ``min_count`` remaining. One pass unless ``fixpoint`` is set."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    current = list(checkins)
    while True:
        poi_counts = Counter(c.poi_id for c in current)
        kept = [c for c in current if poi_counts[c.poi_id] >= min_count]
        user_counts = Counter(c.user_id for c in kept)
        kept = [c for c in kept if user_counts[c.user_id] >= min_count]
        if not fixpoint or len(kept) == len(current):
            return kept
        current = kept


def segment_trajectories(checkins: Iterable[CheckIn], gap_hours: float = 24) -> list[Trajectory]:
    """Split each user's time-ordered check-ins wherever the gap exceeds ``gap_hours``."""
    limit = gap_hours * 3600
    per_user: dict[str, list[CheckIn]] = defaultdict(list)
    for c in checkins:
        per_user[c.user_id].append(c)
    out: list[Trajectory] = []
    for user in sorted(per_user):
        seq = sorted(per_user[user], key=lambda c: c.local_timestamp)
        runs: list[list[CheckIn]] = [[seq[0]]]
        for prev, cur in zip(seq, seq[1:]):
            if cur.local_timestamp - prev.local_timestamp > limit:
                runs.append([])
            runs[-1].append(cur)
        out.extend(
            Trajectory(user, f"{user}_{k}", tuple(run)) for k, run in enumerate(runs)
        )
    return out


def build_catalog(trajectories: Iterable[Trajectory]) -> dict[str, PoiRecord]:
    catalog: dict[str, PoiRecord] = {}
    for traj in trajectories:
        for c in traj.checkins:
            if c.poi_id not in catalog:
                catalog[c.poi_id] = PoiRecord(
                    c.poi_id, c.category_id, c.category_name, c.latitude, c.longitude
                )
    return dict(sorted(catalog.items()))


def temporal_split(
    trajectories: Sequence[Trajectory],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
) -> DatasetSplit:
    """Order by end time and cut 80/10/10; valid/test trajectories touching a
    user or POI unseen in train are dropped."""
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"ratios must be three non-negative numbers summing to 1: {ratios}")
    if not trajectories:
        return DatasetSplit()
    ordered = sorted(trajectories, key=lambda t: (t.end_utc, t.user_id, t.trajectory_id))
    n = len(ordered)
    n_train = int(n * ratios[0] + 1e-9)
    n_valid = int(n * ratios[1] + 1e-9)
    train = ordered[:n_train]
    users = {t.user_id for t in train}
    pois = {c.poi_id for t in train for c in t.checkins}

    def seen(t: Trajectory) -> bool:
        return t.user_id in users and all(c.poi_id in pois for c in t.checkins)

    valid = [t for t in ordered[n_train : n_train + n_valid] if seen(t)]
    test = [t for t in ordered[n_train + n_valid :] if seen(t)]
    return DatasetSplit(train, valid, test, build_catalog(train))


def dataset_stats(split: DatasetSplit) -> DatasetStats:
    trajs = [t for _, part in split.parts() for t in part]
    checkins = [c for t in trajs for c in t.checkins]
    return DatasetStats(
        users=len({t.user_id for t in trajs}),
        pois=len({c.poi_id for c in checkins}),
        all_trajectories=len(trajs),
        train_trajectories=len(split.train),
        valid_trajectories=len(split.valid),
        test_trajectories=len(split.test),
        categories=len({c.category_id or c.category_name for c in checkins}),
        checkins=len(checkins),
    )


def preprocess(
    checkins: Sequence[CheckIn],
    min_count: int = 10,
    gap_hours: float = 24,
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    fixpoint: bool = False,
) -> DatasetSplit:
    filtered = filter_min_activity(checkins, min_count, fixpoint=fixpoint)
    return temporal_split(segment_trajectories(filtered, gap_hours), ratios)


def evaluation_queries(trajectories: Iterable[Trajectory]) -> list[Trajectory]:
    """Trajectories usable as (context, target) queries: length >= 2."""
    return [t for t in trajectories if len(t) >= 2]


# -- stage files -------------------------------------------------------------


def write_manifest(split: DatasetSplit, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for name, part in split.parts():
            for t in part:
                rec = {
                    "trajectory_id": t.trajectory_id,
                    "user_id": t.user_id,
                    "split": name,
                    "checkin_indices": [c.row for c in t.checkins],
                }
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_manifest(path: str | Path) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            missing = {"trajectory_id", "user_id", "split", "checkin_indices"} - rec.keys()
            if missing or rec["split"] not in ("train", "valid", "test"):
                raise CheckinFormatError(f"{path}:{lineno}: bad manifest record", lineno)
            out.append(rec)
    return out


def split_from_manifest(manifest: Sequence[dict], checkins: Sequence[CheckIn]) -> DatasetSplit:
    split = DatasetSplit()
    parts = {"train": split.train, "valid": split.valid, "test": split.test}
    for rec in manifest:
        try:
            cs = tuple(checkins[i] for i in rec["checkin_indices"])
        except IndexError:
            raise CheckinFormatError(
                f"manifest trajectory {rec['trajectory_id']} points past the check-in file"
            ) from None
        parts[rec["split"]].append(Trajectory(rec["user_id"], rec["trajectory_id"], cs))
    split.poi_catalog = build_catalog(split.train)
    return split


def write_catalog(catalog: Mapping[str, PoiRecord], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for poi_id in sorted(catalog):
            p = catalog[poi_id]
            rec = {
                "poi_id": p.poi_id,
                "category_id": p.category_id,
                "category_name": p.category_name,
                "lat": p.latitude,
                "lng": p.longitude,
            }
            if p.address is not None:
                rec["address"] = p.address
            fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


def read_catalog(path: str | Path) -> dict[str, PoiRecord]:
    catalog = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                r = json.loads(line)
                catalog[r["poi_id"]] = PoiRecord(
                    r["poi_id"], r["category_id"], r["category_name"],
                    float(r["lat"]), float(r["lng"]), r.get("address"),
                )
    return catalog
