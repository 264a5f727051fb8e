"""HR@K, NDCG@K and geographic error distributions over ranked predictions."""
from __future__ import annotations

import csv
import json
import math
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .geo import GeoPoint, haversine_km

DEFAULT_HR_KS = (1, 5, 10, 20)
DEFAULT_NDCG_KS = (5, 10, 20)
DEFAULT_PERCENTILES = (50, 75, 90)
CSV_HEADER = ("metric", "key", "value")


@dataclass(frozen=True)
class PredictionRecord:
    prompt_id: str
    ranked_predictions: tuple[str, ...]
    gold_sid: str
    gold_point: GeoPoint

    def __post_init__(self) -> None:
        ranked = tuple(self.ranked_predictions)
        object.__setattr__(self, "ranked_predictions", ranked)
        if not ranked:
            raise ValueError(f"{self.prompt_id}: empty ranked list")
        if len(set(ranked)) != len(ranked):
            raise ValueError(f"{self.prompt_id}: ranked list has duplicates")

    @property
    def rank(self) -> int | None:
        """1-based rank of the gold SID, or None if absent."""
        try:
            return self.ranked_predictions.index(self.gold_sid) + 1
        except ValueError:
            return None


@dataclass
class EvalReport:
    n_queries: int = 0
    hr_at: dict[int, float] = field(default_factory=dict)
    ndcg_at: dict[int, float] = field(default_factory=dict)
    error_percentiles: dict[int, float] = field(default_factory=dict)
    cdf: list[tuple[float, float]] = field(default_factory=list)
    n_unresolved: int = 0

    def to_dict(self) -> dict:
        return {
            "n_queries": self.n_queries,
            "n_unresolved": self.n_unresolved,
            "hr_at": {str(k): v for k, v in sorted(self.hr_at.items())},
            "ndcg_at": {str(k): v for k, v in sorted(self.ndcg_at.items())},
            "error_percentiles_km": {
                str(k): v for k, v in sorted(self.error_percentiles.items())
            },
            "cdf": [[d, f] for d, f in self.cdf],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EvalReport":
        return cls(
            n_queries=int(payload["n_queries"]),
            hr_at={int(k): float(v) for k, v in payload.get("hr_at", {}).items()},
            ndcg_at={int(k): float(v) for k, v in payload.get("ndcg_at", {}).items()},
            error_percentiles={
                int(k): float(v) for k, v in payload.get("error_percentiles_km", {}).items()
            },
            cdf=[(float(d), float(f)) for d, f in payload.get("cdf", [])],
            n_unresolved=int(payload.get("n_unresolved", 0)),
        )


def _check_k(k: int) -> None:
    if k < 1:
        raise ValueError(f"K must be >= 1, got {k}")


def hit_rate_at_k(records: Sequence[PredictionRecord], k: int) -> float:
    _check_k(k)
    if not records:
        return 0.0
    hits = sum(1 for r in records if r.rank is not None and r.rank <= k)
    return hits / len(records)


def ndcg_at_k(records: Sequence[PredictionRecord], k: int) -> float:
    """Single relevant item per query, so the ideal DCG is 1."""
    _check_k(k)
    if not records:
        return 0.0
    total = 0.0
    for r in records:
        rank = r.rank
        if rank is not None and rank <= k:
            total += 1.0 / math.log2(1 + rank)
    return total / len(records)


def nearest_rank_percentile(sorted_values: Sequence[float], pct: float) -> float:
    if not sorted_values:
        raise ValueError("no values")
    if not 0 < pct <= 100:
        raise ValueError(f"percentile must be in (0, 100], got {pct}")
    idx = max(1, math.ceil(pct / 100 * len(sorted_values)))
    return sorted_values[idx - 1]


def cdf_samples(errors: Sequence[float], points: int = 200) -> list[tuple[float, float]]:
    """Fraction of errors <= d at ``points`` evenly spaced d from 0 to the max."""
    if points < 2:
        raise ValueError("need at least two CDF points")
    ordered = sorted(errors)
    n = len(ordered)
    top = ordered[-1]
    out = []
    j = 0
    for i in range(points):
        d = top * i / (points - 1)
        while j < n and ordered[j] <= d:
            j += 1
        out.append((d, j / n))
    # the last sample must count every error despite rounding in top * i / (points - 1)
    out[-1] = (top, 1.0)
    return out


@dataclass(frozen=True)
class ErrorDistribution:
    percentiles: dict[int, float]
    cdf: list[tuple[float, float]]
    errors_km: list[float]
    n_unresolved: int


def error_distribution(
    records: Sequence[PredictionRecord],
    resolve: Callable[[str], GeoPoint | None],
    percentiles: Iterable[int] = DEFAULT_PERCENTILES,
    cdf_points: int = 200,
) -> ErrorDistribution:
    """Haversine error of each top-1 prediction whose coordinates resolve."""
    errors, unresolved = [], 0
    for r in records:
        point = resolve(r.ranked_predictions[0])
        if point is None:
            unresolved += 1
            continue
        errors.append(haversine_km(point, r.gold_point))
    if not errors:
        raise ValueError("no prediction resolved to coordinates")
    errors.sort()
    pcts = {int(p): nearest_rank_percentile(errors, p) for p in percentiles}
    return ErrorDistribution(pcts, cdf_samples(errors, cdf_points), errors, unresolved)


def evaluate(
    records: Sequence[PredictionRecord],
    resolve: Callable[[str], GeoPoint | None] | None = None,
    hr_ks: Iterable[int] = DEFAULT_HR_KS,
    ndcg_ks: Iterable[int] = DEFAULT_NDCG_KS,
    percentiles: Iterable[int] = DEFAULT_PERCENTILES,
    cdf_points: int = 200,
) -> EvalReport:
    report = EvalReport(n_queries=len(records))
    if not records:
        return report
    report.hr_at = {k: hit_rate_at_k(records, k) for k in hr_ks}
    report.ndcg_at = {k: ndcg_at_k(records, k) for k in ndcg_ks}
    if resolve is not None:
        try:
            dist = error_distribution(records, resolve, percentiles, cdf_points)
        except ValueError:
            report.n_unresolved = len(records)
        else:
            report.error_percentiles = dist.percentiles
            report.cdf = dist.cdf
            report.n_unresolved = dist.n_unresolved
    return report


def mean_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Average metric values over repeated inference runs (CDFs are dropped)."""
    if not reports:
        raise ValueError("no reports")

    def avg(attr: str) -> dict[int, float]:
        keys = set.intersection(*(set(getattr(r, attr)) for r in reports))
        return {k: math.fsum(getattr(r, attr)[k] for r in reports) / len(reports) for k in sorted(keys)}

    return EvalReport(
        n_queries=reports[0].n_queries,
        hr_at=avg("hr_at"),
        ndcg_at=avg("ndcg_at"),
        error_percentiles=avg("error_percentiles"),
        n_unresolved=round(math.fsum(r.n_unresolved for r in reports) / len(reports)),
    )


# -- files -------------------------------------------------------------------


def write_report(report: EvalReport, path: str | Path, fmt: str = "json") -> None:
    if fmt == "json":
        Path(path).write_text(json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
    elif fmt == "csv":
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            w.writerow(("n_queries", "", report.n_queries))
            w.writerow(("n_unresolved", "", report.n_unresolved))
            for k, v in sorted(report.hr_at.items()):
                w.writerow(("hr", k, repr(v)))
            for k, v in sorted(report.ndcg_at.items()):
                w.writerow(("ndcg", k, repr(v)))
            for k, v in sorted(report.error_percentiles.items()):
                w.writerow(("error_percentile_km", k, repr(v)))
            for d, f in report.cdf:
                w.writerow(("cdf", repr(d), repr(f)))
    else:
        raise ValueError(f"unknown report format {fmt!r}")


def read_report(path: str | Path, fmt: str | None = None) -> EvalReport:
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "json")
    if fmt == "json":
        return EvalReport.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
    report = EvalReport()
    with open(path, newline="", encoding="utf-8") as fh:
        rows = csv.reader(fh)
        if tuple(next(rows)) != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        for metric, key, value in rows:
            if metric == "n_queries":
                report.n_queries = int(value)
            elif metric == "n_unresolved":
                report.n_unresolved = int(value)
            elif metric == "hr":
                report.hr_at[int(key)] = float(value)
            elif metric == "ndcg":
                report.ndcg_at[int(key)] = float(value)
            elif metric == "error_percentile_km":
                report.error_percentiles[int(key)] = float(value)
            elif metric == "cdf":
                report.cdf.append((float(key), float(value)))
    return report


def write_cdf_csv(cdf: Sequence[tuple[float, float]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("distance_km", "cumulative_fraction"))
        for d, f in cdf:
            w.writerow((repr(d), repr(f)))


def read_predictions(path: str | Path, labels: Mapping[str, Mapping]) -> tuple[list[PredictionRecord], int]:
    """Join ``{prompt_id, ranked}`` lines with prompt labels; returns (records, skipped)."""
    out, skipped = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                gold = labels[rec["prompt_id"]]
                out.append(
                    PredictionRecord(
                        rec["prompt_id"],
                        tuple(rec["ranked"]),
                        gold["target_sid_surface"],
                        GeoPoint(float(gold["gt_lat"]), float(gold["gt_lng"])),
                    )
                )
            except (ValueError, KeyError, TypeError):
                skipped += 1
    out.sort(key=lambda r: r.prompt_id)
    return out, skipped
