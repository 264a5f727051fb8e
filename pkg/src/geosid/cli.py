"""``geosid`` command line: one subcommand per pipeline stage.

Exit status: 0 success, 1 invalid input or config, 2 I/O or transport
failure, 64 usage error.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from collections.abc import Sequence
from pathlib import Path

import yaml

from . import evaluate as ev
from .config import ConfigError, PipelineConfig, load_config
from .geocode import GeocodeCache, RateLimiter, ReverseGeocoder, addresses_for, warm_cache
from .ingest import (
    dataset_stats,
    parse_checkin_file,
    preprocess,
    read_catalog,
    read_manifest,
    split_from_manifest,
    write_catalog,
    write_manifest,
)
from .prompt import (
    emit_alignment_pairs,
    emit_eval_prompts,
    emit_pretrain_examples,
    read_prompt_labels,
    write_alignment,
    write_prompts,
)
from .reward import group_advantages, score_rollouts
from .sid import SidRegistry, build_registry, load_embeddings, union_lcp

log = logging.getLogger("geosid")

EXIT_OK, EXIT_INVALID, EXIT_IO, EXIT_USAGE = 0, 1, 2, 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _write_json(obj, path: Path) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_jsonl(rows, path: Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")


def _read_jsonl_lenient(path: Path) -> tuple[list[dict], int]:
    """Parsed objects and the count of lines that were not JSON objects."""
    out, bad = [], 0
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except ValueError:
                bad += 1
                continue
            if isinstance(rec, dict):
                out.append(rec)
            else:
                bad += 1
    return out, bad


def _load_split(cfg: PipelineConfig):
    manifest = read_manifest(cfg.city_dir / "manifest.jsonl")
    checkins = parse_checkin_file(cfg.dataset_path, cfg.dataset_format, cfg.columns) if manifest else []
    return split_from_manifest(manifest, checkins)


# -- subcommands -------------------------------------------------------------


def cmd_ingest(cfg: PipelineConfig, args) -> str:
    s = cfg.ingest
    checkins = parse_checkin_file(cfg.dataset_path, cfg.dataset_format, cfg.columns)
    split = preprocess(checkins, s.min_count, s.gap_hours, s.ratios, s.fixpoint)
    stats = dataset_stats(split)
    cfg.city_dir.mkdir(parents=True, exist_ok=True)
    write_manifest(split, cfg.city_dir / "manifest.jsonl")
    write_catalog(split.poi_catalog, cfg.city_dir / "catalog.jsonl")
    _write_json(stats.as_dict(), cfg.city_dir / "stats.json")
    return (
        f"ingest {cfg.city}: {stats.users} users, {stats.pois} POIs, "
        f"{stats.all_trajectories} trajectories ({stats.train_trajectories}/"
        f"{stats.valid_trajectories}/{stats.test_trajectories}), {stats.checkins} check-ins"
    )


def cmd_geocode(cfg: PipelineConfig, args) -> str:
    catalog = read_catalog(cfg.city_dir / "catalog.jsonl")
    g = cfg.geocode
    geocoder = ReverseGeocoder(
        GeocodeCache(cfg.geocode_cache),
        endpoint=g.endpoint,
        path_template=g.path_template,
        address_field=g.address_field,
        limiter=RateLimiter(g.requests_per_second),
        timeout=g.timeout_s,
    )
    mode = "cache_only" if args.offline else "online"
    summary = warm_cache({p: r.point for p, r in catalog.items()}, geocoder, mode)
    return (
        f"geocode {cfg.city} ({mode}): {summary['hits']} cached, "
        f"{summary['fetched']} fetched, {summary['placeholders']} placeholders"
    )


def _union_prefix(args) -> str:
    raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    catalogs = []
    for city in sorted(raw.get("cities") or {}):
        other = load_config(args.config, city)
        catalogs.append(read_catalog(other.city_dir / "catalog.jsonl"))
    return union_lcp(catalogs)


def cmd_build_sid(cfg: PipelineConfig, args) -> str:
    if cfg.embeddings_path is None:
        raise ConfigError("build-sid needs an embeddings path in the config")
    catalog = read_catalog(cfg.city_dir / "catalog.jsonl")
    embeddings = load_embeddings(cfg.embeddings_path)
    lcp = _union_prefix(args) if cfg.sid.lcp_scope == "union" else None
    registry, model = build_registry(catalog, embeddings, cfg.sid, lcp=lcp)
    registry.save(cfg.city_dir / "registry.jsonl")
    model.save(cfg.city_dir / "rvq.json")
    max_u = max(sid.u for _, sid in registry.items())
    return (
        f"build-sid {cfg.city}: {len(registry)} SIDs, shared prefix {registry.lcp!r}, "
        f"max suffix {max_u}"
    )


def cmd_emit_prompts(cfg: PipelineConfig, args) -> str:
    split = _load_split(cfg)
    registry = SidRegistry.load(cfg.city_dir / "registry.jsonl")
    cache = GeocodeCache(cfg.geocode_cache if cfg.geocode_cache.exists() else None)
    points = {p: r.point for p, r in split.poi_catalog.items()}
    addresses = addresses_for(points, cache)
    ser = cfg.serialization
    counts = {}
    for part in ("valid", "test"):
        prompts = emit_eval_prompts(split, registry, ser, part, addresses)
        counts[part] = write_prompts(prompts, cfg.city_dir / f"prompts_{part}.jsonl")
    counts["pretrain"] = write_prompts(
        emit_pretrain_examples(split, registry, ser, addresses), cfg.city_dir / "pretrain.jsonl"
    )
    counts["alignment"] = write_alignment(
        emit_alignment_pairs(registry, split.poi_catalog, addresses), cfg.city_dir / "alignment.jsonl"
    )
    return (
        f"emit-prompts {cfg.city}: {counts['test']} test, {counts['valid']} valid, "
        f"{counts['pretrain']} pretrain, {counts['alignment']} alignment records"
    )


def cmd_score(cfg: PipelineConfig, args) -> str:
    labels = read_prompt_labels(args.prompts or cfg.city_dir / "prompts_test.jsonl")
    registry = SidRegistry.load(cfg.city_dir / "registry.jsonl")
    rollouts, bad = _read_jsonl_lenient(Path(args.rollouts))
    rows, skipped = score_rollouts(rollouts, labels, registry, cfg.reward)
    skipped += bad
    out = Path(args.out) if args.out else cfg.city_dir / "scores.jsonl"
    _write_jsonl(rows, out)
    if skipped:
        log.warning("skipped %d malformed rollout line(s)", skipped)
    return f"score {cfg.city}: {len(rows)} scored, {skipped} skipped"


def cmd_advantages(cfg: PipelineConfig, args) -> str:
    scores_path = Path(args.scores) if args.scores else cfg.city_dir / "scores.jsonl"
    records, skipped = _read_jsonl_lenient(scores_path)
    groups: dict[str, list[tuple[int, float]]] = {}
    for rec in records:
        try:
            member = (int(rec["completion_index"]), float(rec["total"]))
            prompt_id = str(rec["prompt_id"])
        except (KeyError, TypeError, ValueError):
            skipped += 1
            continue
        groups.setdefault(prompt_id, []).append(member)
    rows = []
    for prompt_id in sorted(groups):
        members = sorted(groups[prompt_id])
        advs = group_advantages([r for _, r in members], cfg.reward)
        for (index, reward), adv in zip(members, advs):
            rows.append(
                {"prompt_id": prompt_id, "completion_index": index, "reward": reward, "advantage": adv}
            )
    out = Path(args.out) if args.out else cfg.city_dir / "advantages.jsonl"
    _write_jsonl(rows, out)
    if skipped:
        log.warning("skipped %d malformed score line(s)", skipped)
    return f"advantages {cfg.city}: {len(groups)} groups, {len(rows)} completions"


def cmd_evaluate(cfg: PipelineConfig, args) -> str:
    labels = read_prompt_labels(args.prompts or cfg.city_dir / "prompts_test.jsonl")
    registry = SidRegistry.load(cfg.city_dir / "registry.jsonl")

    def resolve(surface: str):
        sid = registry.resolve(surface)
        return registry.point_of(sid) if sid is not None else None

    e = cfg.eval
    out_dir = Path(args.out_dir) if args.out_dir else cfg.city_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    reports, skipped = [], 0
    for path in args.predictions:
        records, bad = ev.read_predictions(path, labels)
        skipped += bad
        reports.append(ev.evaluate(records, resolve, e.hr_ks, e.ndcg_ks, e.percentiles, e.cdf_points))
    if len(reports) == 1:
        report = reports[0]
    else:
        for i, r in enumerate(reports, start=1):
            ev.write_report(r, out_dir / f"report_run{i}.json")
        report = ev.mean_reports(reports)
    ev.write_report(report, out_dir / "report.json")
    ev.write_report(report, out_dir / "report.csv", fmt="csv")
    if report.cdf:
        ev.write_cdf_csv(report.cdf, out_dir / "cdf.csv")
    if skipped:
        log.warning("skipped %d malformed prediction line(s)", skipped)
    hr1 = report.hr_at.get(1)
    hr_text = f"HR@1 {hr1:.4f}" if hr1 is not None else "no HR@1"
    return f"evaluate {cfg.city}: {report.n_queries} queries over {len(reports)} run(s), {hr_text}"


def cmd_stats(cfg: PipelineConfig, args) -> str:
    manifest_path = Path(args.manifest) if args.manifest else cfg.city_dir / "manifest.jsonl"
    manifest = read_manifest(manifest_path)
    checkins = parse_checkin_file(cfg.dataset_path, cfg.dataset_format, cfg.columns) if manifest else []
    stats = dataset_stats(split_from_manifest(manifest, checkins)).as_dict()
    width = max(len(k) for k in stats)
    for k, v in stats.items():
        print(f"{k:<{width}}  {v}")
    return f"stats {cfg.city}: {stats['all_trajectories']} trajectories, {stats['checkins']} check-ins"


COMMANDS = {
    "ingest": (cmd_ingest, "parse, filter, segment and split check-ins"),
    "geocode": (cmd_geocode, "reverse-geocode catalog POIs into the address cache"),
    "build-sid": (cmd_build_sid, "build the POI <-> SID registry"),
    "emit-prompts": (cmd_emit_prompts, "write eval, pretraining and alignment records"),
    "score": (cmd_score, "score a rollout file with the composite reward"),
    "advantages": (cmd_advantages, "group-normalize rewards from a score file"),
    "evaluate": (cmd_evaluate, "HR/NDCG and distance-error report for prediction files"),
    "stats": (cmd_stats, "print dataset statistics for a split manifest"),
}


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="pipeline YAML file")
    common.add_argument("--city", help="city block to use (default: the only one / default_city)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="geosid", description="Spatial semantic ID pipeline.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True
    for name, (_, help_text) in COMMANDS.items():
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text)
        if name == "geocode":
            p.add_argument("--offline", action="store_true", help="cache only, never touch the network")
        elif name == "score":
            p.add_argument("--rollouts", required=True)
            p.add_argument("--prompts", help="prompt file with gold labels (default: test prompts)")
            p.add_argument("--out")
        elif name == "advantages":
            p.add_argument("--scores", help="score file (default: the city's scores.jsonl)")
            p.add_argument("--out")
        elif name == "evaluate":
            p.add_argument("--predictions", nargs="+", required=True, help="one file per inference run")
            p.add_argument("--prompts")
            p.add_argument("--out-dir")
        elif name == "stats":
            p.add_argument("--manifest")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handler = COMMANDS[args.command][0]
    try:
        cfg = load_config(args.config, args.city)
        summary = handler(cfg, args)
    except (ValueError, KeyError) as exc:
        print(f"geosid {args.command}: invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"geosid {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(summary)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
