"""Write the small synthetic check-in corpus used by the end-to-end tests.

Outputs (in tests/data/):
  synthetic_checkins.tsv    Foursquare-style TSV, 200 well-formed lines + 1 malformed
  synthetic_embeddings.tsv  category name -> 8-dim vector
  synthetic_rollouts.jsonl  4 completions per test prompt, plus one broken line
  synthetic_predictions.jsonl  ranked SID lists per test prompt

The rollout and prediction files depend on prompt ids and SIDs, so the
script runs ingest/build-sid/emit-prompts in a scratch directory first.
"""
from __future__ import annotations

import argparse
import json
import random
import tempfile
from datetime import datetime, timedelta, timezone
from pathlib import Path

from geosid.cli import main as cli_main

SEED = 7
N_CHECKINS = 200
TZ_OFFSET = -240

CATEGORIES = [
    ("4bf58dd8d48988d124941735", "Office"),
    ("4c38df4de52ce0d596b336e1", "Parking"),
    ("4bf58dd8d48988d1e0931735", "Coffee Shop"),
    ("4bf58dd8d48988d1fd931735", "Subway"),
    ("4bf58dd8d48988d175941735", "Gym / Fitness Center"),
    ("4bf58dd8d48988d116941735", "Bar"),
    ("4bf58dd8d48988d163941735", "Park"),
    ("4bf58dd8d48988d146941735", "Deli / Bodega"),
]
DAYS = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
MONTHS = ("Jan", "Feb", "Mar", "Apr", "May", "Jun", "Jul", "Aug", "Sep", "Oct", "Nov", "Dec")


def foursquare_time(ts: datetime) -> str:
    return (
        f"{DAYS[ts.weekday()]} {MONTHS[ts.month - 1]} {ts.day:02d} "
        f"{ts.hour:02d}:{ts.minute:02d}:{ts.second:02d} +0000 {ts.year}"
    )


def make_pois(rng: random.Random) -> list[tuple[str, int, float, float]]:
    pois = []
    for k in range(15):
        cat = k % len(CATEGORIES)
        lat = round(40.70 + rng.random() * 0.05, 6)
        lng = round(-74.02 + rng.random() * 0.05, 6)
        pois.append((f"v{k:03d}", cat, lat, lng))
    return pois


def make_checkins(rng: random.Random) -> list[tuple]:
    pois = make_pois(rng)
    users = [f"u{k}" for k in range(1, 7)]
    # each user favours a handful of POIs
    favourites = {u: rng.sample(range(len(pois)), 6) for u in users}
    rows = []
    start = datetime(2012, 4, 3, 12, 0, tzinfo=timezone.utc)
    per_user = N_CHECKINS // len(users)
    extra = N_CHECKINS - per_user * len(users)
    for i, user in enumerate(users):
        n = per_user + (1 if i < extra else 0)
        t = start + timedelta(hours=rng.randint(0, 12))
        for j in range(n):
            if j and rng.random() < 0.3:
                t += timedelta(hours=rng.choice([26, 30, 49, 72]))
            else:
                t += timedelta(minutes=rng.randint(20, 300))
            p = pois[rng.choice(favourites[user]) if rng.random() < 0.85 else rng.randrange(len(pois))]
            rows.append((t, user, p))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def write_checkins(path: Path, rows) -> None:
    lines = []
    for t, user, (poi_id, cat, lat, lng) in rows:
        cat_id, cat_name = CATEGORIES[cat]
        lines.append(
            "\t".join([user, poi_id, cat_id, cat_name, f"{lat:.6f}", f"{lng:.6f}", str(TZ_OFFSET), foursquare_time(t)])
        )
    lines.insert(57, "u9\tv999\tbadcat\tBroken\t91.5\t-74.0\t-240\tTue Apr 03 18:00:09 +0000 2012")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_embeddings(path: Path, rng: random.Random) -> None:
    out = []
    for _, name in CATEGORIES:
        vec = [round(rng.gauss(0.0, 1.0), 6) for _ in range(8)]
        out.append(name + "\t" + ",".join(repr(v) for v in vec))
    path.write_text("\n".join(out) + "\n", encoding="utf-8")


def trace(surface: str) -> str:
    return (
        "<think>\nStep 1: The user keeps a regular morning routine.\n"
        "Step 2: Candidates are the places visited right after the current one.\n"
        "Step 3: \n1. The nearest candidate fits the time of day.\n</think>\n" + surface
    )


def write_canned(data: Path, rng: random.Random) -> None:
    with tempfile.TemporaryDirectory() as tmp:
        cfg = Path(tmp) / "cfg.yaml"
        cfg.write_text(
            "cities:\n  synth:\n"
            f"    dataset: {{path: {data / 'synthetic_checkins.tsv'}, format: foursquare_tsv}}\n"
            f"    embeddings: {data / 'synthetic_embeddings.tsv'}\n"
            f"output_dir: {tmp}/out\n",
            encoding="utf-8",
        )
        for cmd in ("ingest", "build-sid", "emit-prompts"):
            assert cli_main([cmd, "--config", str(cfg)]) == 0, cmd
        out = Path(tmp) / "out" / "synth"
        prompts = [json.loads(x) for x in (out / "prompts_test.jsonl").read_text().splitlines()]
        surfaces = sorted(
            json.loads(x)["surface"] for x in (out / "registry.jsonl").read_text().splitlines()[1:]
        )

    rollouts, preds = [], []
    for p in prompts:
        gold = p["target_sid_surface"]
        others = [s for s in surfaces if s != gold]
        wrong = rng.choice(others)
        completions = [trace(gold), gold, trace(wrong), "I am not sure where they will go."]
        for k, text in enumerate(completions):
            rollouts.append({"prompt_id": p["prompt_id"], "completion_index": k, "completion_text": text})
        ranked = rng.sample(others, 4)
        if rng.random() < 0.7:
            ranked.insert(rng.randrange(5), gold)
        preds.append({"prompt_id": p["prompt_id"], "ranked": ranked})
    lines = [json.dumps(r) for r in rollouts]
    lines.insert(1, '{"prompt_id": "truncated", "completion_index": ')
    (data / "synthetic_rollouts.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (data / "synthetic_predictions.jsonl").write_text(
        "\n".join(json.dumps(r) for r in preds) + "\n", encoding="utf-8"
    )


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default=str(Path(__file__).resolve().parent.parent / "tests" / "data"))
    args = ap.parse_args()
    data = Path(args.out)
    data.mkdir(parents=True, exist_ok=True)
    rng = random.Random(SEED)
    write_checkins(data / "synthetic_checkins.tsv", make_checkins(rng))
    write_embeddings(data / "synthetic_embeddings.tsv", rng)
    write_canned(data, rng)
    print(f"wrote synthetic fixture to {data}")


if __name__ == "__main__":
    main()
