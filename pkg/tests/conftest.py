from __future__ import annotations

import calendar
from datetime import datetime
from pathlib import Path

import pytest

from geosid.ingest import CheckIn, Trajectory
from geosid.sid import SidConfig, SidRegistry, SpatialSemanticId

DATA = Path(__file__).parent / "data"

# results recorded by tests/test_acceptance.py, printed at the end of the run
ACCEPTANCE_RESULTS: dict[str, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(ACCEPTANCE_RESULTS, key=lambda n: int(n.split(".")[0])):
        ok, detail = ACCEPTANCE_RESULTS[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")


def utc(y, mo, d, h, mi, s=0) -> int:
    return calendar.timegm(datetime(y, mo, d, h, mi, s).timetuple())


def checkin(user="u1", poi="p1", ts=0, lat=40.7, lng=-74.0, cat="Office", tz=0, row=-1) -> CheckIn:
    return CheckIn(user, poi, f"c-{cat}", cat, lat, lng, ts, tz, row)


# Two POIs about 300 m apart in lower Manhattan, with the SIDs and
# addresses shown in the reference prompt.
PARKING = ("parking", "Parking", 40.7069, -74.0134, "85 Washington St")
OFFICE = ("office", "Office", 40.7048, -74.0117, "101 Broadway")
PARKING_SID = SpatialSemanticId((161, 17), (21, 8), 0)
OFFICE_SID = SpatialSemanticId((161, 115), (12, 7), 0)

# (poi, local month, day, hour, minute)
GOLDEN_HISTORY = [
    [(PARKING, 4, 11, 4, 59), (OFFICE, 4, 11, 14, 30), (PARKING, 4, 12, 4, 50),
     (OFFICE, 4, 12, 5, 44), (PARKING, 4, 13, 4, 56)],
    [(PARKING, 4, 19, 4, 58), (OFFICE, 4, 19, 5, 50), (PARKING, 4, 20, 4, 55),
     (OFFICE, 4, 20, 6, 7)],
]
GOLDEN_CONTEXT = [(PARKING, 4, 23, 4, 55), (OFFICE, 4, 23, 5, 27), (PARKING, 4, 24, 4, 45)]
GOLDEN_TARGET = (OFFICE, 4, 24, 4, 58)
GOLDEN_TZ = -240


def _golden_checkin(spec, row) -> CheckIn:
    (poi_id, cat, lat, lng, _), mo, d, h, mi = spec
    local = utc(2012, mo, d, h, mi)
    return CheckIn("user", poi_id, f"c-{cat}", cat, lat, lng, local - GOLDEN_TZ * 60, GOLDEN_TZ, row)


@pytest.fixture
def golden_inputs():
    row = 0
    history = []
    for k, traj in enumerate(GOLDEN_HISTORY):
        cs = []
        for spec in traj:
            cs.append(_golden_checkin(spec, row))
            row += 1
        history.append(Trajectory("user", f"user_{k}", tuple(cs)))
    context = []
    for spec in GOLDEN_CONTEXT:
        context.append(_golden_checkin(spec, row))
        row += 1
    target = _golden_checkin(GOLDEN_TARGET, row)
    registry = SidRegistry(
        {PARKING[0]: PARKING_SID, OFFICE[0]: OFFICE_SID},
        SidConfig(),
        points={PARKING[0]: PARKING[2:4], OFFICE[0]: OFFICE[2:4]},
    )
    addresses = {PARKING[0]: PARKING[4], OFFICE[0]: OFFICE[4]}
    return history, context, target, registry, addresses


@pytest.fixture
def golden_prompt_body() -> str:
    return (DATA / "golden_prompt_body.txt").read_text(encoding="utf-8")


@pytest.fixture
def golden_trace() -> str:
    return (DATA / "golden_trace.txt").read_text(encoding="utf-8")


def write_synthetic_config(tmp_path: Path, **extra_yaml: str) -> Path:
    cfg = tmp_path / "config.yaml"
    text = (
        "cities:\n  synth:\n"
        f"    dataset: {{path: {DATA / 'synthetic_checkins.tsv'}, format: foursquare_tsv}}\n"
        f"    embeddings: {DATA / 'synthetic_embeddings.tsv'}\n"
        f"output_dir: {tmp_path / 'out'}\n"
    )
    for key, block in extra_yaml.items():
        text += f"{key}:\n{block}"
    cfg.write_text(text, encoding="utf-8")
    return cfg
