import random
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import DATA
from geosid.geo import cell_id, haversine_km
from geosid.ingest import PoiRecord
from geosid.sid import (
    SidBuildError,
    SidConfig,
    SidParseError,
    SidRegistry,
    SpatialSemanticId,
    SuffixOverflowWarning,
    TokenTrie,
    assign_suffixes,
    build_registry,
    find_sid_runs,
    geospatial_prefix,
    load_embeddings,
    parse_sid,
    render_sid,
    shared_hex_prefix,
    union_lcp,
    valid_next_tokens,
)

REFERENCE_SURFACES = ["<m_161><n_17><a_21><b_8><c_0>", "<m_161><n_115><a_12><b_7><c_0>"]


# -- surface grammar ---------------------------------------------------------


def test_render_reference_surface():
    sid = SpatialSemanticId((161, 17), (21, 8), 0)
    assert render_sid(sid) == "<m_161><n_17><a_21><b_8><c_0>"


@pytest.mark.parametrize("surface", REFERENCE_SURFACES)
def test_reference_surfaces_round_trip(surface):
    assert parse_sid(surface).render() == surface


def test_parse_ignores_surrounding_text():
    sid = parse_sid("answer: <m_1><n_2><a_3><b_4><c_5> done <m_9><n_9><a_9><b_9><c_9>")
    assert sid == SpatialSemanticId((1, 2), (3, 4), 5)


@pytest.mark.parametrize(
    "text",
    [
        "<m_300><n_17><a_21><b_8><c_0>",
        "<m_161><n_17><a_21><b_8>",
        "no tokens here",
        "<m_161><n_17><a_21><c_0>",
        "<m_-1><n_17><a_21><b_8><c_0>",
    ],
)
def test_parse_errors(text):
    with pytest.raises(SidParseError):
        parse_sid(text)


def test_parse_semantic_range_checked_against_codebook():
    with pytest.raises(SidParseError):
        parse_sid("<m_1><n_2><a_28><b_0><c_0>", codebook_size=28)
    assert parse_sid("<m_1><n_2><a_27><b_0><c_0>", codebook_size=28).s == (27, 0)


sids = st.builds(
    SpatialSemanticId,
    st.lists(st.integers(0, 255), min_size=1, max_size=6).map(tuple),
    st.lists(st.integers(0, 10_000), min_size=1, max_size=7).map(tuple),
    st.integers(0, 10_000),
)


@given(sids)
def test_parse_render_inverse(sid):
    b, l = sid.shape
    assert parse_sid(sid.render(), b, l) == sid


def test_other_shapes_use_distinct_letters():
    sid = SpatialSemanticId((1, 2, 3), (4,), 0)
    assert sid.render() == "<m_1><n_2><o_3><a_4><c_0>"
    assert find_sid_runs("x " + sid.render() * 2, 3, 1) == [sid.render()] * 2


def test_sid_value_validation():
    with pytest.raises(ValueError):
        SpatialSemanticId((256, 0), (0, 0), 0)
    with pytest.raises(ValueError):
        SpatialSemanticId((1, 2), (0, 0), -1)


# -- prefixes and suffixes ---------------------------------------------------


def test_shared_prefix():
    assert shared_hex_prefix(["89c2584f00000001", "89c25f1300000001"]) == "89c25"
    assert shared_hex_prefix(["89c2584f00000001"] * 3) == "89c2584f00000001"
    with pytest.raises(ValueError):
        shared_hex_prefix([])


def test_geospatial_prefix_pairs_hex_digits():
    assert geospatial_prefix("89c2584f12345678", 5, 2) == [0x84, 0xF1]
    assert geospatial_prefix("89c2584f12345678", 5, 2) == [132, 241]


def test_geospatial_prefix_needs_enough_digits():
    with pytest.raises(SidBuildError, match="fewer geo tokens"):
        geospatial_prefix("89c2584f12345678", 13, 2)


def test_suffixes_sequential_by_poi_id():
    classes = {"b": ((1, 2), (3, 4)), "a": ((1, 2), (3, 4)), "c": ((9, 9), (0, 0))}
    assert assign_suffixes(classes) == {"a": 0, "b": 1, "c": 0}


def test_suffix_overflow_warns_but_assigns():
    classes = {f"p{k}": ((0, 0), (0, 0)) for k in range(9)}
    with pytest.warns(SuffixOverflowWarning):
        out = assign_suffixes(classes)
    assert sorted(out.values()) == list(range(9))


def test_eight_members_no_warning():
    classes = {f"p{k}": ((0, 0), (0, 0)) for k in range(8)}
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assign_suffixes(classes)


# -- trie --------------------------------------------------------------------


def test_trie_paths_and_queries():
    trie = TokenTrie([("a", "b", "c"), ("a", "d", "e"), ("a", "b", "c")])
    assert len(trie) == 2
    assert set(trie) == {("a", "b", "c"), ("a", "d", "e")}
    assert trie.next_tokens(()) == {"a"}
    assert trie.next_tokens(("a",)) == {"b", "d"}
    assert trie.next_tokens(("a", "b", "c")) == set()
    assert trie.next_tokens(("z",)) == set()
    assert ("a", "b", "c") in trie and ("a", "b") not in trie


# -- registry ----------------------------------------------------------------


def poi(poi_id, cat, lat, lng):
    return PoiRecord(poi_id, f"id-{cat}", cat, lat, lng)


def emb(*names, dim=4, seed=0):
    rng = np.random.default_rng(seed)
    return {n: rng.normal(size=dim) for n in names}


def test_single_poi_registry():
    reg, _ = build_registry({"p": poi("p", "Cafe", 40.7, -74.0)}, emb("Cafe"))
    sid = reg.sid_of("p")
    assert sid.s == (0, 0) and sid.u == 0
    # the prefix is capped so the last four hex digits remain for g
    hex_id = cell_id(40.7, -74.0).to_hex()
    assert reg.lcp == hex_id[:12]
    assert list(sid.g) == [int(hex_id[12:14], 16), int(hex_id[14:16], 16)]
    assert valid_next_tokens(reg, []) == {sid.tokens()[0]}
    assert reg.valid_next_tokens(sid.tokens()) == set()


def test_explicit_prefix_too_long():
    hex_id = cell_id(40.7, -74.0).to_hex()
    with pytest.raises(SidBuildError, match="shorter prefix"):
        build_registry({"p": poi("p", "Cafe", 40.7, -74.0)}, emb("Cafe"), lcp=hex_id[:13])


def test_missing_embedding_row():
    with pytest.raises(SidBuildError, match="no embedding"):
        build_registry({"p": poi("p", "Cafe", 40.7, -74.0), "q": poi("q", "Bar", 40.8, -74.0)},
                       emb("Cafe"))


def test_trie_branches_on_semantic_tokens():
    # three POIs in one spot, so g is shared and only s (then u) differ
    catalog = {
        "p1": poi("p1", "Cafe", 40.7000, -74.0000),
        "p2": poi("p2", "Bar", 40.7000, -74.0000),
        "p3": poi("p3", "Gym", 40.7000, -74.0000),
        "far": poi("far", "Cafe", 40.9, -73.7),
    }
    reg, _ = build_registry(catalog, emb("Cafe", "Bar", "Gym"))
    g_tokens = reg.sid_of("p1").tokens()[:2]
    assert all(reg.sid_of(p).tokens()[:2] == g_tokens for p in ("p1", "p2", "p3"))
    expected = {reg.sid_of(p).tokens()[2] for p in ("p1", "p2", "p3")}
    assert reg.valid_next_tokens(g_tokens) == expected
    assert len(expected) == 3


def random_catalog(n, seed, n_cats=12):
    rng = random.Random(seed)
    cats = [f"cat{k}" for k in range(n_cats)]
    catalog = {}
    for k in range(n):
        # a few exact duplicates of location and category force suffixes
        if k and rng.random() < 0.1:
            prev = catalog[f"p{rng.randrange(k):04d}"]
            catalog[f"p{k:04d}"] = poi(f"p{k:04d}", prev.category_name, prev.latitude, prev.longitude)
        else:
            catalog[f"p{k:04d}"] = poi(
                f"p{k:04d}", rng.choice(cats), 40.6 + rng.random() * 0.3, -74.1 + rng.random() * 0.3
            )
    return catalog, emb(*cats, dim=8, seed=seed)


@pytest.mark.parametrize("seed", range(5))
def test_registry_bijective_and_trie_complete(seed):
    catalog, embeddings = random_catalog(300, seed)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SuffixOverflowWarning)
        reg, _ = build_registry(catalog, embeddings)
    sids = [reg.sid_of(p) for p in catalog]
    assert len(set(sids)) == len(catalog) == len(reg)
    assert all(reg.poi_of(s) == p for p, s in zip(catalog, sids))
    assert set(reg.trie) == {tuple(s.tokens()) for s in sids}
    for s in sids:
        assert all(0 <= x < 28 for x in s.s)
        assert reg.point_of(s) == catalog[reg.poi_of(s)].point


def test_registry_file_byte_identical_and_round_trips(tmp_path):
    catalog, embeddings = random_catalog(150, 7)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SuffixOverflowWarning)
        a, _ = build_registry(catalog, embeddings, SidConfig(rng_seed=3))
        b, _ = build_registry(dict(reversed(list(catalog.items()))), embeddings, SidConfig(rng_seed=3))
    a.save(tmp_path / "a.jsonl")
    b.save(tmp_path / "b.jsonl")
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    loaded = SidRegistry.load(tmp_path / "a.jsonl")
    loaded.save(tmp_path / "c.jsonl")
    assert (tmp_path / "c.jsonl").read_bytes() == (tmp_path / "a.jsonl").read_bytes()
    assert dict(loaded.items()) == dict(a.items())


def test_registry_rejects_duplicate_sid():
    sid = SpatialSemanticId((1, 2), (3, 4), 0)
    with pytest.raises(SidBuildError):
        SidRegistry({"a": sid, "b": sid})


def test_union_scope_needs_prefix():
    catalog, embeddings = random_catalog(20, 1)
    with pytest.raises(SidBuildError):
        build_registry(catalog, embeddings, SidConfig(lcp_scope="union"))


def test_union_prefix_across_cities():
    nyc, e1 = random_catalog(30, 1)
    tokyo = {"t1": poi("t1", "cat0", 35.68, 139.65)}
    lcp = union_lcp([nyc, tokyo])
    assert len(lcp) < len(shared_hex_prefix([cell_id(*r.point).to_hex() for r in nyc.values()]))
    reg, _ = build_registry(tokyo, e1, SidConfig(lcp_scope="union"), lcp=lcp)
    assert reg.lcp == lcp


def test_prefix_locality():
    rng = random.Random(99)
    near_same = far_same = 0
    base = [(40.5 + rng.random(), -74.5 + rng.random()) for _ in range(400)]
    lcp = 3  # keep the comparison independent of any one catalog's prefix
    for lat, lng in base:
        lat2, lng2 = lat + rng.uniform(-0.0005, 0.0005), lng + rng.uniform(-0.0005, 0.0005)
        assert haversine_km((lat, lng), (lat2, lng2)) < 0.1
        h1, h2 = cell_id(lat, lng).to_hex(), cell_id(lat2, lng2).to_hex()
        near_same += geospatial_prefix(h1, lcp, 2) == geospatial_prefix(h2, lcp, 2)
        lat3, lng3 = lat + rng.choice([-1, 1]) * rng.uniform(0.5, 2), lng + rng.uniform(-2, 2)
        assert haversine_km((lat, lng), (lat3, lng3)) > 50
        h3 = cell_id(lat3, lng3).to_hex()
        far_same += geospatial_prefix(h1, lcp, 2) == geospatial_prefix(h3, lcp, 2)
    assert near_same > far_same


def test_load_embeddings(tmp_path):
    path = tmp_path / "e.tsv"
    path.write_text("Gym / Fitness Center\t1.0,2.0\nBar\t-1,0.5\n")
    out = load_embeddings(path)
    assert set(out) == {"Gym / Fitness Center", "Bar"}
    assert out["Bar"].tolist() == [-1.0, 0.5]
    path.write_text("A\t1,2\nB\t1,2,3\n")
    with pytest.raises(SidBuildError):
        load_embeddings(path)


def test_synthetic_fixture_registry_bijective():
    from geosid.ingest import build_catalog, parse_checkin_file, preprocess

    split = preprocess(parse_checkin_file(DATA / "synthetic_checkins.tsv"))
    catalog = build_catalog(split.train)
    reg, _ = build_registry(catalog, load_embeddings(DATA / "synthetic_embeddings.tsv"))
    assert len({reg.sid_of(p) for p in catalog}) == len(catalog)
