"""Build and persist the POI <-> SID bijection."""
from __future__ import annotations

import json
import os
import warnings
from collections import defaultdict
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..geo import GeoPoint, cell_id
from ..ingest import PoiRecord
from .codes import SidParseError, SpatialSemanticId, parse_sid
from .rvq import RvqModel, encode_semantic, train_rvq
from .trie import TokenTrie

HEX_DIGITS = 16
LCP_SCOPES = ("per_dataset", "union")
EMBEDDING_UNITS = ("category", "poi")


class SidBuildError(ValueError):
    pass


class SuffixOverflowWarning(UserWarning):
    pass


@dataclass(frozen=True)
class SidConfig:
    geo_token_count: int = 2
    rvq_levels: int = 2
    rvq_codebook_size: int = 28
    lcp_scope: str = "per_dataset"
    rng_seed: int = 0
    embedding_unit: str = "category"
    max_iter: int = 100
    tol: float = 1e-6
    suffix_warn_threshold: int = 8

    def __post_init__(self) -> None:
        if self.geo_token_count < 1 or self.rvq_levels < 1 or self.rvq_codebook_size < 1:
            raise ValueError("geo_token_count, rvq_levels and rvq_codebook_size must be >= 1")
        if self.lcp_scope not in LCP_SCOPES:
            raise ValueError(f"lcp_scope must be one of {LCP_SCOPES}")
        if self.embedding_unit not in EMBEDDING_UNITS:
            raise ValueError(f"embedding_unit must be one of {EMBEDDING_UNITS}")


def shared_hex_prefix(hex_ids: Sequence[str]) -> str:
    if not hex_ids:
        raise ValueError("need at least one hex id")
    return os.path.commonprefix(list(hex_ids))


def geospatial_prefix(hex_id: str, lcp_len: int, geo_tokens: int = 2) -> list[int]:
    """The 2*B hex digits right after the shared prefix, read as B bytes."""
    end = lcp_len + 2 * geo_tokens
    if end > len(hex_id):
        raise SidBuildError(
            f"only {len(hex_id) - lcp_len} hex digits remain after a {lcp_len}-digit shared "
            f"prefix but {2 * geo_tokens} are needed; use fewer geo tokens or a shorter prefix"
        )
    return [int(hex_id[k : k + 2], 16) for k in range(lcp_len, end, 2)]


def assign_suffixes(
    classes: Mapping[str, tuple], warn_threshold: int = 8
) -> dict[str, int]:
    """Number POIs 0, 1, 2, ... within each (g, s) class, in poi_id order."""
    groups: dict[tuple, list[str]] = defaultdict(list)
    for poi_id, key in classes.items():
        groups[key].append(poi_id)
    out: dict[str, int] = {}
    crowded = 0
    for key in sorted(groups):
        members = sorted(groups[key])
        if len(members) > warn_threshold:
            crowded += 1
        for u, poi_id in enumerate(members):
            out[poi_id] = u
    if crowded:
        warnings.warn(
            f"{crowded} (g, s) class(es) hold more than {warn_threshold} POIs",
            SuffixOverflowWarning,
            stacklevel=2,
        )
    return out


def load_embeddings(path: str | Path) -> dict[str, np.ndarray]:
    """Read ``name<TAB>f1,f2,...`` lines."""
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            name, sep, values = line.rpartition("\t")
            if not sep:
                raise SidBuildError(f"{path}:{lineno}: expected name<TAB>values")
            vec = np.array([float(x) for x in values.split(",")], dtype=np.float64)
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise SidBuildError(f"{path}:{lineno}: dimension {vec.shape[0]} != {dim}")
            out[name] = vec
    return out


class SidRegistry:
    """Immutable POI <-> SID bijection with a prefix trie over surface tokens."""

    def __init__(
        self,
        entries: Mapping[str, SpatialSemanticId],
        config: SidConfig = SidConfig(),
        lcp: str = "",
        hex_ids: Mapping[str, str] | None = None,
        points: Mapping[str, tuple[float, float]] | None = None,
    ) -> None:
        self.config = config
        self.lcp = lcp
        self._by_poi = dict(sorted(entries.items()))
        self._by_sid: dict[SpatialSemanticId, str] = {}
        shape = (config.geo_token_count, config.rvq_levels)
        for poi_id, sid in self._by_poi.items():
            if sid.shape != shape:
                raise SidBuildError(f"{poi_id}: SID shape {sid.shape} != configured {shape}")
            other = self._by_sid.setdefault(sid, poi_id)
            if other != poi_id:
                raise SidBuildError(f"SID {sid} assigned to both {other} and {poi_id}")
        self.hex_ids = dict(hex_ids or {})
        self.points = {k: GeoPoint(*v) for k, v in (points or {}).items()}
        self.trie = TokenTrie(sid.tokens() for sid in self._by_poi.values())

    def __len__(self) -> int:
        return len(self._by_poi)

    def __iter__(self) -> Iterator[str]:
        return iter(self._by_poi)

    def __contains__(self, sid: object) -> bool:
        return sid in self._by_sid

    def items(self):
        return self._by_poi.items()

    def sid_of(self, poi_id: str) -> SpatialSemanticId:
        return self._by_poi[poi_id]

    def poi_of(self, sid: SpatialSemanticId) -> str | None:
        return self._by_sid.get(sid)

    def point_of(self, sid: SpatialSemanticId) -> GeoPoint | None:
        poi = self._by_sid.get(sid)
        return self.points.get(poi) if poi is not None else None

    def parse(self, text: str) -> SpatialSemanticId:
        return parse_sid(
            text,
            self.config.geo_token_count,
            self.config.rvq_levels,
            self.config.rvq_codebook_size,
        )

    def resolve(self, text: str) -> SpatialSemanticId | None:
        """Parse a surface form, or None if it is not well-formed."""
        try:
            return self.parse(text)
        except SidParseError:
            return None

    def valid_next_tokens(self, prefix: Sequence[str] = ()) -> set[str]:
        return self.trie.next_tokens(prefix)

    # -- persistence ---------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = {"lcp": self.lcp, "config": asdict(self.config), "seed": self.config.rng_seed}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(header, sort_keys=True) + "\n")
            for poi_id, sid in self._by_poi.items():
                rec = {
                    "poi_id": poi_id,
                    "g": list(sid.g),
                    "s": list(sid.s),
                    "u": sid.u,
                    "surface": sid.render(),
                    "hex_cell_id": self.hex_ids.get(poi_id),
                }
                if poi_id in self.points:
                    rec["lat"], rec["lng"] = self.points[poi_id]
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "SidRegistry":
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            entries, hex_ids, points = {}, {}, {}
            for line in fh:
                if not line.strip():
                    continue
                r = json.loads(line)
                entries[r["poi_id"]] = SpatialSemanticId(tuple(r["g"]), tuple(r["s"]), r["u"])
                if r.get("hex_cell_id"):
                    hex_ids[r["poi_id"]] = r["hex_cell_id"]
                if "lat" in r:
                    points[r["poi_id"]] = (r["lat"], r["lng"])
        return cls(entries, SidConfig(**header["config"]), header["lcp"], hex_ids, points)


def valid_next_tokens(registry: SidRegistry, prefix: Sequence[str] = ()) -> set[str]:
    return registry.valid_next_tokens(prefix)


def _embedding_rows(
    catalog: Mapping[str, PoiRecord],
    embeddings: Mapping[str, np.ndarray],
    unit: str,
) -> tuple[list[str], dict[str, str]]:
    """Return (sorted training keys, poi_id -> key)."""
    poi_key = {}
    for poi_id, poi in catalog.items():
        if unit == "poi" and poi_id in embeddings:
            key = poi_id
        else:
            key = poi.category_name
        if key not in embeddings:
            raise SidBuildError(f"no embedding row for POI {poi_id} (looked up {key!r})")
        poi_key[poi_id] = key
    if unit == "category":
        keys = sorted(set(poi_key.values()))
    else:
        keys = [poi_key[p] for p in sorted(catalog)]
    return keys, poi_key


def build_registry(
    catalog: Mapping[str, PoiRecord],
    embeddings: Mapping[str, np.ndarray],
    config: SidConfig = SidConfig(),
    lcp: str | None = None,
) -> tuple[SidRegistry, RvqModel]:
    """Compose cell ids, the shared-prefix strip, RVQ codes and suffixes.

    The computed shared prefix is capped so that ``2 * geo_token_count`` hex
    digits always remain. ``lcp`` overrides it; it is required when
    ``config.lcp_scope == "union"`` and should then be computed over every
    city's catalog (see ``union_lcp``).
    """
    if not catalog:
        raise SidBuildError("empty catalog")
    hex_ids = {p: cell_id(r.latitude, r.longitude).to_hex() for p, r in catalog.items()}
    if lcp is None:
        if config.lcp_scope == "union":
            raise SidBuildError("lcp_scope=union needs the prefix of the union of catalogs")
        # a catalog confined to one leaf cell would otherwise leave no digits
        lcp = shared_hex_prefix(list(hex_ids.values()))[: HEX_DIGITS - 2 * config.geo_token_count]
    elif any(not h.startswith(lcp) for h in hex_ids.values()):
        raise SidBuildError(f"shared prefix {lcp!r} does not cover every POI")
    if len(lcp) + 2 * config.geo_token_count > HEX_DIGITS:
        geospatial_prefix("0" * HEX_DIGITS, len(lcp), config.geo_token_count)

    keys, poi_key = _embedding_rows(catalog, embeddings, config.embedding_unit)
    model = train_rvq(
        np.stack([embeddings[k] for k in keys]),
        levels=config.rvq_levels,
        codebook_size=config.rvq_codebook_size,
        seed=config.rng_seed,
        max_iter=config.max_iter,
        tol=config.tol,
    )
    codes = {k: tuple(encode_semantic(embeddings[k], model)) for k in set(keys)}

    classes = {}
    for poi_id in catalog:
        g = tuple(geospatial_prefix(hex_ids[poi_id], len(lcp), config.geo_token_count))
        classes[poi_id] = (g, codes[poi_key[poi_id]])
    suffixes = assign_suffixes(classes, config.suffix_warn_threshold)
    entries = {
        poi_id: SpatialSemanticId(g, s, suffixes[poi_id]) for poi_id, (g, s) in classes.items()
    }
    points = {p: r.point for p, r in catalog.items()}
    return SidRegistry(entries, config, lcp, hex_ids, points), model


def union_lcp(catalogs: Sequence[Mapping[str, PoiRecord]]) -> str:
    hex_ids = [
        cell_id(r.latitude, r.longitude).to_hex() for cat in catalogs for r in cat.values()
    ]
    return shared_hex_prefix(hex_ids)
