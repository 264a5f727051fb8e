"""Reverse geocoding with an append-only disk cache and a request rate limit."""
from __future__ import annotations

import json
import logging
import os
import time
import urllib.error
import urllib.parse
import urllib.request
from collections.abc import Callable, Iterable, Mapping
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

from .prompt import ADDRESS_PLACEHOLDER

log = logging.getLogger(__name__)

ENDPOINT_ENV = "GEOSID_GEOCODE_URL"
TOKEN_ENV = "GEOSID_GEOCODE_TOKEN"
DEFAULT_PATH_TEMPLATE = "/reverse?lat={lat}&lon={lng}&format=json"
DEFAULT_ADDRESS_FIELD = "display_name"
MODES = ("online", "cache_only")
SOURCES = ("remote", "cache", "placeholder")


class GeocodeError(ValueError):
    """Bad configuration or an unusable response."""


class GeocodeTransportError(OSError):
    """The endpoint could not be reached after all retries."""


def cache_key(lat: float, lng: float) -> tuple[str, str]:
    """Coordinates rounded to 6 decimals, as fixed-point strings."""

    def fmt(x: float) -> str:
        s = f"{x:.6f}"
        return "0.000000" if s == "-0.000000" else s

    return fmt(lat), fmt(lng)


@dataclass(frozen=True)
class GeocodeEntry:
    key: tuple[str, str]
    address: str
    fetched_at: str
    source: str

    def __post_init__(self) -> None:
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if not self.address and self.source != "placeholder":
            raise ValueError("address must be non-empty")


def _clean(text: str) -> str:
    return " ".join(text.replace("\t", " ").splitlines()).strip()


class GeocodeCache:
    """``lat6<TAB>lng6<TAB>address<TAB>iso_timestamp`` lines; the last line for a key wins."""

    def __init__(self, path: str | Path | None = None) -> None:
        self.path = Path(path) if path is not None else None
        self._entries: dict[tuple[str, str], GeocodeEntry] = {}
        if self.path is not None and self.path.exists():
            self._load()

    def _load(self) -> None:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                parts = line.split("\t")
                if len(parts) != 4 or not parts[2]:
                    log.warning("%s:%d: skipping malformed cache line", self.path, lineno)
                    continue
                key = (parts[0], parts[1])
                self._entries[key] = GeocodeEntry(key, parts[2], parts[3], "cache")

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: object) -> bool:
        return key in self._entries

    def get(self, key: tuple[str, str]) -> GeocodeEntry | None:
        return self._entries.get(key)

    def put(self, key: tuple[str, str], address: str, fetched_at: str) -> GeocodeEntry:
        address = _clean(address)
        if not address:
            raise ValueError("refusing to cache an empty address")
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(f"{key[0]}\t{key[1]}\t{address}\t{fetched_at}\n")
        entry = GeocodeEntry(key, address, fetched_at, "cache")
        self._entries[key] = entry
        return entry


class RateLimiter:
    """Keeps successive ``wait()`` returns at least ``1 / rps`` seconds apart."""

    def __init__(
        self,
        rps: float = 1.0,
        clock: Callable[[], float] = time.monotonic,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if rps <= 0:
            raise ValueError("rps must be positive")
        self.interval = 1.0 / rps
        self.clock = clock
        self.sleep = sleep
        self._last: float | None = None

    def wait(self) -> None:
        if self._last is not None:
            remaining = self._last + self.interval - self.clock()
            if remaining > 0:
                self.sleep(remaining)
        self._last = self.clock()


def _utc_now() -> str:
    return datetime.now(timezone.utc).replace(microsecond=0).isoformat()


class ReverseGeocoder:
    def __init__(
        self,
        cache: GeocodeCache,
        endpoint: str | None = None,
        path_template: str = DEFAULT_PATH_TEMPLATE,
        address_field: str = DEFAULT_ADDRESS_FIELD,
        token: str | None = None,
        limiter: RateLimiter | None = None,
        backoff: Iterable[float] = (1.0, 2.0, 4.0),
        timeout: float = 10.0,
        now: Callable[[], str] = _utc_now,
        user_agent: str = "geosid-reverse-geocoder",
    ) -> None:
        self.cache = cache
        self.endpoint = endpoint if endpoint is not None else os.environ.get(ENDPOINT_ENV)
        self.path_template = path_template
        self.address_field = address_field
        self.token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.limiter = limiter or RateLimiter()
        self.backoff = tuple(backoff)
        self.timeout = timeout
        self.now = now
        self.user_agent = user_agent
        self.requests_made = 0

    def url_for(self, key: tuple[str, str]) -> str:
        if not self.endpoint:
            raise GeocodeError(f"online geocoding needs an endpoint (set {ENDPOINT_ENV})")
        lat, lng = (urllib.parse.quote(k) for k in key)
        return self.endpoint.rstrip("/") + self.path_template.format(lat=lat, lng=lng)

    def _fetch(self, url: str) -> bytes:
        headers = {"User-Agent": self.user_agent, "Accept": "application/json"}
        if self.token:
            headers["Authorization"] = f"Bearer {self.token}"
        last_error: Exception | None = None
        for attempt in range(len(self.backoff) + 1):
            if attempt:
                delay = self.backoff[attempt - 1]
                retry_after = getattr(last_error, "retry_after", None)
                self.limiter.sleep(max(delay, retry_after or 0.0))
            self.limiter.wait()
            self.requests_made += 1
            try:
                req = urllib.request.Request(url, headers=headers)
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return resp.read()
            except urllib.error.HTTPError as exc:
                if exc.code != 429 and exc.code < 500:
                    raise GeocodeError(f"{url}: HTTP {exc.code}") from exc
                header = exc.headers.get("Retry-After") if exc.headers else None
                exc.retry_after = float(header) if header and header.isdigit() else None
                last_error = exc
            except (urllib.error.URLError, OSError) as exc:
                last_error = exc
            log.info("geocode attempt %d failed: %s", attempt + 1, last_error)
        raise GeocodeTransportError(f"{url}: giving up after {len(self.backoff)} retries: {last_error}")

    def reverse_geocode(self, lat: float, lng: float, mode: str = "online") -> GeocodeEntry:
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not (-90 <= lat <= 90 and -180 <= lng <= 180):
            raise ValueError(f"point out of bounds: ({lat}, {lng})")
        key = cache_key(lat, lng)
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        if mode == "cache_only":
            return GeocodeEntry(key, ADDRESS_PLACEHOLDER, "", "placeholder")
        body = self._fetch(self.url_for(key))
        try:
            payload = json.loads(body.decode("utf-8"))
            address = payload[self.address_field]
        except (ValueError, KeyError, TypeError) as exc:
            raise GeocodeError(f"response lacks {self.address_field!r}") from exc
        if not isinstance(address, str) or not _clean(address):
            raise GeocodeError(f"empty {self.address_field!r} in response")
        entry = self.cache.put(key, address, self.now())
        return GeocodeEntry(key, entry.address, entry.fetched_at, "remote")


def warm_cache(
    points: Mapping[str, tuple[float, float]],
    geocoder: ReverseGeocoder,
    mode: str = "online",
) -> dict[str, int]:
    """Geocode every catalog point once, in poi_id order.

    Each fetched address is appended to the cache as soon as it arrives, so a
    transport error leaves earlier progress on disk.
    """
    summary = {"hits": 0, "fetched": 0, "placeholders": 0}
    seen: set[tuple[str, str]] = set()
    for poi_id in sorted(points):
        lat, lng = points[poi_id]
        key = cache_key(lat, lng)
        if key in seen:
            continue
        seen.add(key)
        entry = geocoder.reverse_geocode(lat, lng, mode)
        if entry.source == "cache":
            summary["hits"] += 1
        elif entry.source == "remote":
            summary["fetched"] += 1
        else:
            summary["placeholders"] += 1
    return summary


def addresses_for(
    points: Mapping[str, tuple[float, float]], cache: GeocodeCache
) -> dict[str, str]:
    """poi_id -> cached address, for POIs whose coordinates are cached."""
    out = {}
    for poi_id, (lat, lng) in points.items():
        entry = cache.get(cache_key(lat, lng))
        if entry is not None:
            out[poi_id] = entry.address
    return out
