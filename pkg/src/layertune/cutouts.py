"""SkyServer image cutout client with a content-addressed on-disk cache."""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import os
import tempfile
import threading
import time
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests
from PIL import Image, UnidentifiedImageError

from .errors import CacheCorrupt, FetchFailed
from .ingest import CatalogEntry

log = logging.getLogger(__name__)

DR16_IMGCUTOUT = "https://skyserver.sdss.org/dr16/SkyServerWS/ImgCutout/getjpeg"


@dataclass(frozen=True)
class CutoutParams:
    endpoint: str
    scale: float = 0.1  # arcsec / pixel
    width: int = 2048
    height: int = 2048
    retries: int = 3
    timeout: float = 30.0
    backoff: float = 1.0

    def __post_init__(self):
        if self.scale <= 0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"cutout size must be positive, got {self.width}x{self.height}")


def cache_key(ra: float, dec: float, scale: float, width: int, height: int) -> str:
    return hashlib.sha256(f"{ra!r}|{dec!r}|{scale!r}|{width}|{height}".encode()).hexdigest()


def _decodes(payload: bytes) -> bool:
    try:
        with Image.open(io.BytesIO(payload)) as img:
            img.load()
    except (UnidentifiedImageError, OSError, ValueError):
        return False
    return True


class CutoutCache:
    """Files live at ``<root>/<key[:2]>/<key>.jpg``; failures go to ``failures.csv``."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self._failures_lock = threading.Lock()

    def path_for(self, key: str) -> Path:
        return self.root / key[:2] / f"{key}.jpg"

    def get(self, key: str) -> bytes | None:
        path = self.path_for(key)
        if not path.exists():
            return None
        payload = path.read_bytes()
        if not _decodes(payload):
            raise CacheCorrupt(f"cached cutout {path} does not decode")
        return payload

    def put(self, key: str, payload: bytes) -> Path:
        path = self.path_for(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".part")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        return path

    def evict(self, key: str) -> None:
        self.path_for(key).unlink(missing_ok=True)

    @property
    def failures_path(self) -> Path:
        return self.root / "failures.csv"

    def record_failure(self, entry: CatalogEntry, reason: str) -> None:
        with self._failures_lock:
            new = not self.failures_path.exists()
            with open(self.failures_path, "a", newline="") as fh:
                writer = csv.writer(fh)
                if new:
                    writer.writerow(["objid", "ra", "dec", "reason"])
                writer.writerow([entry.object_id, entry.ra, entry.dec, reason])

    def failed_ids(self) -> set[str]:
        if not self.failures_path.exists():
            return set()
        with open(self.failures_path, newline="") as fh:
            return {row["objid"] for row in csv.DictReader(fh)}


def entry_key(entry: CatalogEntry, params: CutoutParams) -> str:
    return cache_key(entry.ra, entry.dec, params.scale, params.width, params.height)


def fetch_cutout(
    entry: CatalogEntry,
    params: CutoutParams,
    cache: CutoutCache,
    session: requests.Session | None = None,
) -> bytes:
    """Return the JPEG cutout for ``entry``, hitting the network only on a cache miss."""
    key = entry_key(entry, params)
    try:
        hit = cache.get(key)
    except CacheCorrupt as exc:
        log.warning("%s; evicting and refetching", exc)
        cache.evict(key)
        hit = None
    if hit is not None:
        return hit

    http = session or requests
    query = {
        "ra": entry.ra,
        "dec": entry.dec,
        "scale": params.scale,
        "width": params.width,
        "height": params.height,
    }
    reason = "no attempts made"
    for attempt in range(params.retries + 1):
        if attempt:
            time.sleep(params.backoff * 2 ** (attempt - 1))
        try:
            resp = http.get(params.endpoint, params=query, timeout=params.timeout)
            resp.raise_for_status()
        except requests.RequestException as exc:
            reason = f"{type(exc).__name__}: {exc}"
            log.debug("attempt %d for %s failed: %s", attempt + 1, entry.object_id, reason)
            continue
        payload = resp.content
        if not _decodes(payload):
            reason = "response body is not a decodable image"
            continue
        cache.put(key, payload)
        return payload
    raise FetchFailed(entry.object_id, reason)


@dataclass
class FetchSummary:
    cached: int = 0
    fetched: int = 0
    failed: int = 0
    failures: list[FetchFailed] = field(default_factory=list)

    def __str__(self) -> str:
        return f"cached {self.cached}, fetched {self.fetched}, failed {self.failed}"


def fetch_all(
    entries: Iterable[CatalogEntry],
    params: CutoutParams,
    cache: CutoutCache,
    workers: int = 4,
    session: requests.Session | None = None,
) -> FetchSummary:
    """Populate the cache for every entry; failures are logged, never raised."""
    summary = FetchSummary()
    lock = threading.Lock()

    def one(entry: CatalogEntry) -> None:
        was_cached = cache.path_for(entry_key(entry, params)).exists()
        try:
            fetch_cutout(entry, params, cache, session=session)
        except FetchFailed as exc:
            cache.record_failure(entry, exc.reason)
            log.warning("%s", exc)
            with lock:
                summary.failed += 1
                summary.failures.append(exc)
            return
        with lock:
            if was_cached:
                summary.cached += 1
            else:
                summary.fetched += 1

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        list(pool.map(one, entries))
    return summary
