"""Prepared-dataset layout on disk: a float32 pixel memmap plus JSON metadata."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path

import numpy as np

from .config import Config
from .cutouts import CutoutCache, CutoutParams, entry_key
from .errors import CacheCorrupt, DatasetMissing, DecodeError
from .images import RESAMPLING, preprocess_image
from .ingest import (
    ImageSample,
    SplitResult,
    class_distribution,
    parse_catalog,
    select_subset,
    stratified_split,
)
from .synthetic import generate_sky_shapes

log = logging.getLogger(__name__)


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def cutout_params(cfg: Config) -> CutoutParams:
    d = cfg.data
    return CutoutParams(
        endpoint=cfg.require("data.endpoint"),
        scale=d.scale,
        width=d.width,
        height=d.height,
        retries=d.retries,
        timeout=d.timeout,
    )


def load_catalog(cfg: Config):
    entries = parse_catalog(cfg.path(cfg.require("data.catalog")), columns=cfg.data.columns)
    return select_subset(entries, cfg.data.subset, cfg.data.subset_seed)


def prepare_dataset(cfg: Config) -> dict:
    """Decode, resize and split the dataset into ``data.dataset_dir``; returns the metadata."""
    d = cfg.data
    out = cfg.path(d.dataset_dir)
    out.mkdir(parents=True, exist_ok=True)
    excluded: list[dict] = []
    catalog_hash = None

    if d.source == "synthetic":
        synth = generate_sky_shapes(d.synthetic_count, d.image_size, seed=d.synthetic_seed)
        items = [(s.object_id, s.label, lambda s=s: s.pixels) for s in synth]
    else:
        catalog_path = cfg.path(cfg.require("data.catalog"))
        catalog_hash = file_sha256(catalog_path)
        params = cutout_params(cfg)
        cache = CutoutCache(cfg.path(d.cache_dir))
        failed = cache.failed_ids()
        items = []
        for entry in load_catalog(cfg):
            if entry.object_id in failed:
                excluded.append({"objid": entry.object_id, "reason": "fetch failed"})
                continue
            key = entry_key(entry, params)
            items.append((entry.object_id, entry.label_index, lambda key=key: cache.get(key)))

    n = len(items)
    pixels = np.lib.format.open_memmap(out / "pixels.npy", mode="w+", dtype=np.float32,
                                       shape=(max(n, 1), d.image_size, d.image_size, 3))
    ids, labels = [], []
    digest = hashlib.sha256()
    for object_id, label, get in items:
        try:
            payload = get()
            if isinstance(payload, np.ndarray):
                arr = payload
            elif payload is None:
                raise DecodeError("not in cutout cache (run fetch first)")
            else:
                arr = preprocess_image(payload, d.image_size)
        except (DecodeError, CacheCorrupt) as exc:
            excluded.append({"objid": object_id, "reason": str(exc)})
            log.warning("excluding %s: %s", object_id, exc)
            continue
        pixels[len(ids)] = arr
        digest.update(object_id.encode())
        digest.update(bytes([label]))
        digest.update(np.ascontiguousarray(arr, dtype=np.float32).tobytes())
        ids.append(object_id)
        labels.append(label)
    pixels.flush()
    del pixels
    if not ids:
        raise DatasetMissing("no usable images; nothing to prepare")

    np.save(out / "labels.npy", np.array(labels, dtype=np.int64))
    split = stratified_split(list(zip(ids, labels)), d.train_fraction, d.split_seed, label_of=lambda t: t[1])
    stats = class_distribution(labels)
    meta = {
        "source": d.source,
        "count": len(ids),
        "ids": ids,
        "image_size": d.image_size,
        "resampling": RESAMPLING,
        "catalog_sha256": catalog_hash,
        "dataset_sha256": digest.hexdigest(),
        "class_counts": stats.counts,
        "split": {
            "seed": split.seed,
            "train_fraction": split.train_fraction,
            "train": [i for i, _ in split.train],
            "val": [i for i, _ in split.val],
        },
        "excluded": excluded,
    }
    (out / "meta.json").write_text(json.dumps(meta, indent=2))
    return meta


def load_dataset(dataset_dir: str | Path) -> tuple[SplitResult, dict]:
    """Split of memmap-backed samples plus the metadata written by :func:`prepare_dataset`."""
    root = Path(dataset_dir)
    if not (root / "meta.json").exists():
        raise DatasetMissing(f"no prepared dataset at {root} (run prepare first)")
    meta = json.loads((root / "meta.json").read_text())
    pixels = np.load(root / "pixels.npy", mmap_mode="r")
    labels = np.load(root / "labels.npy")
    samples = {oid: ImageSample(oid, pixels[i], int(labels[i])) for i, oid in enumerate(meta["ids"])}
    sp = meta["split"]
    split = SplitResult(
        train=[samples[i] for i in sp["train"]],
        val=[samples[i] for i in sp["val"]],
        seed=sp["seed"],
        train_fraction=sp["train_fraction"],
    )
    return split, meta
