"""Catalog parsing, class statistics, class weights and the stratified split."""

from __future__ import annotations

import csv
import logging
import math
import warnings
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    BadCoordinate,
    DegenerateSplit,
    EmptyDataset,
    MissingColumn,
    UnknownLabel,
    ZeroCount,
)

log = logging.getLogger(__name__)

CLASSES: tuple[str, ...] = ("GALAXY", "QSO", "STAR")
CLASS_INDEX = {name: i for i, name in enumerate(CLASSES)}

DEFAULT_COLUMNS = {"objid": "objid", "ra": "ra", "dec": "dec", "class": "class"}


@dataclass(frozen=True)
class CatalogEntry:
    object_id: str
    ra: float
    dec: float
    label: str

    def __post_init__(self):
        check_coordinates(self.ra, self.dec)
        if self.label not in CLASS_INDEX:
            raise UnknownLabel(f"label {self.label!r} not in {CLASSES}")

    @property
    def label_index(self) -> int:
        return CLASS_INDEX[self.label]


@dataclass
class ImageSample:
    object_id: str
    pixels: Any  # H x W x 3 float array in [0, 1]; may be a memmap view
    label: int


def check_coordinates(ra: float, dec: float) -> None:
    if not (math.isfinite(ra) and math.isfinite(dec)):
        raise BadCoordinate(f"non-finite coordinate ra={ra} dec={dec}")
    if not 0.0 <= ra < 360.0:
        raise BadCoordinate(f"ra={ra} outside [0, 360)")
    if not -90.0 <= dec <= 90.0:
        raise BadCoordinate(f"dec={dec} outside [-90, 90]")


def normalize_label(raw: str) -> str:
    label = raw.strip().upper()
    if label not in CLASS_INDEX:
        raise UnknownLabel(f"label {raw!r} not in {CLASSES}")
    return label


def parse_catalog(
    path: str | Path,
    columns: dict[str, str] | None = None,
    rejected: list[tuple[int, BadCoordinate]] | None = None,
) -> list[CatalogEntry]:
    """Read a CSV catalog into entries, preserving row order.

    Rows with unparsable or out-of-range coordinates are dropped and logged;
    pass a list as ``rejected`` to collect ``(line_number, error)`` pairs.
    An unknown class label aborts the parse.
    """
    cols = {**DEFAULT_COLUMNS, **(columns or {})}
    entries: list[CatalogEntry] = []
    n_rejected = 0
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh, skipinitialspace=True)
        header = [h.strip() for h in (reader.fieldnames or [])]
        reader.fieldnames = header
        for key in ("ra", "dec", "class"):
            if cols[key] not in header:
                raise MissingColumn(f"catalog {path} has no column {cols[key]!r}")
        has_id = cols["objid"] in header
        for lineno, row in enumerate(reader, start=2):
            label = normalize_label(row[cols["class"]] or "")
            object_id = row[cols["objid"]].strip() if has_id else f"row{lineno - 1}"
            try:
                ra = float(row[cols["ra"]])
                dec = float(row[cols["dec"]])
                check_coordinates(ra, dec)
            except (TypeError, ValueError, BadCoordinate) as exc:
                err = exc if isinstance(exc, BadCoordinate) else BadCoordinate(str(exc))
                n_rejected += 1
                log.warning("line %d (%s): %s", lineno, object_id, err)
                if rejected is not None:
                    rejected.append((lineno, err))
                continue
            entries.append(CatalogEntry(object_id, ra, dec, label))
    log.info("parsed %d catalog rows from %s (%d rejected)", len(entries), path, n_rejected)
    return entries


def select_subset(entries: Sequence[CatalogEntry], n: int | None, seed: int | None = None) -> list[CatalogEntry]:
    """First ``n`` rows, or a seeded random sample of ``n`` rows in catalog order."""
    if n is None or n >= len(entries):
        return list(entries)
    if seed is None:
        return list(entries[:n])
    rng = np.random.default_rng(seed)
    keep = np.sort(rng.choice(len(entries), size=n, replace=False))
    return [entries[i] for i in keep]


@dataclass(frozen=True)
class ClassStats:
    counts: dict[str, int]
    fractions: dict[str, float]

    @property
    def total(self) -> int:
        return sum(self.counts.values())


def _label_name(item: Any) -> str:
    if isinstance(item, str):
        return normalize_label(item)
    label = getattr(item, "label", item)
    if isinstance(label, (int, np.integer)):
        return CLASSES[int(label)]
    return normalize_label(label)


def class_distribution(entries: Iterable[Any]) -> ClassStats:
    """Per-class counts and shares. Accepts entries, samples, names or indices."""
    counts = dict.fromkeys(CLASSES, 0)
    for item in entries:
        counts[_label_name(item)] += 1
    total = sum(counts.values())
    if total == 0:
        raise EmptyDataset("cannot compute class distribution of an empty dataset")
    return ClassStats(counts, {c: n / total for c, n in counts.items()})


WeightMap = dict[str, float]


def compute_class_weights(stats: ClassStats, scheme: str = "inverse_frequency") -> WeightMap:
    """``N / (C * n_c)`` per class under inverse frequency; all ones under ``none``."""
    if scheme == "none":
        return dict.fromkeys(CLASSES, 1.0)
    if scheme != "inverse_frequency":
        raise ValueError(f"unknown class weight scheme {scheme!r}")
    zero = [c for c, n in stats.counts.items() if n == 0]
    if zero:
        raise ZeroCount(f"no samples for {zero}; inverse-frequency weight undefined")
    n_total, n_classes = stats.total, len(stats.counts)
    return {c: n_total / (n_classes * n) for c, n in stats.counts.items()}


def weight_vector(weights: WeightMap | Sequence[float]) -> np.ndarray:
    if isinstance(weights, dict):
        return np.array([weights[c] for c in CLASSES], dtype=np.float64)
    return np.asarray(weights, dtype=np.float64)


@dataclass
class SplitResult:
    train: list = field(default_factory=list)
    val: list = field(default_factory=list)
    seed: int = 0
    train_fraction: float = 0.7


def train_count(n: int, train_fraction: float) -> int:
    # decimal arithmetic so that e.g. 0.7 * 5 = 3.5 rounds up to 4
    exact = Decimal(repr(train_fraction)) * n
    return int(exact.quantize(Decimal(1), rounding=ROUND_HALF_UP))


def stratified_split(
    samples: Sequence[Any],
    train_fraction: float = 0.7,
    seed: int = 0,
    label_of: Callable[[Any], Any] | None = None,
) -> SplitResult:
    """Per-class shuffled split; class ``c`` contributes ``round(f * n_c)`` to train.

    Each class is shuffled by its own generator seeded with ``(seed, class)``,
    and samples keep their relative catalog order inside each side.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    label_of = label_of or _label_name
    by_class: dict[str, list[int]] = {c: [] for c in CLASSES}
    for i, s in enumerate(samples):
        by_class[_label_name(label_of(s))].append(i)

    train_idx: list[int] = []
    val_idx: list[int] = []
    for ci, name in enumerate(CLASSES):
        members = by_class[name]
        if not members:
            continue
        rng = np.random.default_rng([seed, ci])
        order = rng.permutation(len(members))
        k = train_count(len(members), train_fraction)
        if k == 0 or k == len(members):
            warnings.warn(
                f"class {name} with {len(members)} samples lands entirely in "
                f"{'validation' if k == 0 else 'train'}",
                DegenerateSplit,
                stacklevel=2,
            )
        train_idx.extend(members[j] for j in order[:k])
        val_idx.extend(members[j] for j in order[k:])
    return SplitResult(
        train=[samples[i] for i in sorted(train_idx)],
        val=[samples[i] for i in sorted(val_idx)],
        seed=seed,
        train_fraction=train_fraction,
    )
