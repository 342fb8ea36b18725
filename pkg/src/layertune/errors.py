"""Exception hierarchy shared by every stage of the sweep pipeline."""

from __future__ import annotations


class LayertuneError(Exception):
    """Base class for all errors raised by this package."""


# data ingest
class MissingColumn(LayertuneError):
    pass


class BadCoordinate(LayertuneError):
    pass


class UnknownLabel(LayertuneError):
    pass


class FetchFailed(LayertuneError):
    def __init__(self, entry_id: str, reason: str):
        super().__init__(f"cutout fetch failed for {entry_id}: {reason}")
        self.entry_id = entry_id
        self.reason = reason


class CacheCorrupt(LayertuneError):
    pass


class DecodeError(LayertuneError):
    pass


class EmptyDataset(LayertuneError):
    pass


class ZeroCount(LayertuneError):
    pass


class DegenerateSplit(UserWarning):
    """Warning: a category ended up entirely on one side of the split."""


# backbones / freezing
class UnknownArchitecture(LayertuneError, KeyError):
    def __str__(self) -> str:  # KeyError quotes its argument otherwise
        return str(self.args[0]) if self.args else ""


class WeightsUnavailable(LayertuneError):
    pass


class UnsupportedModel(LayertuneError):
    pass


class DepthOutOfRange(LayertuneError, ValueError):
    pass


class PlanMismatch(LayertuneError):
    pass


# training
class ShapeMismatch(LayertuneError, ValueError):
    pass


class InvalidDistribution(LayertuneError, ValueError):
    pass


class NonFiniteLoss(LayertuneError):
    pass


# analysis
class EmptyConfusion(LayertuneError, ValueError):
    pass


class AllRungsFailed(LayertuneError):
    pass


class TooFewPoints(LayertuneError, ValueError):
    pass


# cli
class ConfigInvalid(LayertuneError):
    pass


class DatasetMissing(LayertuneError):
    pass


class StoreMissing(LayertuneError):
    pass
