"""Exception hierarchy shared across the engine."""

from __future__ import annotations


class KeyTerrainError(Exception):
    """Base class for every error raised by this package."""


class MissionFormatError(KeyTerrainError):
    """Mission document is not parseable or not in a supported format."""


class MissionValidationError(KeyTerrainError):
    """Mission document parsed but violates a structural invariant."""


class UnknownNodeError(KeyTerrainError):
    """An operation referenced a task or asset id that is not in the model."""


class ScoreInputError(KeyTerrainError):
    """A scoring input is missing or out of range."""


class EmptyMissionError(ScoreInputError):
    """Scoring requested for a mission with no tasks."""


class CaptureError(KeyTerrainError):
    """A packet capture file could not be parsed."""


class CpeError(KeyTerrainError):
    """A CPE name could not be parsed."""


class VulnSourceError(KeyTerrainError):
    """The vulnerability intelligence source failed and no cache was usable."""


class ScanFormatError(KeyTerrainError):
    """A scanner output document is malformed or has an unsupported schema."""


class InventoryError(KeyTerrainError):
    """A discovery event could not be applied to the asset inventory."""


class StoreError(KeyTerrainError):
    """The snapshot repository failed."""


class NotFoundError(StoreError):
    """Requested snapshot version does not exist."""


class ConfigError(KeyTerrainError):
    """Engine configuration is invalid."""


class WhatIfError(KeyTerrainError):
    """A what-if patch is invalid or not applicable to the base version."""


class CycleError(KeyTerrainError):
    """A cycle step failed; the cycle was aborted without persisting.

    Attributes:
        step: Name of the cycle step that failed.
    """

    def __init__(self, step: str, cause: BaseException):
        self.step = step
        self.cause = cause
        super().__init__(f"step '{step}': {cause}")
