"""Cross-learning enhancement of circular-scanning SAR images from camera views."""

from crosslearn.errors import (
    ConfigurationError,
    CrossLearnError,
    DimensionMismatchError,
    MalformedHeaderError,
    MissingArtifactError,
    NumericError,
    RankDeficiencyError,
)

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "CrossLearnError",
    "DimensionMismatchError",
    "MalformedHeaderError",
    "MissingArtifactError",
    "NumericError",
    "RankDeficiencyError",
]
