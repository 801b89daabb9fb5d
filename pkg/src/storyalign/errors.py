"""Exception types shared across the package."""


class StoryAlignError(Exception):
    """Base class for all package errors."""


class ConfigError(StoryAlignError):
    """Bad run configuration or ablation spec file."""


class ProviderUnavailable(StoryAlignError):
    """Chat or embedding backend could not be reached after exhausting retries."""


class ExtractionFailed(StoryAlignError):
    """An extraction task produced unusable output for a story."""

    def __init__(self, story_id: str, task: str, reason: str = ""):
        self.story_id = story_id
        self.task = task
        self.reason = reason
        msg = f"extraction failed for story {story_id!r} (task={task})"
        if reason:
            msg = f"{msg}: {reason}"
        super().__init__(msg)


class EmbeddingUnavailable(StoryAlignError):
    """Embedding backend failed or has no vector for the requested text."""


class DegenerateVector(StoryAlignError):
    """A zero vector where a direction is required."""


class DimensionError(StoryAlignError):
    """Vector dimensions disagree within one run."""


class ConfigUnsatisfiable(StoryAlignError):
    """A representation lacks a layer the mapping config requires."""

    def __init__(self, layer: str, detail: str = ""):
        self.layer = layer
        msg = f"mapping config needs layer {layer!r} which is not available"
        if detail:
            msg = f"{msg}: {detail}"
        super().__init__(msg)


class InsufficientUnits(StoryAlignError):
    """Fewer than two elements in a pair source; no pairs can be formed."""


class DatasetError(StoryAlignError):
    """A dataset file violates the item schema."""

    def __init__(self, line: int, reason: str):
        self.line = line
        self.reason = reason
        super().__init__(f"dataset error at line {line}: {reason}")


class ReportError(StoryAlignError):
    """Predictions do not cover the evaluated items."""


class PredictionFailed(StoryAlignError):
    """Every candidate target failed to score."""


class NotFound(StoryAlignError):
    """A referenced story or stored artifact does not exist."""
