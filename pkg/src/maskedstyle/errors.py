"""Exception types shared across the toolkit."""


class EmptyRegionError(ValueError):
    """A mask selected no pixels (or vanished under downsampling)."""


class CheckpointFormatError(RuntimeError):
    """A weights container is unreadable or inconsistent with its manifest."""


class ConfigError(ValueError):
    """A run configuration file is malformed or contains unknown keys."""


class DatasetError(RuntimeError):
    """A dataset directory cannot be indexed."""


class ResourceLimitError(RuntimeError):
    """An input exceeds the documented size limits."""
