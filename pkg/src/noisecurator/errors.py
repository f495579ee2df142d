"""Exception hierarchy for the noise curation pipeline."""


class NoiseCuratorError(Exception):
    """Base class for every error raised deliberately by this package."""


class DatasetError(NoiseCuratorError, ValueError):
    """Malformed or inconsistent dataset input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(NoiseCuratorError, ValueError):
    """Invalid run configuration; `key` names the offending setting."""

    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


class TrainingError(NoiseCuratorError, ArithmeticError):
    """Optimization diverged (non-finite loss or parameters)."""

    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"{message} (step {step})")


class StageError(NoiseCuratorError, RuntimeError):
    """A pipeline stage failed; wraps the underlying cause."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        super().__init__(f"stage '{stage}' failed: {cause}")


class ArtifactExistsError(NoiseCuratorError, FileExistsError):
    """Refusal to overwrite an existing artifact without --force."""
