"""Exception taxonomy shared across the package.

Every error raised on a contract violation derives from CardionasError so the
CLI can render a single "error [category]: message" line and exit 1.
"""


class CardionasError(Exception):
    """Base class for all package-specific failures."""

    category = "error"


class ShapeError(CardionasError):
    """Tensor rank or dimension mismatch."""

    category = "shape"


class InputError(CardionasError):
    """Invalid argument value (bad label, non-scalar loss, short signal...)."""

    category = "input"


class StateError(CardionasError):
    """Operation attempted in the wrong lifecycle state (spent tape, missing grad)."""

    category = "state"


class StatisticsError(CardionasError):
    """Batch statistics cannot be computed (fewer than 2 samples per channel)."""

    category = "statistics"


class ConfigError(CardionasError):
    """Invalid run configuration (non-positive sizes, missing split...)."""

    category = "config"


class IngestionError(CardionasError):
    """Malformed signal/annotation CSV input."""

    category = "ingestion"


class GenotypeError(CardionasError):
    """Malformed or invalid genotype description."""

    category = "genotype"


class BinaryFormatError(CardionasError):
    """Corrupt, truncated, or wrong-magic binary artifact."""

    category = "format"


class CheckpointError(BinaryFormatError):
    """Search checkpoint cannot be read or does not match the configuration."""

    category = "checkpoint"


class ModelFileError(BinaryFormatError):
    """Trained-model file cannot be read or does not match its description."""

    category = "model-file"


class DatasetFileError(BinaryFormatError):
    """Beat-dataset file cannot be read."""

    category = "dataset-file"
