"""Exception hierarchy shared by all satfuse modules."""


class SatfuseError(Exception):
    """Base class for all library errors."""


class FormatError(SatfuseError):
    """Malformed file magic or header; carries the byte offset of the problem."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class CorruptionError(SatfuseError):
    """Structurally valid header but inconsistent payload (lengths, counts)."""


class ValidationError(SatfuseError):
    """Input object violates a documented invariant."""


class DimensionError(SatfuseError):
    """Raster dimensions incompatible with the requested operation."""


class AlignmentError(SatfuseError):
    """Rasters do not share the grid/band layout the operation requires."""


class GeometryError(SatfuseError):
    """Grid geometry cannot be reconciled (non-integral ratios, bad shifts)."""


class CoverageError(SatfuseError):
    """Not enough valid data in the region the operation needs."""


class SchemaError(SatfuseError):
    """Band counts, wavelengths, or feature lengths do not match."""


class DomainError(SatfuseError):
    """Inputs lie outside the wavelength/value domain the operation supports."""


class SolverError(SatfuseError):
    """Iterative solver exceeded its budget; ``best_x`` holds the last iterate."""

    def __init__(self, message, best_x=None):
        super().__init__(message)
        self.best_x = best_x


class ConfigError(SatfuseError):
    """Inconsistent model or run configuration."""


class ShapeError(SatfuseError):
    """Tensor shape mismatch in the network stack."""


class DataError(SatfuseError):
    """Training data is empty or unusable."""


class PartitionError(SatfuseError):
    """Cross-validation partition cannot be formed."""
