"""Exception types shared across the package."""


class SdfForgeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SdfForgeError):
    """Invalid configuration value, unknown config key, or bad CLI flag."""


class DataError(SdfForgeError):
    """Malformed, inconsistent, or missing input data."""


class ObjParseError(DataError):
    """Unparseable OBJ record; carries the 1-based line number."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


class MeshStructureError(DataError):
    """Structurally invalid mesh (e.g. face index out of range)."""


class EmptyInputError(DataError):
    """An operation received an empty mesh, point set, or sample set."""


class DegenerateGeometryError(DataError):
    """Zero-area triangle or otherwise degenerate geometric input."""


class BatchImbalanceError(DataError):
    """Not enough samples of one sign to build a balanced batch."""

    def __init__(self, sign: str, available: int, needed: int):
        super().__init__(
            f"need {needed} {sign} samples but only {available} available"
        )
        self.sign = sign


class TapeMismatchError(SdfForgeError):
    """Backward pass invoked with a tape from a different forward call."""


class NumericFault(SdfForgeError):
    """Non-finite value encountered during optimization or inference."""
