"""Exception types shared across the package.

Argument misuse raises plain ValueError/TypeError; these classes cover
data-level failures that callers (and the CLI exit-code mapping) need to
tell apart.
"""


class DeepDictError(Exception):
    """Base class for data and pipeline errors."""


class ParseError(DeepDictError):
    """Input file is malformed (bad magic, truncated, unparseable field)."""


class ValidationError(DeepDictError):
    """Parsed data violates an invariant (non-finite values, bad shape)."""


class DecodeError(DeepDictError):
    """Compressed stream or container is corrupt (checksum, truncation)."""


class LoadError(DeepDictError):
    """Serialized model blob is incompatible or corrupt."""


class TrainingDiverged(DeepDictError):
    """Training produced a non-finite loss."""
