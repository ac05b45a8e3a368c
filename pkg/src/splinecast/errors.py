"""Exception types shared across the package.

The CLI maps these onto its exit codes: format/partition problems exit 3,
capacity problems exit 4.
"""

from __future__ import annotations

__all__ = ["FormatError", "PartitionError", "CapacityError", "MissingBlockError"]


class FormatError(ValueError):
    """A file or byte stream does not match its declared layout."""


class PartitionError(ValueError):
    """Volume dims are incompatible with the requested block hierarchy."""


class CapacityError(RuntimeError):
    """A visible set cannot fit in the configured cache capacity."""


class MissingBlockError(RuntimeError):
    """A ray sample landed in a block absent from the resident set."""
