from enum import IntEnum

__version__ = "0.1.0"


class SchemaVersion(IntEnum):
    """Revision of the JSON documents written next to data files."""

    V1 = 1

    @classmethod
    def current(cls) -> "SchemaVersion":
        return max(cls)
