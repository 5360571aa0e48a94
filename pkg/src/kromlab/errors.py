"""Exception types shared across the toolkit."""


class KromlabError(Exception):
    """Base class for all toolkit errors."""


class ParseError(KromlabError):
    """Concrete-syntax input could not be parsed or resolved."""


class StructuralError(KromlabError):
    """A formula or structure violates a well-formedness requirement."""


class ResourceError(KromlabError):
    """A configured enumeration or solver limit would be exceeded."""

    def __init__(self, message, needed=None, block=None):
        super().__init__(message)
        self.needed = needed
        self.block = block


class UnsupportedFormatError(KromlabError):
    """The requested serialization does not support this object."""
