"""Shared exception base for the gridrun package.

Every module defines its own specific exceptions next to the code that
raises them; they all derive from GridrunError so callers can catch the
whole family at once.
"""


class GridrunError(Exception):
    """Base class for all gridrun errors."""
