"""Python bindings for the approximation-by-conjugation laboratory."""

from ._core import *  # noqa: F401,F403
from ._core import __version__  # noqa: F401
