"""Alias of :mod:`superint.expr` under its module-level name."""

from .expr import *  # noqa: F401,F403
from .expr import __all__  # noqa: F401
