"""Multilevel noise-injection Gibbs samplers for sparse linear mixed models."""

from ._mlgibbs import *  # noqa: F401,F403
from ._mlgibbs import __doc__  # noqa: F401

__version__ = "0.1.0"
