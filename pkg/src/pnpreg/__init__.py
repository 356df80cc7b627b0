"""Plug-and-play image restoration with a learned regularizer gradient.

Subpackages: ``tensor`` (autodiff engine), ``priors``, ``solvers``,
``harness``; modules ``degradations``, ``training``, ``data``, ``metrics``.
"""

__version__ = "0.1.0"
