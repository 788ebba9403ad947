"""Desk-scale laboratory for studying how perceptual biases in learned
visual representations shape, and are shaped by, emergent communication
in reference games."""

__version__ = "0.1.0"

from . import (  # noqa: F401
    agents,
    config,
    evolution,
    metrics,
    nn,
    smoothing,
    training,
    world,
)
