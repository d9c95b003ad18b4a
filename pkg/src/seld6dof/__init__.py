"""Desk-scale 6DoF sound event localization and detection toolkit.

Pipeline: synthetic scene simulation -> audio + motion-sensor features ->
causal multi-modal network with Multi-ACCDOA training -> location-dependent
evaluation metrics. See README.md for the CLI workflow.
"""

__version__ = "0.1.0"

from .kernels import backend_name  # noqa: F401
