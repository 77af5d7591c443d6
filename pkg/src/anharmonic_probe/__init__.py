"""Pulsed optomechanical probe of mechanical anharmonicity.

A desk-scale engine for the four-pulse loop protocol: exact joint
simulation, the effective Kerr map of the field, quantum and classical
Fisher information for homodyne and heterodyne readout, and Monte-Carlo
estimation.
"""
from .dynamics import CUBIC, HARMONIC, QUARTIC, ProtocolParams, PulseSequence
from .errors import ProbeError
from .metrology import HETERODYNE, HOMODYNE, MeasurementConfig

__version__ = "0.1.0"

__all__ = ["CUBIC", "HARMONIC", "QUARTIC", "HETERODYNE", "HOMODYNE", "MeasurementConfig",
           "ProbeError", "ProtocolParams", "PulseSequence", "__version__"]
