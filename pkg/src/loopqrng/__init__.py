"""Simulation and verification toolkit for a looped beam-splitter QRNG."""
from ._accel import backend_name
from .model import (
    LoopDistribution,
    OpticalParams,
    RateCurvePoint,
    beta,
    bits_per_pulse,
    consecutive_ratio,
    min_entropy_per_event,
    optimize_reflectivity,
    p_click,
    single_click_distribution,
    window_bias,
)
from .simulator import EventStream, SimConfig, simulate_stream

__version__ = "0.1.0"
