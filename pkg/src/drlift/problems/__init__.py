"""Benchmark problem generators."""

from .newsvendor import NewsvendorConfig, newsvendor_model
from .presets import PRESETS, preset
from .transport import TransportConfig, load_transport, production_names, transport_model

__all__ = [
    "NewsvendorConfig",
    "newsvendor_model",
    "TransportConfig",
    "load_transport",
    "production_names",
    "transport_model",
    "PRESETS",
    "preset",
]
