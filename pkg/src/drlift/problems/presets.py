"""Named benchmark instances."""

from __future__ import annotations

from .newsvendor import NewsvendorConfig
from .transport import TransportConfig, load_transport


def _transport_10x10(horizon: int, factor: float) -> TransportConfig:
    return load_transport("10x10", horizon, salvage_factor=factor)


PRESETS = {
    "newsvendor-T4": lambda: NewsvendorConfig(horizon=4),
    "newsvendor-T8": lambda: NewsvendorConfig(horizon=8),
    "transport-3x2-T6": lambda: load_transport("3x2", 6, salvage_value=6.0),
    "transport-3x2-T10": lambda: load_transport("3x2", 10, salvage_value=7.5),
    "transport-10x10-T10": lambda: _transport_10x10(10, 0.15),
    "transport-10x10-T20": lambda: _transport_10x10(20, 0.7),
}


def preset(name: str) -> NewsvendorConfig | TransportConfig:
    try:
        return PRESETS[name]()
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}") from None
