"""Decision-rule counterparts for multistage adaptive stochastic LPs."""

__version__ = "0.1.0"
