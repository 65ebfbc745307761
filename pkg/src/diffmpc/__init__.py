"""Diffusion-informed model predictive control for battery energy arbitrage."""

__version__ = "0.1.0"
