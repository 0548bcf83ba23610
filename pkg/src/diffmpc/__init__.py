"""Diffusion-augmented load forecasting and rolling MPC dispatch toolkit."""

__version__ = "0.1.0"
