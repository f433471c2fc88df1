"""Stdio adapter exposing restoration models over the irsr/1 protocol."""

__version__ = "0.1.0"
