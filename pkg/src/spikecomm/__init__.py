"""Spike-event aggregation, packet framing and host channel for a torus network of neuromorphic FPGAs."""

__version__ = "0.1.0"
