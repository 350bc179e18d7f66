"""Pseudo-spectral simulation of parabolic PDEs on the torus with
divergence-free transport noise."""

__version__ = "0.1.0"
