"""Pseudo-spectral simulation of the 2D Boussinesq system with Kraichnan transport noise."""

__version__ = "0.1.0"
