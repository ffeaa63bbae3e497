"""Adaptive virtual element solver for reaction-convection-diffusion problems on polygonal meshes."""

__version__ = "0.1.0"
