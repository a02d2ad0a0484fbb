"""
Homogeneous diffusion inpainting with multilevel optimised restricted
additive Schwarz solvers.
"""

__version__ = '1.0.0'
