"""Desk-scale molecule generation toolkit.

Learns a latent representation of molecules with a sequence VAE, fits
latent-space attribute predictors, generates candidates by conditional
latent-space rejection sampling, and screens the results.
"""

__version__ = "0.1.0"
