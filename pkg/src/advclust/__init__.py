"""Adversarial deep clustering laboratory.

A small numpy-based lab for clustering in the latent space of an MLP
encoder: an adversarial clustering trainer, its closed-form ancestors
(Euclidean clustering loss, two-Gaussian KLD), numerical divergence
oracles, and clustering-accuracy evaluation.
"""

__version__ = "0.1.0"
