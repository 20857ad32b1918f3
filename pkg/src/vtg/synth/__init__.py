"""Synthetic observations: depth rendering, tactile probing, shape corpora."""
