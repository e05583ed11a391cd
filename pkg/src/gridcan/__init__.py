"""Continuous attractor networks over sparse block codes with periodic
receptive fields: embeddings, kernels, weight construction, block-WTA
dynamics, comparison rate models and experiment protocols."""

__version__ = "0.1.0"
