"""Adaptive-depth message passing: per-node depth-benefit theory, a
contextual SBM validation harness, and a trainable GNN whose nodes stop
aggregating at individually chosen layers."""

__version__ = "0.1.0"
