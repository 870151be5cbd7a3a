"""Desk-scale signal-integration pipeline: text-pair embeddings, a
heterogeneous-graph link-prediction GNN with adaptive neighbor sampling,
versioned embedding lifecycle and a digest-gated serving path."""

__version__ = "0.1.0"
