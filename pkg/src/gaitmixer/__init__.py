"""Skeleton gait embeddings: per-frame joint attention followed by large-kernel temporal convolution."""

__version__ = "0.1.0"
