"""Prototype cross-attention multimodal fusion for pathology + genomics, built on a small autodiff core."""

__version__ = "0.1.0"
