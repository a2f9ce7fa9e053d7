"""Hierarchical audio codec: factorized RVQ-GAN with acoustic, phonetic and lexical tokens."""

__version__ = "0.1.0"
