"""Outlier-based pruning of retrieved RAG context."""
