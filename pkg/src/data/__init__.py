"""Synthetic clips, clip files and evaluation metrics."""
