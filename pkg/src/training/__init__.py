"""Losses, matching, optimizer and the training loop."""
