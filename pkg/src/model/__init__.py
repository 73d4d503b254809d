"""Backbone, decoders, the composed network and checkpoints."""
