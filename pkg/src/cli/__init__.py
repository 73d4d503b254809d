"""
Command-line interface for kernelvis.
"""
