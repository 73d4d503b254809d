"""
Run registry.
"""
