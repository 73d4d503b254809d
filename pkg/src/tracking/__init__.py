"""Online tracking with kernel reuse and association."""
