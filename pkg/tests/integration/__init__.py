"""Integration tests for neural-globopt."""
