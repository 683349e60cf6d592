"""Unit tests for neural-globopt package."""
