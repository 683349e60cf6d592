"""Tests for neural-globopt."""
