"""Minimum attention model predictive control toolkit."""
