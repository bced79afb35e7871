"""Batch front-end over the numerical engine."""
