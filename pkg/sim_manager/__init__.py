"""Synthetic data generation for replicate studies."""
