"""Samplers for the fusion model and its diagnostics."""
