"""Comparison pipelines: thresholded linear regression and maximum-confidence ordinal fits."""
