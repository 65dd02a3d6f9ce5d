"""Scoring of fitted chains: RPS, coefficient MSE, coverage and detection."""
