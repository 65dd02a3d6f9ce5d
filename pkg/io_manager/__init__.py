"""Run configuration, CSV tables and the workflows behind each CLI mode."""
