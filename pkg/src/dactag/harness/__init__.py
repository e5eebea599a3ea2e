"""Evaluation, persistence, configuration and the command line."""
