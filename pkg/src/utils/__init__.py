"""Helpers shared by the handlers: config overrides and output files."""
