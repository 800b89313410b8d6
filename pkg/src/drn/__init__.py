"""Tensor normal priors over stacked task-specific layers for multi-task classification."""
