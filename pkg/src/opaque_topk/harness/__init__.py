"""Experiment harness: data generation, scorer plugins, metrics and orchestration."""
