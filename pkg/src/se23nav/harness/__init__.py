"""Scenario configuration, Monte Carlo execution, log replay and CLI."""
