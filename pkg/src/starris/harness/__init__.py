"""Scenario configuration, simulation loop, metrics and CLI."""
