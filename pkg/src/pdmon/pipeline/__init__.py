"""Ingestion, monitoring runs, simulation and the command-line interface."""
