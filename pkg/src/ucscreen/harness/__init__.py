"""Fixtures, sample generation, oracles and experiment runner."""
