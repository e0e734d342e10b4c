"""Canned data for ritz_sgp tests."""
