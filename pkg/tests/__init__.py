"""Tests for the ritz_sgp toolkit."""
