"""Utility functions for the hybrid-rate package."""
