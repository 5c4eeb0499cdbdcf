"""Hybrid-rate optimization for RIS-aided networks serving NOMA and AirFL users."""
