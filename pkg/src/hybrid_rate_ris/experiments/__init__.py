"""Monte Carlo sweeps and plots."""
