"""Convex backend and the power, receive-scalar and reflection solvers."""
