"""Numeric tolerances shared by every module."""

# Feasibility tolerance, absolute seconds or joules.
FEAS_TOL = 1e-6

# Guard for floating-point comparisons (convexity checks, pricing, PWL dominance).
NUM_TOL = 1e-9

# Default number of linear pieces per energy function.
DEFAULT_SEGMENTS = 10
