"""Numerical tolerances and default optimizer settings shared across modules."""

# covariance inputs: symmetrize, reject eigenvalues below -PSD_TOL, clip the rest
PSD_TOL = 1e-10
# clip level for the generic characteristic path's square root
SQRT_CLIP = 1e-12

# lifted materialization cap on n_x * (T + 1)
LIFTED_CAP = 4096

EQUIV_TOL = 1e-12
GRAD_CHECK_TOL = 1e-7

# projected descent defaults
ALPHA0 = 1e-10
MAX_ITERS = 500
GRAD_TOL = 1e-8
REL_DECREASE_TOL = 1e-10
STALL_WINDOW = 10
MAX_HALVINGS = 20

# ridge sweep defaults
LAMBDA_GRID_POINTS = 30
LAMBDA_GRID_LO = 1e-6
LAMBDA_GRID_HI = 1e3
