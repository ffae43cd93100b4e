"""Numerical tolerances and shared constants. Single source of truth."""

# Max-norm tolerance for "this matrix is unitary".
UNITARY_ATOL = 1e-10

# Max-norm tolerance for "this matrix is Hermitian".
HERMITIAN_ATOL = 1e-12

# Relative Frobenius tolerance for eigendecomposition residuals.
EIGEN_RTOL = 1e-9

# Weyl-coordinate tolerance for CX-class boundaries (prefer the lower count
# when within tolerance of a boundary).
WEYL_ATOL = 1e-9

# Fidelity floor for any resynthesis step (KAK reconstruction, transpile).
RESYNTH_FIDELITY_ATOL = 1e-9

# Angle below which an RZ is dropped during 1q resynthesis.
ANGLE_ATOL = 1e-10

# PRNG: all stochastic draws use numpy's default_rng (PCG64, 64-bit state).
# Seeds are consumed in canonical term order so results are portable across
# runs for a fixed seed.
PRNG_NAME = "numpy-PCG64"
