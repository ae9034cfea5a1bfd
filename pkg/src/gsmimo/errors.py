"""Exception types raised across the package."""

import numpy as np


class InvalidInputError(ValueError):
    """Shape, range or configuration problem with caller-supplied data."""


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """Cholesky factorization met a non-positive pivot."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A zero diagonal entry made a triangular or diagonal system singular."""
