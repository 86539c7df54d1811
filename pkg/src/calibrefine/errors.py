"""Exception types shared across the calibration pipeline."""


class CalibrationError(Exception):
    """Base class for all calibration failures."""


class DegenerateProjection(CalibrationError):
    """A point maps to (or too close to) the line at infinity."""


class SingularMatrixError(CalibrationError):
    """A matrix failed the non-singularity check."""


class SingularResult(SingularMatrixError):
    """A matrix product came out singular; inputs are likely corrupt."""


class InsufficientPairs(CalibrationError):
    """Fewer correspondences than the operation requires."""


class DegenerateConfiguration(CalibrationError):
    """Correspondences cannot determine a homography (rank-deficient system)."""


class EmptySet(CalibrationError):
    """An operation that needs at least one element got none."""


class ConsensusFailure(CalibrationError):
    """RANSAC could not find an inlier set large enough to trust."""

    def __init__(self, message: str, n_pairs: int = 0, best_inliers: int = 0):
        super().__init__(message)
        self.n_pairs = n_pairs
        self.best_inliers = best_inliers


class OutOfOrderFrame(CalibrationError):
    """Frame ids must be strictly increasing within a stream."""


class NonConvergenceWarning(UserWarning):
    """The damped least-squares loop hit its iteration cap; best iterate returned."""
