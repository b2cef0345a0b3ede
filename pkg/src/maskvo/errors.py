"""Exception types shared across the package."""


class MaskVOError(Exception):
    """Base class for package errors."""


class DegenerateMaskError(MaskVOError):
    """The vehicle-center pixel is not free; the segmentation is unusable."""


class ScanMatchError(MaskVOError):
    """Scan matching failed (empty scans, too few correspondences, degenerate geometry)."""


class EstimationError(MaskVOError):
    """Robust estimation failed (too few correspondences or rank-deficient system)."""


class DegenerateSampleError(EstimationError):
    """A minimal solver sample was degenerate (coincident source points)."""


class RansacError(EstimationError):
    """No hypothesis reached the minimum inlier support."""


class EvaluationError(MaskVOError):
    """Trajectory evaluation could not be performed on the given inputs."""


class ConfigError(MaskVOError):
    """Invalid configuration file or option (CLI exit code 1)."""


class DatasetError(MaskVOError):
    """Missing or corrupt dataset file (CLI exit code 2)."""
