"""Exception types shared across the toolkit."""


class SlotfitError(Exception):
    """Base class for all toolkit errors."""


class InputError(SlotfitError):
    """Malformed or inconsistent input (dimension mismatch, bad value)."""


class InsufficientDataError(SlotfitError):
    """Too few correspondences to estimate a rigid transform."""


class DegenerateConfigurationError(SlotfitError):
    """Source points are (near-)collinear; the rotation is not determined."""


class NoConsensusError(SlotfitError):
    """RANSAC found no consensus set of the required size."""


class SceneLoadError(InputError):
    """A scene fixture failed to load or validate."""
