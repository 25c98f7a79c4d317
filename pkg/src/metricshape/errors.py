"""Exception types shared across the package.

All of these derive from ValueError so callers who do not care about the
distinction can catch one thing; the CLI maps specific classes to exit
codes.
"""


class ShapeMismatchError(ValueError):
    """Grid / cloud / list dimensions do not agree."""


class InvalidDepthError(ValueError):
    """A depth value is non-positive or non-finite."""


class InvalidIntrinsicsError(ValueError):
    """Intrinsic parameters violate their invariants (e.g. focal <= 0)."""


class DegenerateFieldError(ValueError):
    """An incidence field does not determine intrinsics (rank-deficient fit)."""


class DegenerateConstraintsError(ValueError):
    """Distance constraints leave some intrinsic parameters unobservable."""


class InfeasibleConstraintError(ValueError):
    """A distance constraint cannot be realized by any camera (L < |d1 - d2|)."""


class EmptyOverlapError(ValueError):
    """No jointly valid pixels between two depth maps."""


class EmptyCloudError(ValueError):
    """A point cloud operation received an empty cloud."""


class DegenerateSceneError(ValueError):
    """The synthetic camera sits inside a scene primitive."""


class SamplingFailureError(RuntimeError):
    """Constraint sampling could not satisfy its requirements."""


class InvalidInitializationError(ValueError):
    """Refinement started from a state with a non-finite loss."""


class DocumentError(ValueError):
    """A structured text document is malformed (names the offending part)."""
