"""Exception types raised across the package."""


class WulffFlowError(Exception):
    """Base class for all package errors."""


class PositivityError(WulffFlowError):
    """The anisotropy function is not strictly positive."""


class AdmissibilityError(WulffFlowError):
    """``A_gamma`` fails to be positive definite somewhere on the sphere."""

    def __init__(self, node, eigenvalue, margin):
        self.node = int(node)
        self.eigenvalue = float(eigenvalue)
        self.margin = float(margin)
        super().__init__(
            f"A_gamma not positive definite: min eigenvalue {self.eigenvalue:.6g} "
            f"at node {self.node} (margin {self.margin:g})"
        )


class ConvexityError(WulffFlowError):
    """The radii matrix of a support body is not positive definite."""

    def __init__(self, node, eigenvalue):
        self.node = int(node)
        self.eigenvalue = float(eigenvalue)
        super().__init__(
            f"body is not strictly convex: radii eigenvalue {self.eigenvalue:.6g} "
            f"at node {self.node}"
        )


class IllConditionedFitError(WulffFlowError):
    """The Steiner polynomial design matrix is too badly conditioned."""


class QUnavailableError(WulffFlowError):
    """The third-derivative tensor was requested but never materialized."""


class StepCollapseError(WulffFlowError):
    """Time step was halved the maximum number of times without success."""


class InsufficientDataError(WulffFlowError):
    """Not enough monitor records to fit a decay rate."""


class MissingRunError(WulffFlowError):
    """Run outputs were not found under the given prefix."""
