"""Error taxonomy shared by all modules."""


class MixLabError(Exception):
    """Base class for all library errors."""


class InvalidMeasure(MixLabError):
    """A discrete measure violates its invariants (weights, duplicate atoms)."""


class MismatchedSupportSize(MixLabError):
    """Two measures with different atom counts where equal counts are required."""


class InvalidParameter(MixLabError):
    """A parameter lies outside its validity region or violates a precondition."""


class MidpointOutsideDomain(MixLabError):
    """Natural-parameter midpoint left the exponential family's domain."""


class QuadratureNonConvergence(MixLabError):
    """Adaptive quadrature failed to reach the requested accuracy."""


class NonDifferentiablePoint(MixLabError):
    """Density gradient requested on a support boundary."""


class DegenerateXi(MixLabError):
    """Beta-pushforward mixing fraction at a value where the moment map degenerates."""


class LengthMismatch(MixLabError):
    """Sequence length does not match the product model's length."""


class BudgetExceeded(MixLabError):
    """Requested computation refused: it cannot meet its target within budget."""


class RootBracketingFailed(MixLabError):
    """A guaranteed sign change was not found numerically (inputs near-degenerate)."""


class InvalidPath(MixLabError):
    """A perturbation path left the parameter box for some step in the grid."""


class AllProposalsRejected(MixLabError):
    """MCMC diagnostic: no proposal accepted within the configured window."""


class ConvergenceError(MixLabError):
    """An iterative routine failed to converge."""


class SchemaError(MixLabError):
    """A configuration document failed validation.

    The message names the offending field path.
    """

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")
