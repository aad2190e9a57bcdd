"""Exception types shared across the package.

The CLI maps each class onto a process exit code.
"""


class UsageError(ValueError):
    """Bad arguments: wrong shapes, empty vectors, invalid indices or config."""


class ModelError(ValueError):
    """An MDP, policy or induced Markov chain fails validation."""


class ConvergenceError(RuntimeError):
    """An iterative solver stopped before reaching its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


class BoundViolation(AssertionError):
    """The logarithmic growth envelope on span(Q_k) was exceeded."""

    def __init__(self, k, span_q, bound):
        super().__init__(f"span(Q_k) = {span_q!r} exceeds b_k = {bound!r} at k = {k}")
        self.k = k
        self.span_q = span_q
        self.bound = bound


class RateFitError(ValueError):
    """A convergence-rate fit was requested on unusable data."""
