"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid ensemble spec, plan or config document.

    ``problems`` lists every violated field so callers can report them all
    at once instead of failing on the first one.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class SpectralError(ArithmeticError):
    """Eigensolver or linear solve failure for a given sample."""

    def __init__(self, message, seed=None):
        self.seed = seed
        if seed is not None:
            message = f"{message} (sample seed {seed})"
        super().__init__(message)


class ConsistencyError(RuntimeError):
    """An exact algebraic identity failed beyond tolerance; indicates a bug."""


class FitError(ValueError):
    """Envelope or slope fit on degenerate data."""
