"""Exception hierarchy shared by all regsynth modules."""


class RegSynthError(Exception):
    """Base class for every error raised by this package."""


class DomainError(RegSynthError, ValueError):
    """A well-formed request that cannot be satisfied by the data.

    Examples: too few centroids for lattice search, a hole pixel no
    source layer covers, an extrapolation that admits no new objects.
    """


class DslError(RegSynthError, ValueError):
    """Base class for DSL parsing problems."""


class DslSyntaxError(DslError):
    """Token-level parse failure; carries the 1-based source position."""

    def __init__(self, message, line, column):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class DslGrammarError(DslError):
    """Structurally parseable text that violates the language rules.

    Reported separately from syntax errors: empty loop ranges, the i
    variable appearing in a y expression, a modulus below 2, and so on.
    """
