"""Exception types shared across the toolkit."""


class PetalkitError(Exception):
    """Base class for all toolkit errors."""


class ParseError(PetalkitError):
    """Malformed germ-spec text. Carries line/column of the offending token."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", col {column}" if column is not None else "") + ")"
        super().__init__(message + loc)


class SpecError(PetalkitError):
    """Syntactically valid germ-spec that violates a semantic constraint."""


class DomainError(PetalkitError):
    """Argument outside an operation's stated domain."""


class NotParabolic(PetalkitError):
    """Multiplier is not a detectable root of unity."""


class IdentityIterate(PetalkitError):
    """Some iterate of the germ is the identity through the truncation order."""


class CoverageError(PetalkitError):
    """Flower coverage certification failed. Carries the uncovered samples."""

    def __init__(self, message, uncovered=()):
        self.uncovered = list(uncovered)
        super().__init__(message)


class InverseError(PetalkitError):
    """Newton inversion of the half-plane map failed to converge."""


class ConvergenceError(PetalkitError):
    """Iteration budget exhausted before the Cauchy criterion. Carries the
    partial tail of increments."""

    def __init__(self, message, tail=()):
        self.tail = list(tail)
        super().__init__(message)


class NotQuasiconformal(PetalkitError):
    """sup |mu| >= 1 on the sampled grid. Carries the argmax cell."""

    def __init__(self, message, cell=None):
        self.cell = cell
        super().__init__(message)


class Incompatible(PetalkitError):
    """Two germs fail the necessary conditions for topological conjugacy.
    Carries the name of the differing field."""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(message)


class HornFitError(PetalkitError):
    """Series fit of the transition map exceeded its residual tolerance."""


class SeamError(PetalkitError):
    """Conjugation seam mismatch across the fundamental segment."""


class GlueError(PetalkitError):
    """Blended glue map failed injectivity or containment checks."""


class RenderError(PetalkitError):
    """Report carries no renderable grid."""
