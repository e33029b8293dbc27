"""Exception types."""


class NCFTAPError(Exception):
    """Base class for package errors."""


class StructuralError(NCFTAPError, ValueError):
    """Objects do not fit together (shape mismatch, foreign filtration, invalid subalgebra)."""


class DomainError(NCFTAPError, ValueError):
    """An argument lies outside the operation's domain."""
