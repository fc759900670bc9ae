"""Exception types shared across the package."""


class SymmatchError(Exception):
    """Base class for all package errors."""


class DimensionError(SymmatchError, ValueError):
    """Operand shapes are incompatible."""


class ContractError(SymmatchError, ValueError):
    """A call violated an API precondition."""


class SingularityError(SymmatchError, ArithmeticError):
    """A linear system could not be factorized."""


class NonFiniteError(SymmatchError, FloatingPointError):
    """A NaN or Inf appeared in a computed value."""


class ConnectivityError(SymmatchError, ValueError):
    """A neighbourhood graph is not connected."""

    def __init__(self, component_sizes):
        self.component_sizes = list(component_sizes)
        super().__init__(
            f"graph is disconnected: {len(self.component_sizes)} components of sizes {self.component_sizes}"
        )


class SizeError(SymmatchError, ValueError):
    """A requested count exceeds what the data provides."""


class DegenerateSampleError(SymmatchError, ValueError):
    """Generated partial shape lost too much of the surface."""


class ParseError(SymmatchError, ValueError):
    """Malformed input file."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class IncompatibleError(SymmatchError, ValueError):
    """Checkpoint or request is incompatible (format version, embedding size)."""
