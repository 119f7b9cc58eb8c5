"""Exception types shared across the package."""


class PhyloTraitError(Exception):
    """Base class for all package-specific errors."""


class NewickError(PhyloTraitError, ValueError):
    """Malformed Newick input (syntax, polytomy, missing branch length, ...)."""


class DataError(PhyloTraitError, ValueError):
    """Invalid trait data, alignment failure, or violated data precondition."""


class ConfigError(PhyloTraitError, ValueError):
    """Invalid run configuration (missing field, bad value, bad TOML)."""


class NumericalError(PhyloTraitError, ArithmeticError):
    """Numerical failure: non-SPD matrix where SPD is required, ill conditioning."""


class ContractViolation(PhyloTraitError, RuntimeError):
    """API misuse that the library detects explicitly (e.g. stale messages)."""
