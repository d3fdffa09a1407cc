"""Exception types shared across the package."""


class RfisimError(Exception):
    """Base class for all structured errors raised by this package."""


class DimensionMismatchError(RfisimError):
    """Operands live in spaces of different dimension."""

    def __init__(self, expected, got, what="vector"):
        self.expected = expected
        self.got = got
        super().__init__(f"dimension mismatch: {what} has dim {got}, expected {expected}")


class InvalidSpecError(RfisimError):
    """A set, function, distribution or measure fails its construction invariants."""


class SolverError(RfisimError):
    """A linear-algebra or transport subproblem could not be solved."""


class NumericBlowupError(RfisimError):
    """An iterate left the representable range during simulation."""

    def __init__(self, chain, step):
        self.chain = chain
        self.step = step
        super().__init__(f"non-finite iterate at chain {chain}, step {step}")


class SupportCapError(RfisimError):
    """Combined support size exceeds the configured cap; subsample first."""


class GaugeWindowError(RfisimError):
    """A linear gauge constant lies outside its admissible window."""

    def __init__(self, kappa, lo, hi):
        self.kappa = kappa
        self.lo = lo
        self.hi = hi
        super().__init__(
            f"gauge constant kappa={kappa:.6g} outside admissible window "
            f"[{lo:.6g}, {hi if hi == float('inf') else format(hi, '.6g')}]"
        )


class ConfigError(RfisimError):
    """A scenario configuration document is malformed or out of range."""

    def __init__(self, message, field=None):
        self.field = field
        prefix = f"config field '{field}': " if field else "config: "
        super().__init__(prefix + message)


class InconclusiveError(RfisimError):
    """A diagnostic had too little usable data to reach a verdict."""
