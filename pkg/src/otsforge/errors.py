"""Exception hierarchy shared by all otsforge modules."""


class OtsError(Exception):
    """Base class for every error raised by this package."""


# ---------------------------------------------------------------- case parsing


class MissingTable(OtsError):
    """A required MATPOWER table (bus/gen/branch/gencost/baseMVA) is absent."""

    def __init__(self, table: str):
        self.table = table
        super().__init__(f"case text is missing required table '{table}'")


class MalformedRow(OtsError):
    """A table row cannot be interpreted; carries the offending line number."""

    def __init__(self, table: str, line_no: int, reason: str):
        self.table = table
        self.line_no = line_no
        self.reason = reason
        super().__init__(f"{table} row at line {line_no}: {reason}")


class UnsupportedCostModel(OtsError):
    """Cost row is not a polynomial of degree <= 2 (model 2, 2 or 3 coefficients)."""

    def __init__(self, reason: str):
        super().__init__(reason)


# ---------------------------------------------------------------- network build


class NoRefBus(OtsError):
    """No bus of type 3 present."""


class DuplicateRefBus(OtsError):
    """More than one bus of type 3 present."""


class NonpositiveThetaBound(OtsError):
    """Global angle bound must be strictly positive."""


# ---------------------------------------------------------------- QP solver


class DimensionMismatch(OtsError):
    """Problem matrices/vectors have inconsistent shapes or a non-symmetric Q."""


class NumericalBreakdown(OtsError):
    """KKT factorization failed even after regularization bumps."""


# ---------------------------------------------------------------- dispatch


class InfeasibleDemand(OtsError):
    """Total demand outside the aggregate generation range."""


class NoIncumbent(OtsError):
    """All-lines-closed DC-OPF is infeasible; exact OTS has no starting incumbent."""


# ---------------------------------------------------------------- diff layer


class InfeasibleForward(OtsError):
    """Relaxed DC-OPF solve did not reach an optimal point; carries the status."""

    def __init__(self, status, message: str = ""):
        self.status = status
        super().__init__(message or f"relaxed DC-OPF forward pass ended with status {status}")


class SingularKkt(OtsError):
    """Adjoint KKT solve failed even with regularization; carries a condition estimate."""

    def __init__(self, condition_estimate: float):
        self.condition_estimate = condition_estimate
        super().__init__(
            f"KKT system numerically singular (condition estimate {condition_estimate:.3e})"
        )


class StaleSolution(OtsError):
    """Solution passed to backward() does not match the given network/demand/switch state."""


# ---------------------------------------------------------------- neural


class StaleCache(OtsError):
    """backprop() called with a cache produced by a different forward/parameter set."""


# ---------------------------------------------------------------- scenarios


class YieldTooLow(OtsError):
    """Feasible-sample yield too low: draw budget exhausted before reaching the target."""

    def __init__(self, kept: int, target: int, drawn: int):
        self.kept = kept
        self.target = target
        self.drawn = drawn
        super().__init__(
            f"only {kept}/{target} feasible samples after {drawn} draws; "
            "demand range too aggressive for this network"
        )


# ---------------------------------------------------------------- trainer


class AllForwardsInfeasible(OtsError):
    """An entire training epoch produced no usable gradient."""


class FallbackAlsoInfeasible(OtsError):
    """Even the all-lines-closed fallback topology is infeasible for this demand."""


class FingerprintMismatch(OtsError):
    """Dataset was generated for a different network than the one supplied."""
