"""Exception hierarchy shared by all noise_loom modules."""


class NoiseLoomError(Exception):
    """Base class for domain errors (CLI exit code 1)."""


class NonHermitianInput(NoiseLoomError, ValueError):
    def __init__(self, deviation, what="matrix"):
        self.deviation = float(deviation)
        super().__init__(f"{what} is not Hermitian (max |A - A^H| = {self.deviation:.3e})")


class InvalidParameter(NoiseLoomError, ValueError):
    pass


class DimensionMismatch(NoiseLoomError, ValueError):
    pass


class DegenerateDistribution(NoiseLoomError):
    pass


class BudgetExceeded(NoiseLoomError):
    def __init__(self, required, budget):
        self.required = int(required)
        self.budget = int(budget)
        super().__init__(f"table needs {self.required} entries, budget is {self.budget}")


class GridMismatch(NoiseLoomError, ValueError):
    pass


class IndexOutOfRange(NoiseLoomError, IndexError):
    pass


class InsufficientData(NoiseLoomError, ValueError):
    pass


class OutOfDomain(NoiseLoomError, ValueError):
    pass


class QuadratureBudget(NoiseLoomError):
    pass


class InvalidRatio(NoiseLoomError, ValueError):
    pass


class FormatError(Exception):
    """Malformed input file (CLI exit code 2)."""
