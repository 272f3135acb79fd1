"""Exception hierarchy shared by all modules."""


class StabError(Exception):
    """Base class for every error raised by krstab."""


class DegenerateMetricError(StabError, ValueError):
    pass


class JetOrderError(StabError, ValueError):
    pass


class TensorKindError(StabError, TypeError):
    pass


class NotOneOneError(TensorKindError):
    """A 2-form failed the (1,1) test; ``defect`` holds the offending norm."""

    def __init__(self, defect: float):
        super().__init__(f"2-form is not of type (1,1): defect norm {defect:.3e}")
        self.defect = defect


class UnknownFixtureError(StabError, KeyError):
    pass


class QuadratureError(StabError, RuntimeError):
    pass


class ConstructionError(StabError, RuntimeError):
    def __init__(self, message: str, trace=()):
        super().__init__(message)
        self.trace = list(trace)


class OracleError(StabError, RuntimeError):
    pass


class DomainError(StabError, ValueError):
    pass


class DimensionError(StabError, ValueError):
    pass


class SpectralError(StabError, RuntimeError):
    pass


class SchemaError(StabError, ValueError):
    pass
