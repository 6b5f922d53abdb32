"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations


class MicromotionError(Exception):
    """Base class; ``stage`` and ``context`` are filled in by the runner."""

    def __init__(self, message: str, **context):
        super().__init__(message)
        self.context = dict(context)


class GapClosing(MicromotionError):
    """A gap needed for band selection or flattening has (nearly) closed."""


class BranchAmbiguity(MicromotionError):
    """An eigenphase sits on the logarithm branch cut at +-pi."""


class NonConvergence(MicromotionError):
    """Adaptive time stepping hit its step cap before converging."""


class NonzeroFlux(MicromotionError):
    """The current field carries net flux, so the Hopf integral is undefined."""


class ResolutionError(MicromotionError):
    """The grid is too coarse, or the preimage is degenerate."""


class OpenCurve(ResolutionError):
    """Preimage tracing failed to close a curve."""


class CurvesTooClose(MicromotionError):
    pass


class NonContractibleCurve(MicromotionError):
    """The Gauss linking formula needs null-homologous input."""


class NoEdgeMode(MicromotionError):
    pass


class ConfigInvalid(MicromotionError):
    pass


class UnknownScenario(ConfigInvalid):
    pass
