"""Exception hierarchy.

Every error carries a short machine-readable ``code`` plus an optional
``details`` dict so the CLI can emit JSON diagnostics without knowing the
concrete class.
"""


class CrystalWulffError(Exception):
    code = "Error"

    def __init__(self, message="", **details):
        super().__init__(message or self.code)
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": str(self)}
        out.update({k: _jsonable(v) for k, v in self.details.items()})
        return out


def _jsonable(v):
    try:
        import numpy as np

        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, np.generic):
            return v.item()
    except ImportError:  # pragma: no cover
        pass
    return v


class ComputationError(CrystalWulffError):
    """Base for numerical failures (CLI exit status 2)."""


class ValidationError(CrystalWulffError, ValueError):
    """Bad input data (CLI exit status 1)."""

    code = "ValidationError"


class Unbounded(ComputationError):
    code = "Unbounded"


class EmptyInterior(ComputationError):
    code = "EmptyInterior"


class RedundantSigma(ValidationError):
    code = "RedundantSigma"


class VanishingFacet(ComputationError):
    code = "VanishingFacet"

    def __init__(self, index, message=""):
        super().__init__(message or f"facet {index} vanished", index=int(index))
        self.index = int(index)


class OriginArgument(ValidationError):
    code = "OriginArgument"


class NonManifoldBoundary(ComputationError):
    code = "NonManifoldBoundary"


class NotClose(ComputationError):
    code = "NotClose"


class NoConvergence(ComputationError):
    code = "NoConvergence"


class AmbiguousMatch(ComputationError):
    code = "AmbiguousMatch"


class NoDescent(ComputationError):
    code = "NoDescent"
