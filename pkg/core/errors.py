"""
Exception types for the Yang-Mills-Dirac workbench
Every failure path of the library raises one of these so the CLI can map it to an exit code
"""

from typing import Any, Dict, List, Optional


class YMDError(Exception):
    """Base class for all workbench errors"""


class GridMismatchError(YMDError, ValueError):
    """Two fields that must share a grid do not"""


class AdmissibilityError(YMDError, ValueError):
    """Sobolev exponents outside the admissible local well-posedness range"""


class ConfigError(YMDError, ValueError):
    """Invalid or unknown configuration entries"""


class LieAlgebraError(YMDError):
    """A value that must lie in su(2) (or SU(2)) does not"""


class CostGuardError(YMDError):
    """A quadratic-cost evaluator was asked to run on too many modes"""


class GaussProjectionError(YMDError):
    """The Gauss-law fixed point did not converge"""

    def __init__(self, message: str, iterations: int, residual: float):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class PicardError(YMDError):
    """The implicit curl-free velocity equation did not converge"""

    def __init__(self, message: str, iterations: int, increment: float):
        super().__init__(message)
        self.iterations = iterations
        self.increment = increment


class BlowUpError(YMDError):
    """Non-finite values appeared during time stepping"""

    def __init__(self, message: str, step: Optional[int] = None, time: Optional[float] = None):
        super().__init__(message)
        self.step = step
        self.time = time


class GaugeFixError(YMDError):
    """The curl-free removal iteration exceeded its iteration budget"""

    def __init__(self, message: str, history: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.history = history or []


class CheckpointError(YMDError):
    """
    Checkpoint read/write failure

    The ``kind`` attribute is one of ``corrupt``, ``unsupported_version``,
    ``dimension_mismatch`` or ``io``.
    """

    KINDS = ("corrupt", "unsupported_version", "dimension_mismatch", "io")

    def __init__(self, message: str, kind: str = "corrupt"):
        if kind not in self.KINDS:
            raise ValueError(f"Unknown checkpoint error kind: {kind}")
        super().__init__(f"{kind.replace('_', ' ')} checkpoint: {message}")
        self.kind = kind
