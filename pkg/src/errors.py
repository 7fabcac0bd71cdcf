"""
Error Types
Exception hierarchy shared by the engine, the CLI and the API
"""
from typing import Optional, Sequence, Tuple


class PBSError(Exception):
    """Base class for all toolkit errors"""

    exit_code = 2


# Input errors (exit 2)

class ConfigurationError(PBSError):
    """Invalid setting value"""


class ParseError(PBSError):
    """Malformed expression text"""

    def __init__(self, message: str, offset: int, text: str = ""):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset
        self.text = text


class UnknownFunction(ParseError):
    """Function name outside the grammar"""


class UnboundVariable(PBSError):
    """A free variable has no value in the bindings"""

    def __init__(self, name: str):
        super().__init__(f"unbound variable '{name}'")
        self.name = name


class JetOrderOverflow(PBSError):
    """Total derivative would exceed the jet order cap"""

    def __init__(self, name: str, max_order: int):
        super().__init__(f"derivative of '{name}' exceeds jet order cap {max_order}")
        self.name = name
        self.max_order = max_order


class GridSpecError(PBSError):
    """Malformed grid specification"""


class UnknownModel(PBSError):
    """Catalog lookup failed"""

    def __init__(self, name: str, available: Sequence[str]):
        super().__init__(f"unknown model '{name}'; available: {', '.join(available)}")
        self.name = name
        self.available = list(available)


class ModelFileError(PBSError):
    """Model definition file is not valid JSON or misses fields"""


class ModelValidationError(PBSError):
    """A model failed one of its load-time checks"""

    def __init__(self, model: str, check: str, detail: str = ""):
        message = f"model '{model}' failed check '{check}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.model = model
        self.check = check


class DegenerateCase(PBSError):
    """F_u = F_{u_x} = 0 while the group constant is nonzero"""


# Check failures (exit 1)

class DegenerateSeed(PBSError):
    """Seed whose eta-map has deficient rank"""

    exit_code = 1


# Numeric failures (exit 3)

class NumericError(PBSError):
    """Base class for numeric failures"""

    exit_code = 3


class DomainViolation(NumericError):
    """Argument outside a function's real domain"""

    def __init__(self, subexpression: str, detail: str = ""):
        message = f"domain violation in '{subexpression}'"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.subexpression = subexpression


class ConvergenceFailure(NumericError):
    """Newton iterations exhausted"""

    def __init__(self, iterations: int, residual: float):
        super().__init__(f"no convergence after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class SingularJacobian(NumericError):
    """Jacobian condition estimate above the limit"""

    def __init__(self, condition: float):
        super().__init__(f"singular Jacobian (condition estimate {condition:.3e})")
        self.condition = condition


class DomainExit(NumericError):
    """Function undefined during a solve or a finite difference"""


class U0Zero(DomainExit):
    """U_0 vanishes so eta is undefined"""


class DepthExhausted(NumericError):
    """Adaptive quadrature did not reach its tolerance"""

    def __init__(self, interval: Tuple[float, float], detail: str = ""):
        message = f"quadrature failed on [{interval[0]:.6g}, {interval[1]:.6g}]"
        if detail:
            message += f": {detail}"
        super().__init__(message)
        self.interval = interval


class BracketFailure(NumericError):
    """No sign change inside the supplied bracket"""


class Singularity(NumericError):
    """Division by a vanishing operator denominator"""


class FUZero(NumericError):
    """F_u vanishes on the integration path"""


class SamplesOutOfDomain(NumericError):
    """Every sample point fell outside the seed's domain"""


class CausticWarning(UserWarning):
    """delta vanishes: the primed-coordinate map is not invertible here"""


def exit_code_for(exc: BaseException, default: Optional[int] = 3) -> int:
    """Map an exception to a CLI exit status"""
    if isinstance(exc, PBSError):
        return exc.exit_code
    return default
