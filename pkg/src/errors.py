"""Exceptions raised by qcert and their message templates."""

from typing import Optional


class QCertError(Exception):
    """Base class for every error raised by qcert."""

    pass


# Error message templates for consistent reports
ERROR_SPACE_MISMATCH = "State space mismatch: {left} vs {right}"
ERROR_MISSING_TAIL = """Kernel rows carry tail mass (max {tail:.3g}) outside the window.
The function needs a declared sup bound for its values beyond the window.
Tip: pass f_sup=... (for indicators of window sets use f_sup=0)."""
ERROR_INCOMPATIBLE_TAIL = """Row {row} has tail mass {tail:.3g} but the weight has no tail model.
Weighted norms on a windowed space need w extrapolated beyond x_max.
Tip: build the weight with WeightFn.geometric(...) or give tail_ratio=z."""
ERROR_SIZE_LIMIT = "{what} needs {size} states/paths, limit is {limit}"
ERROR_INCONCLUSIVE = """{what}: interval {interval} is too wide to decide.
Suggested window: --window {window}"""


class SpaceMismatch(QCertError):
    """Operands live on different state spaces."""

    pass


class MissingTailBound(QCertError):
    """A tail contribution is needed but f has no sup bound."""

    pass


class IncompatibleTail(QCertError):
    """Row support leaves the window and the weight cannot be extrapolated."""

    pass


class DoeblinViolated(QCertError):
    """Condition (D) fails: a ν-small set carries too much Q^ℓ mass."""

    def __init__(self, message: str, row: int, witness: tuple[int, ...], mass: float):
        super().__init__(message)
        self.row = row
        self.witness = witness
        self.mass = mass


class NotDominated(QCertError):
    """Q^ℓ − T has a negative entry."""

    def __init__(self, message: str, x: int, y: int, value: float):
        super().__init__(message)
        self.x = x
        self.y = y
        self.value = value


class NotUniformlyIntegrable(QCertError):
    """Densities do not pass the uniform-integrability tail check."""

    pass


class Divergent(QCertError):
    """A generating function or Neumann series does not converge."""

    pass


class Inconclusive(QCertError):
    """Interval too wide to decide; carries the suggested window size."""

    def __init__(self, message: str, suggested_window: Optional[int] = None):
        super().__init__(message)
        self.suggested_window = suggested_window


class SizeLimit(QCertError):
    """Dense materialization or enumeration exceeds the configured size."""

    pass


class NotMarkov(QCertError):
    """A kernel claimed to be Markov has a row mass different from 1."""

    pass


class NotFound(QCertError):
    """Certificate synthesis failed; carries the obstruction."""

    def __init__(self, message: str, obstruction: str):
        super().__init__(message)
        self.obstruction = obstruction


class NoConvergence(QCertError):
    """Stationary solve left a residual above tolerance."""

    pass


class EnvelopeViolated(QCertError):
    """The fitted geometric envelope fails at (n, f, x)."""

    def __init__(self, message: str, n: int, f_index: int, x: int):
        super().__init__(message)
        self.n = n
        self.f_index = f_index
        self.x = x


class NotAKernel(QCertError):
    """The weight function u does not define a Markov kernel."""

    pass


class SpecFileError(QCertError):
    """Kernel spec file could not be parsed; anchored at line or field."""

    def __init__(self, message: str, line: Optional[int] = None, field: Optional[str] = None):
        anchor = []
        if line is not None:
            anchor.append(f"line {line}")
        if field is not None:
            anchor.append(f"field '{field}'")
        prefix = f"{', '.join(anchor)}: " if anchor else ""
        super().__init__(prefix + message)
        self.line = line
        self.field = field
