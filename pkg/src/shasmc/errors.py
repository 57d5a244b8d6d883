"""Exception types shared across the checker.

Parse-time problems carry a source position; semantic and runtime problems
carry enough context (names, component indices, state) to render a useful
diagnostic without a traceback.
"""

from __future__ import annotations


class ShasmcError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(ShasmcError):
    """Malformed model or query text."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        super().__init__(f"{line}:{col}: {message}" if line else message)


class UnresolvedIdentifier(ParseError):
    """Reference to a name that is not declared."""


class DuplicateDeclaration(ParseError):
    """The same name declared twice in one scope."""


class BadBound(ParseError):
    """Run bound of a query is malformed."""


class ModelError(ShasmcError):
    """Semantic problem in a model (detected after parsing)."""


class ArityError(ModelError):
    """Template instantiated with the wrong number of arguments."""


class CompositionError(ModelError):
    """Components cannot be composed into a closed network."""


class SharedVariable(CompositionError):
    def __init__(self, var: str, comp_a: str, comp_b: str):
        self.var, self.comp_a, self.comp_b = var, comp_a, comp_b
        super().__init__(
            f"continuous variable '{var}' is owned by both '{comp_a}' and '{comp_b}'"
        )


class OutputClash(CompositionError):
    def __init__(self, action: str, comp_a: str, comp_b: str):
        self.action, self.comp_a, self.comp_b = action, comp_a, comp_b
        super().__init__(
            f"action '{action}' is output by both '{comp_a}' and '{comp_b}'"
        )


class UncoveredAction(CompositionError):
    def __init__(self, action: str):
        self.action = action
        super().__init__(f"no component outputs action '{action}'")


class DomainError(ShasmcError):
    """Arithmetic outside its domain: log/sqrt of a negative, division by zero."""


class SimulationError(ShasmcError):
    """Runtime failure while generating a run."""


class NonFinite(SimulationError):
    """A state component became infinite or NaN during integration."""


class InvariantAlreadyViolated(SimulationError):
    """A location invariant is breached beyond the accepted integration drift."""

    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


class ZenoAbort(SimulationError):
    """Run aborted by the Zeno heuristic: too many transitions without time progress."""

    def __init__(self, message: str, state=None):
        self.state = state
        super().__init__(message)


class MaxRunsExceeded(ShasmcError):
    """A sequential test failed to reach a decision within the run cap."""

    def __init__(self, message: str, runs: int = 0):
        self.runs = runs
        super().__init__(message)


class EmptySamples(ShasmcError):
    """Histogram requested over an empty sample set."""


class UnknownAtom(ShasmcError):
    """A formula references an expression that was not observed in the run."""
