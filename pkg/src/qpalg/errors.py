"""Exception hierarchy for the QPAlg workbench."""

from __future__ import annotations


class QpalgError(Exception):
    """Base class for every error raised by this package."""

    #: labels leading from the initial state to the failing one, when known
    path: tuple = ()


# -- front end ---------------------------------------------------------------


class ParseError(QpalgError):
    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line else ""
        super().__init__(where + message)


class SyntaxError(ParseError):  # noqa: A001 - mirrors the grammar error name
    def __init__(self, message: str, line: int = 0, col: int = 0, expected=()):
        self.expected = tuple(expected)
        if self.expected:
            message = f"{message} (expected {', '.join(self.expected)})"
        super().__init__(message, line, col)


class ScopeError(ParseError):
    def __init__(self, var: str, message: str = "", line: int = 0, col: int = 0):
        self.var = var
        super().__init__(message or f"variable {var!r} is not declared", line, col)


class UnknownDefinition(ScopeError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        super().__init__(name, f"process {name!r} is not defined", line, col)


class DuplicateDefinition(ParseError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        self.name = name
        super().__init__(f"process {name!r} is defined twice", line, col)


class UnknownGateOrOperator(ParseError):
    def __init__(self, name: str, line: int = 0, col: int = 0):
        self.name = name
        super().__init__(f"unknown unitary or observable {name!r}", line, col)


# -- quantum backend ---------------------------------------------------------


class UnknownQubit(QpalgError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"qubit {name!r} is not in the register")


class DuplicateTarget(QpalgError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"qubit {name!r} targeted twice")


# -- contexts ----------------------------------------------------------------


class ContextError(QpalgError):
    pass


class DuplicateBinding(ContextError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} declared twice")


class EmptyStack(ContextError):
    def __init__(self):
        super().__init__("no scope to exit")


class NotDeclared(ContextError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"variable {name!r} is not declared")


class WrongType(ContextError):
    def __init__(self, name, expected):
        self.name = name
        self.expected = expected
        super().__init__(f"variable {name!r} is not of type {expected}")


class AlreadyAttached(ContextError):
    def __init__(self, name):
        self.name = name
        super().__init__(f"qubit {name!r} is already in the register")


class BadDistribution(ContextError):
    pass


# -- semantics ---------------------------------------------------------------


class SemanticError(QpalgError):
    pass


class IllScoped(SemanticError):
    def __init__(self, var):
        self.var = var
        super().__init__(f"variable {var!r} is not in scope")


class UndefinedVariable(SemanticError):
    def __init__(self, var):
        self.var = var
        super().__init__(f"classical variable {var!r} has no value")


class UnitaryArityMismatch(SemanticError):
    def __init__(self, name, expected, got):
        super().__init__(f"{name} acts on {expected} qubit(s), got {got}")


class QubitNotInRegister(SemanticError):
    def __init__(self, var):
        self.var = var
        super().__init__(f"qubit {var!r} is used before being initialized")


class InvalidQubitInit(SemanticError):
    def __init__(self, value):
        self.value = value
        super().__init__(f"cannot initialize a qubit with value {value} (must be 0 or 1)")


class InvocationError(SemanticError):
    pass


class ArityMismatch(InvocationError):
    pass


class TypeMismatch(InvocationError):
    pass


class DuplicateArgument(InvocationError):
    pass


# -- graphs and equivalence --------------------------------------------------


class TruncatedGraph(QpalgError):
    pass


class ContractionViolated(QpalgError):
    pass


class SingularSystem(QpalgError):
    pass
