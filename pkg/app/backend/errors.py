from typing import Optional


class SeqWarpError(Exception):
    """Base class for every error raised by the engine."""


# Expressions
class ExprError(SeqWarpError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int) -> None:
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UnknownFunctionError(ExprError):
    def __init__(self, name: str, offset: int) -> None:
        super().__init__(f"unknown function '{name}' at offset {offset}")
        self.name = name
        self.offset = offset


class NonConstantExponentError(ExprError):
    def __init__(self, offset: int) -> None:
        super().__init__(f"exponent of '^' must be constant (offset {offset})")
        self.offset = offset


class UnknownVariableError(ExprError):
    def __init__(self, name: str) -> None:
        super().__init__(f"variable '{name}' is not declared")
        self.name = name


class ExprDomainError(ExprError):
    def __init__(self, subexpr: str, reason: str) -> None:
        super().__init__(f"{reason} in '{subexpr}'")
        self.subexpr = subexpr
        self.reason = reason


# Charts and metrics
class GeometryError(SeqWarpError):
    pass


class ChartDefinitionError(GeometryError):
    pass


class DegenerateMetricError(GeometryError):
    pass


class PointOutsideBoxError(GeometryError):
    pass


# Assembly
class AssemblyError(SeqWarpError):
    pass


class NameCollisionError(AssemblyError):
    pass


class ForbiddenCoordinateError(AssemblyError):
    pass


class WarpingPositivityError(AssemblyError):
    pass


class WrongBlockError(SeqWarpError):
    pass


class FieldModeError(SeqWarpError):
    pass


# Integration
class IntegrationError(SeqWarpError):
    pass


class StepUnderflowError(IntegrationError):
    pass


class ManifestError(SeqWarpError):
    def __init__(self, message: str, path: Optional[str] = None) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
