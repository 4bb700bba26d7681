"""Exception hierarchy shared by all modules."""


class VarsobError(Exception):
    pass


class GridMismatch(VarsobError):
    pass


class InvalidExponent(VarsobError):
    pass


class SupercriticalExponent(VarsobError):
    def __init__(self, cell, gap):
        self.cell = cell
        self.gap = gap
        super().__init__(f"q exceeds p* at cell {cell} (p* - q = {gap:.6g})")


class InvalidParameters(VarsobError):
    pass


class NonConvergence(VarsobError):
    pass


class BallTooSmall(VarsobError):
    pass


class ZeroFunction(VarsobError):
    pass


class InfeasibleProblem(VarsobError):
    pass


class TooFewRecords(VarsobError):
    pass


class BubbleTouchesBoundary(VarsobError):
    pass


class TargetMassInfeasible(VarsobError):
    pass


class OverlappingSupports(VarsobError):
    pass


class MassBudgetExceeded(VarsobError):
    pass


class MissingLocalizedConstant(VarsobError):
    pass


class ConfigParseError(VarsobError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        where = f"line {lineno}: " if lineno is not None else ""
        super().__init__(where + message)


class ConfigValidationError(VarsobError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))
