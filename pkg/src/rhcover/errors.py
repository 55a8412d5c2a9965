"""Exception hierarchy.

Every error raised by the package derives from :class:`CoverageError`; each
carries an ``exit_code`` used by the command-line interface.
"""


class CoverageError(Exception):
    exit_code = 1


# geometry
class GeometryError(CoverageError):
    exit_code = 10


class DegenerateFacet(GeometryError):
    pass


class OffPlane(GeometryError):
    pass


class DegenerateHull(GeometryError):
    pass


class InvalidRadius(GeometryError):
    pass


class MeshFormatError(GeometryError):
    pass


# agent model
class InputOutOfRange(CoverageError):
    exit_code = 11


# visibility
class OutOfEnvironment(CoverageError):
    exit_code = 12


class FormatError(CoverageError):
    exit_code = 13


class StaleTable(CoverageError):
    exit_code = 14


# milp / planner
class ModelError(CoverageError):
    exit_code = 20


class NoTargetRemaining(CoverageError):
    exit_code = 21


class PlanInfeasibleHint(CoverageError):
    exit_code = 22


class PlanInfeasible(CoverageError):
    exit_code = 23


class DecodeError(CoverageError):
    exit_code = 24


# scenario / mission
class ScenarioError(CoverageError):
    exit_code = 30

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class VerificationFailed(CoverageError):
    exit_code = 40


class MissionIncomplete(CoverageError):
    exit_code = 31
