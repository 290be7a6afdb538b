"""Exception hierarchy shared by all simulator modules."""


class FedsimError(Exception):
    """Base class for every error raised by fedsim."""


# topology
class InvalidCoordinate(FedsimError, ValueError):
    pass


class InvalidSpeed(FedsimError, ValueError):
    pass


# infrastructure
class InvalidResources(FedsimError, ValueError):
    pass


class WrongNodeRole(FedsimError):
    pass


class EmptyDatacenter(FedsimError):
    pass


class CapacityExceeded(FedsimError):
    pass


class UnknownVm(FedsimError, KeyError):
    pass


# transformation
class NoFittingTemplate(FedsimError):
    pass


class PlacementInfeasible(FedsimError):
    """Raised when a bundle cannot be placed on any compute node.

    ``bundle_id`` names the offending bundle and ``residual`` maps each
    compute node id to its residual capacity at the time of failure.
    """

    def __init__(self, bundle_id, residual):
        self.bundle_id = bundle_id
        self.residual = dict(residual)
        parts = ", ".join(f"{n}={r}" for n, r in self.residual.items())
        super().__init__(f"bundle {bundle_id!r} does not fit; residual: {parts}")


class MissingStorageAssignment(FedsimError):
    pass


# federation
class NotAMember(FedsimError):
    pass


class UnknownContract(FedsimError, KeyError):
    pass


class InvalidTransition(FedsimError):
    pass


# scheduler
class ServiceUnavailable(FedsimError):
    pass


class BudgetBreach(FedsimError):
    pass


class NoActiveContract(FedsimError):
    pass


# simengine
class InvalidShape(FedsimError, ValueError):
    pass


# harness
class InvalidChecklist(FedsimError, ValueError):
    pass


class ScenarioError(FedsimError):
    """A scenario failed validation; ``violations`` lists every problem."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))
