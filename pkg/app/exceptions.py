class PlannerError(Exception):
    """Base class for every error raised by the planning library."""


class InvalidBeliefError(PlannerError):
    pass


class DomainModelError(PlannerError):
    """A domain returned an empty or non-normalized transition/observation row."""


class ZeroProbabilityObservationError(PlannerError):
    pass


class GoalBeliefError(PlannerError):
    """An operation that requires a non-goal belief received a goal belief."""


class PolicyExtractionError(PlannerError):
    """The greedy policy reaches a belief with no evaluated best action."""


class PolicyDivergenceError(PlannerError):
    """Some policy node cannot reach a goal belief."""


class NoValidPolicyError(PlannerError):
    pass


class UnsupportedDomainError(PlannerError):
    pass


class InsufficientBudgetError(PlannerError):
    pass


class FixtureError(PlannerError):
    """Map or world fixture failed validation."""


class ConfigError(PlannerError):
    pass


class UnknownSuiteError(PlannerError):
    pass
