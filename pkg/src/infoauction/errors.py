class MechanismError(Exception):
    """Base class for every error raised by infoauction."""


class ConfigurationError(MechanismError, ValueError):
    """Inputs do not fit together: grid mismatch, incomplete profile, bad shapes."""


class InfeasibilityError(MechanismError):
    """A mean-constrained experiment set is empty or cannot take the requested shape."""


class DomainError(MechanismError, ValueError):
    """An operation was called outside of its domain (empty bids, zero runs, ...)."""


class UnboundedFeeError(MechanismError):
    """The gap graph contains a negative cycle, fees could be extracted without bound."""

    def __init__(self, cycle: list[float], weight: float):
        self.cycle = cycle
        self.weight = weight
        super().__init__(
            f"unbounded fee extraction: gap cycle through s={cycle} has weight {weight:.3e} < 0"
        )


class ArtifactError(MechanismError):
    """An upstream artifact is missing or was produced for another configuration."""

    def __init__(self, stage: str, reason: str):
        self.stage = stage
        super().__init__(f'upstream stage "{stage}" {reason}; run "infoauction {stage}" first')


class InfeasibleMechanismError(MechanismError):
    """A mechanism handed to a transform violates one of its IR or IC constraints."""

    def __init__(self, violations: list[dict]):
        self.violations = violations
        first = violations[0] if violations else {}
        super().__init__(f"mechanism is infeasible: {first.get('constraint', '?')} violated ({first})")
