from enum import Enum
from typing import Literal, NamedTuple, Tuple, TypeAlias


class SubCommand(NamedTuple):
    """A pipeline stage of the application."""

    name: str
    description: str
    upstream: Tuple[str, ...]


class SubCommands(Enum):
    """Enumeration of sub-commands, in pipeline order."""

    SOLVE = SubCommand("solve", "Solve the symmetric stage-1 equilibrium", ())
    FEES = SubCommand("fees", "Synthesize chain-closure fees", ("solve",))
    AUDIT = SubCommand("audit", "Compute audit probabilities and the no-audit regime", ("solve", "fees"))
    SIMULATE = SubCommand("simulate", "Simulate the mechanism and compare with exact values", ("solve", "fees"))
    VERIFY = SubCommand("verify", "Check feasibility and optimality properties", ("solve", "fees"))

    @property
    def command_name(self) -> str:
        return self.value.name

    @property
    def command_description(self) -> str:
        return self.value.description

    @property
    def command_upstream(self) -> Tuple[str, ...]:
        return self.value.upstream

    @classmethod
    def from_name(cls, name: str) -> "SubCommands":
        return next(c for c in cls if c.command_name == name)


SubCommandChoices: TypeAlias = Literal["solve", "fees", "audit", "simulate", "verify"]
