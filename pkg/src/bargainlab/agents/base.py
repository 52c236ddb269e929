"""Agent interface shared by scripted policies and remote model clients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Protocol, runtime_checkable

from ..actions import AgentTurnOutput, ParseReport
from ..domain import Money, Role, Scenario


@dataclass(frozen=True)
class PendingOfferView:
    by: Role
    price: Money


@dataclass
class TurnContext:
    """Everything an agent may look at when taking its turn.

    The context carries only the agent's own reservation; the counterpart's
    reservation never appears in any prompt or observation.
    """

    role: Role
    scenario: Scenario
    reservation: Money
    listing_price: Money
    observation_text: str
    tool_results: list[str] = field(default_factory=list)
    pending_offer: Optional[PendingOfferView] = None
    own_turn_index: int = 0
    turns_used: int = 0
    round_number: int = 1
    max_rounds: int = 10


@dataclass
class TurnAttempt:
    """What an agent hands back to the engine for one turn.

    ``output`` is None when the turn stayed unparseable after the reprompt
    budget; the raw text and report are recorded in the trace either way.
    """

    raw: str
    output: Optional[AgentTurnOutput]
    report: ParseReport
    usage: dict = field(default_factory=dict)


class AgentError(Exception):
    """Unrecoverable agent failure (transport, timeout, missing auth)."""


@runtime_checkable
class Agent(Protocol):
    name: str
    role: Role

    def begin(self, scenario: Scenario, listing_price: Money) -> None:
        """Reset per-negotiation state before the first turn."""
        ...

    def take_turn(self, ctx: TurnContext) -> TurnAttempt:
        ...
