"""Deterministic scripted negotiation policies.

These serve as engine test oracles and as cheap tournament baselines.
Every policy except always_accept and ir_violator is individually rational
by construction: it never accepts a price on the wrong side of its
reservation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..actions import (
    MakeOffer,
    ParseReport,
    QuitNegotiation,
    RespondToOffer,
    SendMessage,
    ToolCall,
    WaitForResponse,
    parse_turn,
    render_turn,
)
from ..domain import Money, Role, Scenario
from .base import TurnAttempt, TurnContext

POLICY_IDS = (
    "linear_conceder",
    "boulware",
    "conceder",
    "firm_anchor",
    "always_accept",
    "always_quit",
    "ir_violator",
)

_ALIASES = {
    "linearconceder": "linear_conceder",
    "firmanchor": "firm_anchor",
    "alwaysaccept": "always_accept",
    "alwaysquit": "always_quit",
    "irviolator": "ir_violator",
}


class UnknownPolicy(ValueError):
    pass


def _normalize(policy_id: str) -> str:
    key = policy_id.strip().lower().replace("-", "_")
    key = _ALIASES.get(key.replace("_", ""), key)
    if key not in POLICY_IDS:
        raise UnknownPolicy(f"unknown policy {policy_id!r}; known: {POLICY_IDS}")
    return key


def _toward(reservation: Money, anchor: Money, fraction: float) -> Money:
    """Point `fraction` of the way from the anchor toward the reservation."""
    span = reservation.cents - anchor.cents
    return Money(anchor.cents + round(span * fraction))


class ScriptedAgent:
    """Shared turn mechanics; subclasses decide open/target/accept."""

    policy_id = "scripted"

    def __init__(self, role: Role, name: str | None = None,
                 params: Optional[dict] = None, seed: int = 0):
        self.role = role
        self.name = name or f"{self.policy_id}"
        self.params = dict(params or {})
        self.seed = seed
        self.reservation = Money(1)
        self.listing_price = Money(1)
        self._own_offers: list[Money] = []

    def begin(self, scenario: Scenario, listing_price: Money) -> None:
        self.reservation = scenario.reservation_for(self.role)
        self.listing_price = listing_price
        self._own_offers = []

    # -- policy hooks ---------------------------------------------------

    def opening_offer(self) -> Money:
        raise NotImplementedError

    def next_offer(self, turn_index: int) -> Money:
        raise NotImplementedError

    def acceptable(self, price: Money, planned: Money) -> bool:
        """Accept when the pending price is at least as good as the plan."""
        if not self._respects_reservation(price):
            return False
        if self.role is Role.BUYER:
            return price <= planned
        return price >= planned

    def _respects_reservation(self, price: Money) -> bool:
        if self.role is Role.BUYER:
            return price <= self.reservation
        return price >= self.reservation

    def _clamp(self, price: Money) -> Money:
        """Keep own offers on the rational side of the reservation."""
        if self.role is Role.BUYER:
            return min(price, self.reservation)
        return max(price, self.reservation)

    # -- turn assembly ----------------------------------------------------

    def take_turn(self, ctx: TurnContext) -> TurnAttempt:
        calls, thought = self.decide(ctx)
        raw = render_turn(thought, calls, self.role)
        return TurnAttempt(raw=raw, output=parse_turn(raw), report=ParseReport(parseable=True))

    def decide(self, ctx: TurnContext) -> tuple[list[ToolCall], str]:
        pending = ctx.pending_offer
        planned = (
            self.opening_offer() if not self._own_offers else self.next_offer(len(self._own_offers))
        )
        planned = self._clamp(planned)
        if pending is not None and self.acceptable(pending.price, planned):
            return [RespondToOffer(accept=True)], f"{self.policy_id}: accept at {pending.price}"
        calls: list[ToolCall] = []
        if pending is not None:
            calls.append(RespondToOffer(accept=False))
        self._own_offers.append(planned)
        calls.append(MakeOffer(price=planned))
        calls.append(WaitForResponse())
        return calls, f"{self.policy_id}: counter at {planned} (step {len(self._own_offers)})"


class LinearConceder(ScriptedAgent):
    """Concedes a fixed fraction of the remaining distance to its reservation
    each time it offers: p_next = p + rate * (reservation - p)."""

    policy_id = "linear_conceder"

    def opening_offer(self) -> Money:
        if "open" in self.params:
            return Money.from_decimal(str(self.params["open"]))
        mult = float(self.params.get("open_mult", 1.6 if self.role is Role.SELLER else 0.5))
        return Money(round(self.reservation.cents * mult))

    def next_offer(self, turn_index: int) -> Money:
        rate = float(self.params.get("rate", 0.5))
        return _toward(self.reservation, self._own_offers[-1], rate)


class _TimeDependent(ScriptedAgent):
    """Concession fraction follows (t / T) ** exponent toward the reservation."""

    exponent = 1.0

    def opening_offer(self) -> Money:
        if "open" in self.params:
            return Money.from_decimal(str(self.params["open"]))
        mult = float(self.params.get("open_mult", 1.6 if self.role is Role.SELLER else 0.5))
        return Money(round(self.reservation.cents * mult))

    def next_offer(self, turn_index: int) -> Money:
        horizon = max(1, int(self.params.get("horizon", 9)))
        progress = min(1.0, turn_index / horizon)
        fraction = progress ** float(self.params.get("exponent", self.exponent))
        return _toward(self.reservation, self._own_offers[0], fraction)


class Boulware(_TimeDependent):
    """Holds near its anchor early, concedes late."""

    policy_id = "boulware"
    exponent = 3.0


class Conceder(_TimeDependent):
    """Concedes most of the distance early."""

    policy_id = "conceder"
    exponent = 1.0 / 3.0


class FirmAnchor(ScriptedAgent):
    """Opens at its anchor and never moves."""

    policy_id = "firm_anchor"

    def opening_offer(self) -> Money:
        if "open" in self.params:
            return Money.from_decimal(str(self.params["open"]))
        mult = float(self.params.get("open_mult", 1.5 if self.role is Role.SELLER else 0.6))
        return Money(round(self.reservation.cents * mult))

    def next_offer(self, turn_index: int) -> Money:
        return self._own_offers[0]


class AlwaysAccept(ScriptedAgent):
    """Accepts any individually rational pending offer; otherwise waits."""

    policy_id = "always_accept"

    def decide(self, ctx: TurnContext) -> tuple[list[ToolCall], str]:
        pending = ctx.pending_offer
        if pending is not None and self._respects_reservation(pending.price):
            return [RespondToOffer(accept=True)], "always_accept: fine by me"
        return (
            [SendMessage(content="Make me an offer."), WaitForResponse()],
            "always_accept: nothing acceptable pending",
        )


class AlwaysQuit(ScriptedAgent):
    """Exercises the outside option immediately."""

    policy_id = "always_quit"

    def decide(self, ctx: TurnContext) -> tuple[list[ToolCall], str]:
        return [QuitNegotiation()], "always_quit: walking away"


class IRViolator(ScriptedAgent):
    """Accepts any pending offer, even at negative own utility.

    Exists to exercise the violation-rate metrics; never use as a baseline.
    """

    policy_id = "ir_violator"

    def decide(self, ctx: TurnContext) -> tuple[list[ToolCall], str]:
        if ctx.pending_offer is not None:
            return [RespondToOffer(accept=True)], "ir_violator: accepting blindly"
        return (
            [SendMessage(content="I'm flexible on price."), WaitForResponse()],
            "ir_violator: waiting for any offer",
        )


_POLICY_CLASSES = {
    "linear_conceder": LinearConceder,
    "boulware": Boulware,
    "conceder": Conceder,
    "firm_anchor": FirmAnchor,
    "always_accept": AlwaysAccept,
    "always_quit": AlwaysQuit,
    "ir_violator": IRViolator,
}


def scripted_policy(
    policy_id: str,
    params: Optional[dict] = None,
    role: Role = Role.BUYER,
    name: str | None = None,
    seed: int = 0,
) -> ScriptedAgent:
    """Instantiate a deterministic policy agent; raises UnknownPolicy."""
    key = _normalize(policy_id)
    return _POLICY_CLASSES[key](role=role, name=name or key, params=params, seed=seed)
