"""Discrete-event negotiation simulator.

Protocol: the seller's listing is posted, then the two parties alternate
turns of up to three tool calls until someone accepts a pending offer,
quits, or the round limit is hit. Events flow through a timestamp-ordered
queue and are batched per turn into the observation shown to the
counterpart.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field
from typing import Optional

from .actions import (
    AgentTurnOutput,
    MakeOffer,
    ParseReport,
    QuitNegotiation,
    RespondToOffer,
    SearchPrice,
    SendMessage,
    WaitForResponse,
    WaitForTimePeriod,
    parse_turn,
    TurnParseError,
)
from .agents.base import Agent, AgentError, PendingOfferView, TurnAttempt, TurnContext
from .domain import Deal, Money, Outcome, Quit, Role, RoundLimit, Scenario, Status, utilities
from .trace import (
    K_LISTING_POSTED,
    K_MAKE_OFFER,
    K_MESSAGE,
    K_QUIT,
    K_RESPOND,
    K_SEARCH_PRICE,
    K_TERMINATED,
    K_WAIT,
    K_WAIT_TIME,
    NegotiationTrace,
    TraceEvent,
    TraceHeader,
    status_to_dict,
)

DEFAULT_MAX_ROUNDS = 10
DEFAULT_MAX_CALLS = 3


class InvalidListingPrice(ValueError):
    pass


class TurnRejectedKind:
    NOT_YOUR_TURN = "not_your_turn"
    ALREADY_TERMINATED = "already_terminated"


class TurnRejected(Exception):
    def __init__(self, kind: str, message: str = ""):
        self.kind = kind
        super().__init__(message or kind)


@dataclass
class EngineConfig:
    max_rounds: int = DEFAULT_MAX_ROUNDS
    max_calls_per_turn: int = DEFAULT_MAX_CALLS
    listing_price: Optional[Money] = None  # defaults to the listing's historical high
    opener: Role = Role.BUYER
    turn_latency_s: float = 1.0
    agent_retries: int = 2

    def to_dict(self) -> dict:
        return {
            "max_rounds": self.max_rounds,
            "max_calls_per_turn": self.max_calls_per_turn,
            "listing_price": str(self.listing_price) if self.listing_price else None,
            "opener": self.opener.value,
            "turn_latency_s": self.turn_latency_s,
            "agent_retries": self.agent_retries,
        }


@dataclass(frozen=True)
class PendingOffer:
    by: Role
    price: Money


@dataclass
class Observation:
    """A turn's events rendered for the counterpart."""

    text: str
    machine: list[TraceEvent]


class EventQueue:
    """Min-heap of events ordered by (timestamp, insertion order)."""

    def __init__(self) -> None:
        self._heap: list[tuple[float, int, TraceEvent]] = []
        self._counter = itertools.count()

    def push(self, event: TraceEvent) -> None:
        heapq.heappush(self._heap, (event.ts, next(self._counter), event))

    def pop_batch(self) -> list[TraceEvent]:
        """Pop the next run of events sharing one actor (chronological)."""
        if not self._heap:
            return []
        batch = [heapq.heappop(self._heap)[2]]
        while self._heap and self._heap[0][2].actor == batch[0].actor:
            batch.append(heapq.heappop(self._heap)[2])
        return batch

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class NegotiationState:
    scenario: Scenario
    listing_price: Money
    config: EngineConfig
    clock: float = 0.0
    turns_used: int = 0
    pending_offer: Optional[PendingOffer] = None
    history: list[TraceEvent] = field(default_factory=list)
    terminated: Optional[Status] = None
    to_move: Optional[Role] = None  # None: either party may open
    queue: EventQueue = field(default_factory=EventQueue)

    @property
    def round_number(self) -> int:
        """Current round, counting a buyer turn plus a seller turn as one."""
        return min(self.config.max_rounds, self.turns_used // 2 + 1)

    @property
    def rounds_used(self) -> int:
        return (self.turns_used + 1) // 2

    def record(self, event: TraceEvent) -> None:
        if self.history and event.ts < self.history[-1].ts:
            raise ValueError("event timestamps must be non-decreasing")
        self.history.append(event)
        self.queue.push(event)

    def terminate(self, status: Status) -> None:
        if self.terminated is not None:
            raise TurnRejected(TurnRejectedKind.ALREADY_TERMINATED, "already terminated")
        self.terminated = status


def init(scenario: Scenario, listing_price: Optional[Money] = None,
         config: Optional[EngineConfig] = None) -> NegotiationState:
    """Fresh state with the listing posted; the buyer opens by default."""
    config = config or EngineConfig()
    price = listing_price or config.listing_price or scenario.listing.price_high
    if price.cents <= 0:
        raise InvalidListingPrice(f"listing price must be positive, got {price}")
    state = NegotiationState(scenario=scenario, listing_price=price, config=config)
    state.record(
        TraceEvent(
            ts=state.clock,
            kind=K_LISTING_POSTED,
            actor=Role.SELLER,
            payload={
                "listing_id": scenario.listing.id,
                "title": scenario.listing.title,
                "price": str(price),
            },
        )
    )
    state.queue.pop_batch()  # posting is delivered immediately to the buyer
    return state


def _money_text(price: Money) -> str:
    return price.pretty()


def render_event(event: TraceEvent, viewer: Role) -> str:
    """One observation line for a single event, as seen by ``viewer``."""
    actor = event.actor
    who = "You" if actor is viewer else (actor.value.capitalize() if actor else "The market")
    payload = event.payload
    kind = event.kind
    if kind == K_LISTING_POSTED:
        return f"{who} listed \"{payload['title']}\" at {_money_text(Money.parse(payload['price']))}."
    if kind == K_MAKE_OFFER:
        line = f"{who} proposed {_money_text(Money.parse(payload['price']))}."
        if payload.get("side_offer"):
            line += f" Side offer: {payload['side_offer']}"
        return line
    if kind == K_RESPOND:
        price = _money_text(Money.parse(payload["price"]))
        if payload["accept"]:
            return f"{who} accepted the offer at {price}."
        return f"{who} rejected the offer at {price}."
    if kind == K_MESSAGE:
        return f'{who} says: "{payload["content"]}"'
    if kind == K_SEARCH_PRICE:
        return f"{who} looked up the item's price history."
    if kind == K_QUIT:
        return f"{who} ended the negotiation without a deal."
    if kind == K_WAIT:
        if payload.get("implicit"):
            return f"{who} sent no valid actions this turn."
        return f"{who} is waiting for your response."
    if kind == K_WAIT_TIME:
        return f"{who} let {payload['duration']:g} seconds pass."
    if kind == K_TERMINATED:
        return "The negotiation has ended."
    return f"{who}: {kind}"


def render_observation(events: list[TraceEvent], viewer: Role) -> str:
    return "\n".join(render_event(event, viewer) for event in events)


def _tool_result(event: TraceEvent) -> Optional[str]:
    """Feedback routed back to the calling agent (not the counterpart)."""
    if event.kind == K_SEARCH_PRICE:
        low = Money.parse(event.payload["price_low"]).pretty()
        high = Money.parse(event.payload["price_high"]).pretty()
        return f"search_price result: historical high {high}, historical low {low}."
    return None


def step(
    state: NegotiationState,
    actor: Role,
    turn: Optional[AgentTurnOutput],
    raw: Optional[str] = None,
    report: Optional[ParseReport] = None,
) -> Observation:
    """Execute one agent turn and return the counterpart's observation.

    ``turn=None`` records an unparseable turn, which forfeits the turn (an
    implicit wait). Per-call execution failures are counted in the report
    and skipped; only acting out of order or after termination rejects the
    whole turn. The state is mutated in place.
    """
    if state.terminated is not None:
        raise TurnRejected(TurnRejectedKind.ALREADY_TERMINATED, "negotiation already over")
    if state.to_move is not None and state.to_move is not actor:
        raise TurnRejected(
            TurnRejectedKind.NOT_YOUR_TURN, f"{actor.value} acted out of turn"
        )
    report = report if report is not None else ParseReport(parseable=turn is not None)
    raw = raw if raw is not None else (turn.raw if turn is not None else "")
    turn_index = state.turns_used

    def emit(kind: str, payload: dict) -> TraceEvent:
        event = TraceEvent(
            ts=state.clock, kind=kind, actor=actor, payload=payload,
            turn=turn_index, raw=raw, parse=report,
        )
        state.record(event)
        return event

    executed_any = False
    offers_this_turn = 0
    if turn is not None:
        for position, call in enumerate(turn.calls):
            if position >= state.config.max_calls_per_turn:
                report.diagnostics.append((position, "per-turn call limit reached; call dropped"))
                continue
            if state.terminated is not None:
                report.diagnostics.append((position, "turn already ended; call dropped"))
                continue
            report.exec_attempted += 1
            claim = turn.claim_for(position)
            if claim is not None and claim.lower() != actor.value:
                report.diagnostics.append(
                    (position, f"agent identity mismatch: claimed {claim!r}")
                )
                continue
            if isinstance(call, MakeOffer):
                if offers_this_turn:
                    report.diagnostics.append(
                        (position, "second offer in one turn supersedes the first")
                    )
                offers_this_turn += 1
                state.pending_offer = PendingOffer(by=actor, price=call.price)
                emit(K_MAKE_OFFER, {
                    "price": str(call.price),
                    "side_offer": call.side_offer,
                })
            elif isinstance(call, RespondToOffer):
                pending = state.pending_offer
                if pending is None or pending.by is actor:
                    report.diagnostics.append(
                        (position, "no pending counterpart offer to respond to")
                    )
                    continue
                emit(K_RESPOND, {"accept": call.accept, "price": str(pending.price),
                                 "offer_by": pending.by.value})
                state.pending_offer = None
                if call.accept:
                    state.terminated = Deal(price=pending.price)
            elif isinstance(call, SendMessage):
                emit(K_MESSAGE, {"content": call.content})
            elif isinstance(call, SearchPrice):
                listing = state.scenario.listing
                emit(K_SEARCH_PRICE, {
                    "price_low": str(listing.price_low),
                    "price_high": str(listing.price_high),
                })
            elif isinstance(call, QuitNegotiation):
                emit(K_QUIT, {})
                state.terminated = Quit(by=actor)
            elif isinstance(call, WaitForResponse):
                emit(K_WAIT, {})
            elif isinstance(call, WaitForTimePeriod):
                emit(K_WAIT_TIME, {"duration": call.duration_s})
                state.clock += call.duration_s
            else:  # pragma: no cover - exhaustive over ToolCall
                report.diagnostics.append((position, f"unsupported call {call!r}"))
                continue
            report.executed_ok += 1
            executed_any = True
            if isinstance(call, WaitForResponse):
                break

    if not executed_any and state.terminated is None:
        # the turn is forfeited but still traced, so protocol metrics see it
        emit(K_WAIT, {"implicit": True})

    state.turns_used += 1
    state.to_move = actor.counterpart
    state.clock += state.config.turn_latency_s

    if state.terminated is None and state.turns_used >= 2 * state.config.max_rounds:
        state.terminated = RoundLimit()

    if state.terminated is not None:
        state.record(TraceEvent(
            ts=state.clock, kind=K_TERMINATED, actor=actor,
            payload=status_to_dict(state.terminated),
        ))

    batch = state.queue.pop_batch()
    while len(state.queue):  # the terminated marker trails the actor's batch
        batch.extend(state.queue.pop_batch())
    viewer = actor.counterpart
    return Observation(text=render_observation(batch, viewer), machine=batch)


def outcome_from_state(state: NegotiationState, fault: Optional[str] = None) -> Outcome:
    if state.terminated is None:
        raise ValueError("negotiation not terminated")
    buyer_u, seller_u = utilities(state.scenario, state.terminated)
    return Outcome(
        status=state.terminated,
        rounds_used=state.rounds_used,
        turns_used=state.turns_used,
        buyer_utility=buyer_u,
        seller_utility=seller_u,
        fault=fault,
    )


def _context_for(state: NegotiationState, role: Role, observation: str,
                 tool_results: list[str], own_turns: int) -> TurnContext:
    pending = None
    if state.pending_offer is not None and state.pending_offer.by is not role:
        pending = PendingOfferView(by=state.pending_offer.by, price=state.pending_offer.price)
    return TurnContext(
        role=role,
        scenario=state.scenario,
        reservation=state.scenario.reservation_for(role),
        listing_price=state.listing_price,
        observation_text=observation,
        tool_results=list(tool_results),
        pending_offer=pending,
        own_turn_index=own_turns,
        turns_used=state.turns_used,
        round_number=state.round_number,
        max_rounds=state.config.max_rounds,
    )


def run(
    scenario: Scenario,
    buyer: Agent,
    seller: Agent,
    config: Optional[EngineConfig] = None,
) -> NegotiationTrace:
    """Run one full negotiation between two agents and return its trace.

    Agent failures are retried up to ``config.agent_retries``; when the
    budget is exhausted the faulty side is recorded as quitting, with the
    failure annotated on the outcome.
    """
    config = config or EngineConfig()
    state = init(scenario, config=config)
    agents = {Role.BUYER: buyer, Role.SELLER: seller}
    for agent in agents.values():
        agent.begin(scenario, state.listing_price)

    listing_event = state.history[0]
    pending_obs: dict[Role, list[TraceEvent]] = {Role.BUYER: [listing_event], Role.SELLER: []}
    tool_results: dict[Role, list[str]] = {Role.BUYER: [], Role.SELLER: []}
    own_turns = {Role.BUYER: 0, Role.SELLER: 0}
    usage_totals: dict[str, dict] = {}
    fault: Optional[str] = None

    while state.terminated is None:
        actor = state.to_move or config.opener
        agent = agents[actor]
        observation = render_observation(pending_obs[actor], viewer=actor)
        ctx = _context_for(state, actor, observation, tool_results[actor], own_turns[actor])

        attempt: Optional[TurnAttempt] = None
        failure: Optional[str] = None
        for _ in range(config.agent_retries + 1):
            try:
                attempt = agent.take_turn(ctx)
                break
            except AgentError as exc:
                failure = str(exc)
        if attempt is None:
            fault = f"{actor.value}: {failure}"
            state.terminated = Quit(by=actor)
            state.record(TraceEvent(
                ts=state.clock, kind=K_TERMINATED, actor=actor,
                payload={"status": "quit", "price": None, "by": actor.value,
                         "fault": fault},
            ))
            break

        if attempt.usage:
            bucket = usage_totals.setdefault(actor.value, {})
            for key, value in attempt.usage.items():
                bucket[key] = bucket.get(key, 0) + value

        pending_obs[actor] = []
        obs = step(state, actor, attempt.output, raw=attempt.raw, report=attempt.report)
        own_turns[actor] += 1
        tool_results[actor] = [
            result for event in obs.machine
            if (result := _tool_result(event)) is not None
        ]
        pending_obs[actor.counterpart].extend(obs.machine)

    outcome = outcome_from_state(state, fault=fault)
    header = TraceHeader(
        scenario=scenario,
        listing_price=state.listing_price,
        buyer_name=buyer.name,
        seller_name=seller.name,
        config=config.to_dict(),
    )
    extras = {"usage": usage_totals} if usage_totals else {}
    return NegotiationTrace(header=header, events=state.history, outcome=outcome,
                            extras=extras)


def replay(trace: NegotiationTrace) -> Outcome:
    """Re-execute a recorded trace's turns through the engine.

    Each turn's raw output is re-parsed exactly as the live run would have
    parsed it, so a well-formed trace reproduces its recorded outcome.
    """
    config_data = trace.header.config
    config = EngineConfig(
        max_rounds=config_data.get("max_rounds", DEFAULT_MAX_ROUNDS),
        max_calls_per_turn=config_data.get("max_calls_per_turn", DEFAULT_MAX_CALLS),
        turn_latency_s=config_data.get("turn_latency_s", 1.0),
    )
    state = init(trace.scenario, listing_price=trace.header.listing_price, config=config)
    for _, actor, raw, _, _ in trace.turns():
        try:
            output: Optional[AgentTurnOutput] = parse_turn(raw)
        except TurnParseError:
            output = None
        step(state, actor, output, raw=raw)
    return outcome_from_state(state, fault=trace.outcome.fault)
