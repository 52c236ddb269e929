"""Negotiation trace records and their JSONL encoding.

A trace file is one header line, one line per engine event (each carrying
the raw agent output and parse report of the turn it belongs to), and a
final outcome line. This file format is the contract consumed by the
metrics and training-prep layers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .actions import ParseReport
from .domain import (
    Deal,
    Money,
    Outcome,
    Quit,
    Role,
    RoundLimit,
    Scenario,
    Status,
)

SCHEMA_VERSION = 1

# event kinds; tool-call kinds reuse the wire names
K_LISTING_POSTED = "listing_posted"
K_MAKE_OFFER = "make_offer"
K_RESPOND = "respond_to_offer"
K_MESSAGE = "send_message"
K_SEARCH_PRICE = "search_price"
K_QUIT = "quit_negotiation"
K_WAIT = "wait_for_response"
K_WAIT_TIME = "wait_for_time_period"
K_TERMINATED = "terminated"


class TraceError(ValueError):
    """Raised for malformed or truncated trace files."""


@dataclass
class TraceEvent:
    ts: float
    kind: str
    actor: Optional[Role]
    payload: dict
    turn: Optional[int] = None
    raw: Optional[str] = None
    parse: Optional[ParseReport] = None

    def to_dict(self) -> dict:
        return {
            "type": "event",
            "ts": self.ts,
            "kind": self.kind,
            "actor": self.actor.value if self.actor else None,
            "payload": self.payload,
            "turn": self.turn,
            "raw": self.raw,
            "parse": self.parse.to_dict() if self.parse else None,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceEvent":
        return cls(
            ts=float(data["ts"]),
            kind=data["kind"],
            actor=Role(data["actor"]) if data.get("actor") else None,
            payload=data.get("payload", {}),
            turn=data.get("turn"),
            raw=data.get("raw"),
            parse=ParseReport.from_dict(data["parse"]) if data.get("parse") else None,
        )


@dataclass
class TraceHeader:
    scenario: Scenario
    listing_price: Money
    buyer_name: str
    seller_name: str
    config: dict = field(default_factory=dict)
    schema: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "type": "header",
            "schema": self.schema,
            "scenario": self.scenario.to_dict(),
            "listing_price": str(self.listing_price),
            "buyer_name": self.buyer_name,
            "seller_name": self.seller_name,
            "config": self.config,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TraceHeader":
        return cls(
            scenario=Scenario.from_dict(data["scenario"]),
            listing_price=Money.parse(data["listing_price"]),
            buyer_name=data["buyer_name"],
            seller_name=data["seller_name"],
            config=data.get("config", {}),
            schema=int(data.get("schema", SCHEMA_VERSION)),
        )


def status_to_dict(status: Status) -> dict:
    if isinstance(status, Deal):
        return {"status": "deal", "price": str(status.price), "by": None}
    if isinstance(status, Quit):
        return {"status": "quit", "price": None, "by": status.by.value}
    return {"status": "round_limit", "price": None, "by": None}


def status_from_dict(data: dict) -> Status:
    kind = data["status"]
    if kind == "deal":
        return Deal(price=Money.parse(data["price"]))
    if kind == "quit":
        return Quit(by=Role(data["by"]))
    if kind == "round_limit":
        return RoundLimit()
    raise TraceError(f"unknown outcome status {kind!r}")


def outcome_to_dict(outcome: Outcome, extras: dict | None = None) -> dict:
    record = {"type": "outcome"}
    record.update(status_to_dict(outcome.status))
    record.update(
        {
            "rounds_used": outcome.rounds_used,
            "turns_used": outcome.turns_used,
            "buyer_utility": str(outcome.buyer_utility),
            "seller_utility": str(outcome.seller_utility),
            "fault": outcome.fault,
        }
    )
    if extras:
        record["extras"] = extras
    return record


def outcome_from_dict(data: dict) -> Outcome:
    return Outcome(
        status=status_from_dict(data),
        rounds_used=int(data["rounds_used"]),
        turns_used=int(data["turns_used"]),
        buyer_utility=Money.parse(data["buyer_utility"]),
        seller_utility=Money.parse(data["seller_utility"]),
        fault=data.get("fault"),
    )


@dataclass
class NegotiationTrace:
    """Full machine-readable record of one negotiation."""

    header: TraceHeader
    events: list[TraceEvent]
    outcome: Outcome
    extras: dict = field(default_factory=dict)

    @property
    def scenario(self) -> Scenario:
        return self.header.scenario

    def turns(self) -> list[tuple[int, Role, str, Optional[ParseReport], list[TraceEvent]]]:
        """Group events by agent turn: (index, actor, raw, report, events)."""
        grouped: dict[int, list[TraceEvent]] = {}
        for event in self.events:
            if event.turn is None:
                continue
            grouped.setdefault(event.turn, []).append(event)
        out = []
        for index in sorted(grouped):
            events = grouped[index]
            first = events[0]
            if first.actor is None:
                raise TraceError(f"turn {index} has no actor")
            out.append((index, first.actor, first.raw or "", first.parse, events))
        return out

    def offers(self, role: Role) -> list[Money]:
        """Formal offers by a role, in order. The listing post is not an offer."""
        return [
            Money.parse(event.payload["price"])
            for event in self.events
            if event.kind == K_MAKE_OFFER and event.actor is role
        ]

    def model_name(self, role: Role) -> str:
        return self.header.buyer_name if role is Role.BUYER else self.header.seller_name

    def dump_lines(self) -> Iterator[str]:
        yield json.dumps(self.header.to_dict(), sort_keys=True)
        for event in self.events:
            yield json.dumps(event.to_dict(), sort_keys=True)
        yield json.dumps(outcome_to_dict(self.outcome, self.extras or None), sort_keys=True)

    def write(self, path: str | Path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as handle:
            for line in self.dump_lines():
                handle.write(line + "\n")


def load_trace(path: str | Path) -> NegotiationTrace:
    header: TraceHeader | None = None
    events: list[TraceEvent] = []
    outcome: Outcome | None = None
    extras: dict = {}
    with Path(path).open("r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                data = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TraceError(f"{path}:{lineno}: invalid JSON") from exc
            kind = data.get("type")
            if kind == "header":
                header = TraceHeader.from_dict(data)
            elif kind == "event":
                events.append(TraceEvent.from_dict(data))
            elif kind == "outcome":
                outcome = outcome_from_dict(data)
                extras = data.get("extras", {})
            else:
                raise TraceError(f"{path}:{lineno}: unknown record type {kind!r}")
    if header is None or outcome is None:
        raise TraceError(f"{path}: missing header or outcome record")
    return NegotiationTrace(header=header, events=events, outcome=outcome, extras=extras)


def iter_trace_files(directory: str | Path) -> Iterator[Path]:
    yield from sorted(Path(directory).glob("*.jsonl"))


def load_traces(directory: str | Path) -> Iterable[NegotiationTrace]:
    for path in iter_trace_files(directory):
        yield load_trace(path)
