"""Training-signal preparation from negotiation traces.

Three exports: a composite per-role reward (protocol compliance plus
outcome quality), group-relative advantage normalization for grouped
rollouts, and turn-level SFT sample decomposition with reasoning spans
masked out of the context.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .agents.prompts import DEFAULT_TEMPLATE, assemble_prompt
from .domain import Deal, Money, Regime, Role
from .engine import render_observation
from .trace import K_LISTING_POSTED, K_MAKE_OFFER, K_RESPOND, NegotiationTrace

EPS_STABLE = 1e-4


class MissingParseReports(ValueError):
    pass


class GroupTooSmall(ValueError):
    pass


class UndelimitedReasoning(ValueError):
    pass


# --- composite reward -----------------------------------------------------------


@dataclass(frozen=True)
class RewardWeights:
    """Component weights; defaults give a total in [0, 2.5]."""

    parsing: float = 0.5
    execution: float = 0.5
    constraints: float = 0.5
    utility: float = 1.0


DEFAULT_WEIGHTS = RewardWeights()


@dataclass
class ConsistencyFlags:
    accepted_worse_offer_later: bool = False
    proposed_worse_than_rejected: bool = False


@dataclass
class RewardBreakdown:
    r_parsing: float
    r_execution: float
    r_constraints: float
    r_utility: float
    total: float
    flags: ConsistencyFlags
    messages: int
    parseable: int
    blocks_executed: int

    def to_dict(self) -> dict:
        return {
            "r_parsing": self.r_parsing,
            "r_execution": self.r_execution,
            "r_constraints": self.r_constraints,
            "r_utility": self.r_utility,
            "total": self.total,
            "accepted_worse_offer_later": self.flags.accepted_worse_offer_later,
            "proposed_worse_than_rejected": self.flags.proposed_worse_than_rejected,
            "messages": self.messages,
            "parseable": self.parseable,
            "blocks_executed": self.blocks_executed,
        }


def _own_utility_worse(role: Role, price: Money, than: Money) -> bool:
    """Strictly worse for the role itself: buyers hate higher, sellers lower."""
    if role is Role.BUYER:
        return price > than
    return price < than


def consistency_flags(trace: NegotiationTrace, role: Role) -> ConsistencyFlags:
    """Behavioral-consistency checks against the best explicitly rejected
    counterpart offer, both in own-utility terms."""
    flags = ConsistencyFlags()
    best_rejected: Optional[Money] = None  # best-for-us price we turned down

    for event in trace.events:
        if event.kind == K_RESPOND and event.actor is role:
            price = Money.parse(event.payload["price"])
            if event.payload["accept"]:
                if best_rejected is not None and _own_utility_worse(role, price, best_rejected):
                    flags.accepted_worse_offer_later = True
            else:
                if best_rejected is None or _own_utility_worse(role, best_rejected, price):
                    best_rejected = price
        elif event.kind == K_MAKE_OFFER and event.actor is role:
            price = Money.parse(event.payload["price"])
            if best_rejected is not None and _own_utility_worse(role, price, best_rejected):
                flags.proposed_worse_than_rejected = True
    return flags


def _utility_component(trace: NegotiationTrace, role: Role) -> float:
    """Surplus share captured in a valid deal; zero otherwise.

    Rational walk-aways and irrational acceptances both land at zero: the
    reward carries no signal distinguishing the two.
    """
    outcome = trace.outcome
    if not isinstance(outcome.status, Deal):
        return 0.0
    scenario = trace.scenario
    if scenario.regime is not Regime.GFT:
        return 0.0
    b, s = scenario.buyer_reservation, scenario.seller_reservation
    price = outcome.status.price
    if not (s <= price <= b):
        return 0.0
    width = (b - s).cents
    if width == 0:
        return 0.5
    share_buyer = (b - price).cents / width
    share = share_buyer if role is Role.BUYER else 1.0 - share_buyer
    return max(0.0, min(1.0, share))


def compute_reward(
    trace: NegotiationTrace,
    role: Role,
    weights: RewardWeights = DEFAULT_WEIGHTS,
) -> RewardBreakdown:
    """Composite reward for one side of a finished negotiation.

    r_parsing is the fraction of the role's turns with a valid tool-call
    block; r_execution the fraction of those blocks that ran without
    execution errors. Zero denominators yield zero, never a vacuous 1.
    """
    if trace.extras.get("overflow"):
        flags = ConsistencyFlags()
        return RewardBreakdown(0.0, 0.0, 0.0, 0.0, 0.0, flags, 0, 0, 0)

    turns = [t for t in trace.turns() if t[1] is role]
    reports = [report for _, _, _, report, _ in turns]
    if any(report is None for report in reports):
        raise MissingParseReports(f"trace lacks parse reports for {role.value}")

    messages = len(turns)
    parseable = sum(1 for report in reports if report.parseable)
    blocks_executed = sum(1 for report in reports if report.parseable and report.block_executed)

    r_parsing = parseable / messages if messages else 0.0
    r_execution = blocks_executed / parseable if parseable else 0.0
    flags = consistency_flags(trace, role)
    r_constraints = 0.5 * (1 - flags.accepted_worse_offer_later) + 0.5 * (
        1 - flags.proposed_worse_than_rejected
    )
    r_utility = _utility_component(trace, role)
    total = (
        weights.parsing * r_parsing
        + weights.execution * r_execution
        + weights.constraints * r_constraints
        + weights.utility * r_utility
    )
    return RewardBreakdown(
        r_parsing=r_parsing,
        r_execution=r_execution,
        r_constraints=r_constraints,
        r_utility=r_utility,
        total=total,
        flags=flags,
        messages=messages,
        parseable=parseable,
        blocks_executed=blocks_executed,
    )


# --- group-relative advantages ----------------------------------------------------


@dataclass
class AdvantageGroup:
    rewards: tuple[float, ...]
    mean: float
    std: float
    eps_stable: float
    advantages: tuple[float, ...]

    @property
    def size(self) -> int:
        return len(self.rewards)


def group_advantages(rewards: Sequence[float], group_size: Optional[int] = None,
                     eps_stable: float = EPS_STABLE) -> AdvantageGroup:
    """Normalize rewards within one rollout group.

    advantage_i = (r_i - mean) / (population std + eps); a zero-variance
    group comes out exactly zero because the numerator already is.
    """
    rewards = tuple(float(r) for r in rewards)
    expected = group_size if group_size is not None else len(rewards)
    if len(rewards) != expected or len(rewards) < 2:
        raise GroupTooSmall(
            f"need a full group of at least 2 rewards, got {len(rewards)} (G={expected})"
        )
    mean = math.fsum(rewards) / len(rewards)
    variance = math.fsum((r - mean) ** 2 for r in rewards) / len(rewards)
    std = math.sqrt(variance)
    advantages = tuple((r - mean) / (std + eps_stable) for r in rewards)
    return AdvantageGroup(
        rewards=rewards, mean=mean, std=std, eps_stable=eps_stable, advantages=advantages
    )


# --- SFT export ---------------------------------------------------------------


@dataclass
class TrajectoryTurn:
    observation: str  # what the agent saw before this turn
    response: str  # verbatim agent output


@dataclass
class Trajectory:
    trajectory_id: str
    role: Role
    system: str
    turns: list[TrajectoryTurn]
    overflow: bool = False


def trace_to_trajectory(
    trace: NegotiationTrace,
    role: Role,
    template: str = DEFAULT_TEMPLATE,
) -> Trajectory:
    """Rebuild one side's conversation stream from a trace.

    Observations are re-rendered deterministically from the recorded
    events, so the result matches what a live agent of that role saw.
    """
    bundle = assemble_prompt(trace.scenario, role, template, trace.header.listing_price)
    turns: list[TrajectoryTurn] = []
    pending: list = [event for event in trace.events if event.turn is None
                     and event.kind == K_LISTING_POSTED] if role is Role.BUYER else []
    for _, actor, raw, _, events in trace.turns():
        if actor is role:
            observation = render_observation(pending, viewer=role)
            turns.append(TrajectoryTurn(observation=observation, response=raw))
            pending = []
        else:
            pending.extend(events)
    return Trajectory(
        trajectory_id=f"{trace.scenario.scenario_id}:{role.value}",
        role=role,
        system=bundle.system,
        turns=turns,
        overflow=bool(trace.extras.get("overflow", False)),
    )


_THINK_SPAN = re.compile(r"<think>.*?</think>", re.DOTALL)
_THINK_OPEN = re.compile(r"<think>", re.DOTALL)
_THOUGHT_BLOCK = re.compile(r"Thought\s*:.*?(?=Code\s*:)", re.DOTALL | re.IGNORECASE)
_THOUGHT_TAIL = re.compile(r"Thought\s*:.*\Z", re.DOTALL | re.IGNORECASE)


def mask_reasoning(text: str, mask: Sequence[str] = ("thought", "think"),
                   on_undelimited: str = "strip") -> str:
    """Remove reasoning spans from a context turn.

    ``mask`` selects which span kinds to remove: "think" for
    <think>...</think> regions, "thought" for the Thought: block preceding
    Code:. An opening delimiter with no close is handled per
    ``on_undelimited``: "strip" drops through end-of-text, "reject" raises.
    """
    out = text
    if "think" in mask:
        out = _THINK_SPAN.sub("", out)
        if _THINK_OPEN.search(out):
            if on_undelimited == "reject":
                raise UndelimitedReasoning("unclosed <think> span")
            out = _THINK_OPEN.split(out)[0]
    if "thought" in mask:
        out = _THOUGHT_BLOCK.sub("", out)
        if _THOUGHT_TAIL.search(out):
            if on_undelimited == "reject":
                raise UndelimitedReasoning("Thought block with no Code block")
            out = _THOUGHT_TAIL.sub("", out)
    return out


@dataclass
class SftSample:
    trajectory_id: str
    turn_index: int
    context: tuple[dict, ...]  # role-tagged messages
    target: str
    overflow: bool = False

    def to_dict(self) -> dict:
        return {
            "trajectory_id": self.trajectory_id,
            "turn_index": self.turn_index,
            "context": list(self.context),
            "target": self.target,
            "overflow": self.overflow,
        }


def export_sft(
    trajectories: Iterable[Trajectory],
    mask: Sequence[str] = ("thought", "think"),
    on_undelimited: str = "strip",
) -> list[SftSample]:
    """Decompose trajectories into per-turn autoregressive samples.

    A trajectory with t turns yields exactly t samples. Sample k's context
    holds the system prompt plus turns 1..k-1 with reasoning masked; the
    target is turn k verbatim (reasoning retained).
    """
    samples: list[SftSample] = []
    for trajectory in trajectories:
        context: list[dict] = [{"role": "system", "content": trajectory.system}]
        for index, turn in enumerate(trajectory.turns):
            step_context = list(context)
            if turn.observation:
                step_context.append({"role": "user", "content": turn.observation})
            samples.append(
                SftSample(
                    trajectory_id=trajectory.trajectory_id,
                    turn_index=index,
                    context=tuple(step_context),
                    target=turn.response,
                    overflow=trajectory.overflow,
                )
            )
            if turn.observation:
                context.append({"role": "user", "content": turn.observation})
            context.append({
                "role": "assistant",
                "content": mask_reasoning(turn.response, mask, on_undelimited),
            })
    return samples


def write_sft_samples(samples: Iterable[SftSample], path: str | Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with path.open("w", encoding="utf-8") as handle:
        for sample in samples:
            handle.write(json.dumps(sample.to_dict(), sort_keys=True) + "\n")
            count += 1
    return count
