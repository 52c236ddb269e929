"""System-prompt assembly for negotiation agents.

The default template walks the full instruction hierarchy: role and
objective, the hard reservation constraint, utility definitions, a
decision checklist, strategy guidelines, operating format (Thought/Code),
and the tool API. Substitution only ever injects the agent's own
reservation price, so the counterpart's number cannot leak by
construction.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from ..actions import tools_documentation
from ..domain import Money, Role, Scenario

_PLACEHOLDER = re.compile(r"\{([A-Z][A-Z0-9_]*)\}")

REQUIRED_PLACEHOLDERS = frozenset(
    {"ROLE", "RESERVATION", "UTILITY_FORMULA", "ITEM_SECTION", "LISTING_PRICE", "TOOLS_DOC"}
)


class TemplateError(ValueError):
    """A template is missing (or duplicates) a required placeholder."""


@dataclass(frozen=True)
class PromptBundle:
    system: str
    history_rendering: tuple[str, ...] = ()
    tools_doc: str = ""


DEFAULT_TEMPLATE = """\
# Role and Objective
You are the {ROLE} in a price negotiation for one item. You are a skilled
bargaining agent negotiating on behalf of your principal. Your objective is
to maximize your own utility, and to walk away when no acceptable deal exists.

# Critical Rule: Constraint Compliance
Your private reservation price is {RESERVATION}. This number is secret:
never reveal it, and never agree to a deal that violates it.

# Variable Definitions
HARD_LIMIT = your reservation price, stated once above.
UTILITY: {UTILITY_FORMULA}

# Constraint Rules
- Never accept a deal with negative utility.
- A no-deal outcome has utility 0 and is always preferable to a
  negative-utility deal.

# Mandatory Decision Process
Before responding to any offer: identify the offered price, recall your
HARD_LIMIT, calculate your utility at that price, then decide.

# Negotiation Strategy Guidelines
- General approach: open strategically and keep maximizing utility; do not
  reveal how much room you have.
- Anchoring and positioning: use precise numbers and open well away from
  your limit to leave room for movement.
- Concessions: make tapered concessions that shrink over time to signal you
  are near your limit.
- Non-monetary negotiation: you may mention bonuses or bundles in messages,
  but only the numeric price is binding.
- Exercise the outside option (quit_negotiation) when the counterpart
  cannot possibly meet your constraint.

# Rules You Must Follow
Stay persuasive and professional. If you conclude no acceptable deal
exists, exit firmly rather than drifting past your limit.

# Item Information
{ITEM_SECTION}
The item is currently listed at {LISTING_PRICE}.

# How You Operate
Each turn, output a `Thought:` block (private reasoning, invisible to the
counterpart) followed by a `Code:` block containing one tool call per line
(at most 3). End non-terminal turns with wait_for_response(...).

# Tool Space and API Definitions
{TOOLS_DOC}

# Critical Tool Usage Patterns
Calculate your utility before every respond_to_offer call. Pass
agent="{ROLE}" on every call.

# Code Rules
Only the listed tools exist; call them with literal arguments only.
"""


def utility_formula(role: Role) -> str:
    if role is Role.BUYER:
        return ("your utility = HARD_LIMIT - deal price if you buy at or below "
                "your limit; 0 if no deal; negative if you overpay")
    return ("your utility = deal price - HARD_LIMIT if you sell at or above "
            "your limit; 0 if no deal; negative if you undersell")


def item_section(scenario: Scenario) -> str:
    listing = scenario.listing
    lines = [f"Title: {listing.title}", f"Category: {listing.category}"]
    lines += [f"- {bullet}" for bullet in listing.description]
    lines.append(
        f"Price history: highest {listing.price_high.pretty()}, "
        f"lowest {listing.price_low.pretty()}."
    )
    return "\n".join(lines)


def assemble_prompt(
    scenario: Scenario,
    role: Role,
    template: str = DEFAULT_TEMPLATE,
    listing_price: Money | None = None,
) -> PromptBundle:
    """Render the system prompt for one role.

    The template must contain every required placeholder, and
    {RESERVATION} exactly once so the hard limit is stated unambiguously.
    """
    found = _PLACEHOLDER.findall(template)
    missing = REQUIRED_PLACEHOLDERS - set(found)
    if missing:
        raise TemplateError(f"template missing placeholders: {sorted(missing)}")
    if found.count("RESERVATION") != 1:
        raise TemplateError("template must contain {RESERVATION} exactly once")

    tools_doc = tools_documentation()
    values = {
        "ROLE": role.value,
        "RESERVATION": scenario.reservation_for(role).pretty(),
        "UTILITY_FORMULA": utility_formula(role),
        "ITEM_SECTION": item_section(scenario),
        "LISTING_PRICE": (listing_price or scenario.listing.price_high).pretty(),
        "TOOLS_DOC": tools_doc,
    }

    def substitute(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise TemplateError(f"unknown placeholder {{{name}}}")
        return values[name]

    return PromptBundle(system=_PLACEHOLDER.sub(substitute, template), tools_doc=tools_doc)
