"""Structured action space: tool-call grammar, turn parser, and serializer.

Agent output is a ``Thought:`` block (private reasoning) followed by a
``Code:`` block containing up to three tool calls, one per line. Only the
seven negotiation tools have semantics; the grammar is a restricted
call-expression syntax (identifier, keyword or positional literal
arguments), not general-purpose code.
"""

from __future__ import annotations

import ast
import json
import re
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from typing import Optional, Union

from .domain import Money, MoneyError, Role

MAX_CALLS_PER_TURN = 3


# --- tool calls ---------------------------------------------------------------


@dataclass(frozen=True)
class MakeOffer:
    price: Money
    side_offer: Optional[str] = None


@dataclass(frozen=True)
class RespondToOffer:
    accept: bool


@dataclass(frozen=True)
class SendMessage:
    content: str


@dataclass(frozen=True)
class SearchPrice:
    pass


@dataclass(frozen=True)
class QuitNegotiation:
    pass


@dataclass(frozen=True)
class WaitForResponse:
    pass


@dataclass(frozen=True)
class WaitForTimePeriod:
    duration_s: float


ToolCall = Union[
    MakeOffer,
    RespondToOffer,
    SendMessage,
    SearchPrice,
    QuitNegotiation,
    WaitForResponse,
    WaitForTimePeriod,
]

#: wire name -> (tool class, positional parameter order, parameter docs)
TOOL_SPECS: dict[str, tuple[type, tuple[str, ...], str]] = {
    "make_offer": (
        MakeOffer,
        ("price", "side_offer"),
        "Propose a formal price (must be positive); becomes the pending offer "
        "the counterpart must respond to. Optional side_offer text rides along.",
    ),
    "respond_to_offer": (
        RespondToOffer,
        ("response",),
        "Accept (True) or reject (False) the pending offer. Acceptance "
        "concludes the negotiation at the offered price.",
    ),
    "send_message": (
        SendMessage,
        ("content",),
        "Send a free-form message to the counterpart. No effect on state.",
    ),
    "search_price": (
        SearchPrice,
        (),
        "Retrieve the item's historical high and low reference prices.",
    ),
    "quit_negotiation": (
        QuitNegotiation,
        (),
        "Terminal: end the negotiation with no deal; both utilities are zero.",
    ),
    "wait_for_response": (
        WaitForResponse,
        (),
        "Terminal for the turn: yield to the counterpart. Must be the last "
        "tool called in a turn.",
    ),
    "wait_for_time_period": (
        WaitForTimePeriod,
        ("duration",),
        "Advance the simulation clock by `duration` seconds (tactical delay).",
    ),
}


def tool_name(call: ToolCall) -> str:
    for name, (klass, _, _) in TOOL_SPECS.items():
        if isinstance(call, klass):
            return name
    raise TypeError(f"not a tool call: {call!r}")


def tools_documentation() -> str:
    """Human-readable tool listing for inclusion in system prompts."""
    lines = []
    for name, (_, positional, doc) in TOOL_SPECS.items():
        params = ["agent"] + list(positional)
        lines.append(f"- {name}({', '.join(params)}): {doc}")
    return "\n".join(lines)


# --- parse results ------------------------------------------------------------


@dataclass
class ParseReport:
    """Per-turn protocol accounting.

    ``parseable`` means the turn yielded at least one valid tool call.
    Execution counters are filled in by the engine as calls run; the
    parser only records diagnostics, each as (statement position, message).
    """

    parseable: bool = False
    executed_ok: int = 0
    exec_attempted: int = 0
    diagnostics: list[tuple[int, str]] = field(default_factory=list)
    reprompted: bool = False

    @property
    def block_executed(self) -> bool:
        """True when every attempted call in the block ran cleanly."""
        return self.parseable and self.executed_ok == self.exec_attempted

    def to_dict(self) -> dict:
        return {
            "parseable": self.parseable,
            "executed_ok": self.executed_ok,
            "exec_attempted": self.exec_attempted,
            "diagnostics": [[pos, msg] for pos, msg in self.diagnostics],
            "reprompted": self.reprompted,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ParseReport":
        return cls(
            parseable=bool(data.get("parseable", False)),
            executed_ok=int(data.get("executed_ok", 0)),
            exec_attempted=int(data.get("exec_attempted", 0)),
            diagnostics=[(int(p), str(m)) for p, m in data.get("diagnostics", [])],
            reprompted=bool(data.get("reprompted", False)),
        )


@dataclass(frozen=True)
class AgentTurnOutput:
    """Parsed agent turn: private thought plus 1..3 tool calls.

    ``agent_claims`` carries each call's self-identification argument
    (validated against the acting role at execution time, not here).
    """

    thought: str
    calls: tuple[ToolCall, ...]
    raw: str
    agent_claims: tuple[Optional[str], ...] = ()

    def claim_for(self, index: int) -> Optional[str]:
        if index < len(self.agent_claims):
            return self.agent_claims[index]
        return None


class ParseErrorKind(str, Enum):
    NO_CODE_BLOCK = "no_code_block"
    MALFORMED_CALL = "malformed_call"
    UNKNOWN_TOOL = "unknown_tool"
    BAD_ARGUMENT = "bad_argument"


class TurnParseError(Exception):
    """A turn with no usable tool calls."""

    def __init__(self, kind: ParseErrorKind, diagnostics: list[tuple[int, str]]):
        self.kind = kind
        self.diagnostics = diagnostics
        detail = "; ".join(msg for _, msg in diagnostics) or kind.value
        super().__init__(f"{kind.value}: {detail}")

    def report(self) -> ParseReport:
        return ParseReport(parseable=False, diagnostics=list(self.diagnostics))


# --- parsing ------------------------------------------------------------------

_THOUGHT_RE = re.compile(r"Thought\s*:", re.IGNORECASE)
_CODE_RE = re.compile(r"Code\s*:", re.IGNORECASE)
_FENCE_RE = re.compile(r"```[A-Za-z0-9_+-]*\n(.*?)```", re.DOTALL)
_FENCE_LINE = re.compile(r"^\s*```[A-Za-z0-9_+-]*\s*$")


def _split_blocks(raw: str) -> tuple[str, Optional[str]]:
    """Extract (thought text, code text) from a raw completion.

    The code block starts at the first ``Code:`` marker; a fenced block is
    accepted as fallback when no marker is present. Returns code=None when
    neither exists.
    """
    code_match = _CODE_RE.search(raw)
    thought_match = _THOUGHT_RE.search(raw)

    if code_match:
        code = raw[code_match.end():]
        if thought_match and thought_match.start() < code_match.start():
            thought = raw[thought_match.end():code_match.start()]
        else:
            thought = ""
        return thought.strip(), code
    fenced = _FENCE_RE.search(raw)
    if fenced:
        thought = raw[: fenced.start()]
        if thought_match:
            thought = thought[thought_match.end():]
        return thought.strip(), fenced.group(1)
    return (raw[thought_match.end():].strip() if thought_match else ""), None


class _CallError(Exception):
    def __init__(self, kind: ParseErrorKind, message: str):
        self.kind = kind
        self.message = message
        super().__init__(message)


def _literal(node: ast.expr) -> object:
    if isinstance(node, ast.Constant):
        return node.value
    if (
        isinstance(node, ast.UnaryOp)
        and isinstance(node.op, ast.USub)
        and isinstance(node.operand, ast.Constant)
        and isinstance(node.operand.value, (int, float))
    ):
        return -node.operand.value
    raise _CallError(ParseErrorKind.BAD_ARGUMENT, "argument is not a literal")


def _to_money(value: object, tool: str, arg: str) -> Money:
    try:
        if isinstance(value, bool) or value is None:
            raise MoneyError("not a number")
        if isinstance(value, int):
            return Money.from_decimal(value)
        if isinstance(value, float):
            return Money.from_float(value)
        if isinstance(value, str):
            return Money.parse(value)
        raise MoneyError("not a number")
    except MoneyError as exc:
        raise _CallError(
            ParseErrorKind.BAD_ARGUMENT, f"{tool}: bad {arg} {value!r} ({exc})"
        ) from exc


def _to_bool(value: object, tool: str, arg: str) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, str) and value.strip().lower() in ("true", "false"):
        return value.strip().lower() == "true"
    raise _CallError(ParseErrorKind.BAD_ARGUMENT, f"{tool}: bad {arg} {value!r}")


def _build_call(name: str, args: dict[str, object]) -> ToolCall:
    if name == "make_offer":
        if "price" not in args:
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, "make_offer: missing price")
        price = _to_money(args["price"], name, "price")
        if price.cents <= 0:
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, "make_offer: price must be positive")
        side = args.get("side_offer")
        if side is not None and not isinstance(side, str):
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, "make_offer: side_offer must be text")
        return MakeOffer(price=price, side_offer=side)
    if name == "respond_to_offer":
        if "response" not in args:
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, "respond_to_offer: missing response")
        return RespondToOffer(accept=_to_bool(args["response"], name, "response"))
    if name == "send_message":
        content = args.get("content", "")
        if not isinstance(content, str):
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, "send_message: content must be text")
        return SendMessage(content=content)
    if name == "search_price":
        return SearchPrice()
    if name == "quit_negotiation":
        return QuitNegotiation()
    if name == "wait_for_response":
        return WaitForResponse()
    if name == "wait_for_time_period":
        if "duration" not in args:
            raise _CallError(
                ParseErrorKind.BAD_ARGUMENT, "wait_for_time_period: missing duration"
            )
        value = args["duration"]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise _CallError(
                ParseErrorKind.BAD_ARGUMENT, f"wait_for_time_period: bad duration {value!r}"
            )
        duration = float(value)
        if duration < 0:
            raise _CallError(
                ParseErrorKind.BAD_ARGUMENT, "wait_for_time_period: duration must be >= 0"
            )
        return WaitForTimePeriod(duration_s=duration)
    raise _CallError(ParseErrorKind.UNKNOWN_TOOL, f"unknown tool {name!r}")


def _interpret_call(
    node: ast.Call, position: int, diagnostics: list[tuple[int, str]]
) -> tuple[ToolCall, Optional[str]]:
    if not isinstance(node.func, ast.Name):
        raise _CallError(ParseErrorKind.MALFORMED_CALL, "call target is not a tool name")
    name = node.func.id
    if name not in TOOL_SPECS:
        raise _CallError(ParseErrorKind.UNKNOWN_TOOL, f"unknown tool {name!r}")
    _, positional, _ = TOOL_SPECS[name]

    args: dict[str, object] = {}
    for i, arg_node in enumerate(node.args):
        if i >= len(positional):
            raise _CallError(ParseErrorKind.BAD_ARGUMENT, f"{name}: too many positional arguments")
        args[positional[i]] = _literal(arg_node)

    agent_claim: Optional[str] = None
    for kw in node.keywords:
        if kw.arg is None:
            raise _CallError(ParseErrorKind.MALFORMED_CALL, f"{name}: **kwargs not allowed")
        value = _literal(kw.value)
        if kw.arg in ("agent", "agent_name"):
            if not isinstance(value, str):
                raise _CallError(ParseErrorKind.BAD_ARGUMENT, f"{name}: agent must be a string")
            agent_claim = value
        elif kw.arg in positional:
            args[kw.arg] = value
        else:
            # LLM output is noisy; unknown keywords are dropped, not fatal.
            diagnostics.append((position, f"{name}: ignored unknown argument {kw.arg!r}"))
    return _build_call(name, args), agent_claim


def _statements(code: str) -> list[tuple[int, str, Optional[ast.Call]]]:
    """Split a code block into (position, source line, call node or None).

    Parsing the whole block keeps multi-line calls working; when that
    fails the block degrades to line-by-line parsing so garbage after a
    valid call never invalidates it.
    """
    cleaned = "\n".join(
        "" if _FENCE_LINE.match(line) else line for line in code.splitlines()
    )
    try:
        module = ast.parse(cleaned, mode="exec")
    except (SyntaxError, ValueError):
        out: list[tuple[int, str, Optional[ast.Call]]] = []
        for idx, line in enumerate(cleaned.splitlines()):
            if not line.strip():
                continue
            try:
                expr = ast.parse(line.strip(), mode="eval")
                node = expr.body if isinstance(expr.body, ast.Call) else None
            except (SyntaxError, ValueError):
                node = None
            out.append((idx, line.strip(), node))
        return out
    out = []
    for idx, stmt in enumerate(module.body):
        source = ast.get_source_segment(cleaned, stmt) or ""
        if isinstance(stmt, ast.Expr) and isinstance(stmt.value, ast.Call):
            out.append((idx, source.strip(), stmt.value))
        else:
            out.append((idx, source.strip(), None))
    return out


def parse_turn(raw: str) -> AgentTurnOutput:
    """Parse a raw completion into thought plus tool calls.

    Raises TurnParseError when no code block exists or no statement in it
    yields a valid call. Per-statement failures, truncation past three
    calls, and anything after a ``wait_for_response`` are downgraded to
    diagnostics.
    """
    if not isinstance(raw, str):
        raise TurnParseError(ParseErrorKind.NO_CODE_BLOCK, [(0, "input is not text")])
    thought, code = _split_blocks(raw)
    if code is None or not code.strip():
        raise TurnParseError(ParseErrorKind.NO_CODE_BLOCK, [(0, "no Code: block found")])

    calls: list[ToolCall] = []
    claims: list[Optional[str]] = []
    diagnostics: list[tuple[int, str]] = []
    first_error: Optional[ParseErrorKind] = None

    for position, source, node in _statements(code):
        if len(calls) >= MAX_CALLS_PER_TURN:
            diagnostics.append((position, "call limit reached; statement dropped"))
            continue
        if calls and isinstance(calls[-1], WaitForResponse):
            diagnostics.append((position, "statement after wait_for_response dropped"))
            continue
        if node is None:
            diagnostics.append((position, f"malformed statement: {source[:80]!r}"))
            first_error = first_error or ParseErrorKind.MALFORMED_CALL
            continue
        try:
            call, claim = _interpret_call(node, position, diagnostics)
        except _CallError as exc:
            diagnostics.append((position, exc.message))
            first_error = first_error or exc.kind
            continue
        calls.append(call)
        claims.append(claim)

    if not calls:
        raise TurnParseError(first_error or ParseErrorKind.MALFORMED_CALL, diagnostics)
    return AgentTurnOutput(
        thought=thought, calls=tuple(calls), raw=raw, agent_claims=tuple(claims)
    )


def make_report(output: AgentTurnOutput) -> ParseReport:
    """Fresh report for a successfully parsed turn (diagnostics not repeated)."""
    return ParseReport(parseable=True)


# --- serialization ------------------------------------------------------------


def _fmt_value(value: object) -> str:
    if isinstance(value, Money):
        return str(value)
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        # keep non-ASCII literal: surrogate-pair escapes would not re-parse
        # to the same string
        return json.dumps(value, ensure_ascii=False)
    return repr(value)


def serialize(call: ToolCall, actor: Role = Role.BUYER) -> str:
    """Canonical call syntax; ``parse`` of the result reproduces the call."""
    name = tool_name(call)
    parts = [f'agent="{actor.value}"']
    if isinstance(call, MakeOffer):
        parts.append(f"price={_fmt_value(call.price)}")
        if call.side_offer is not None:
            parts.append(f"side_offer={_fmt_value(call.side_offer)}")
    elif isinstance(call, RespondToOffer):
        parts.append(f"response={_fmt_value(call.accept)}")
    elif isinstance(call, SendMessage):
        parts.append(f"content={_fmt_value(call.content)}")
    elif isinstance(call, WaitForTimePeriod):
        parts.append(f"duration={_fmt_value(call.duration_s)}")
    return f"{name}({', '.join(parts)})"


def render_turn(thought: str, calls: list[ToolCall] | tuple[ToolCall, ...], actor: Role) -> str:
    """Compose a full canonical turn (used by scripted agents)."""
    body = "\n".join(serialize(call, actor) for call in calls)
    return f"Thought: {thought}\nCode:\n{body}"
