"""Shared fixtures: the laptop scenario, golden turn scripts, fake chat server."""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from bargainlab.domain import (
    Listing,
    ListingSource,
    Money,
    Regime,
    Role,
    Scenario,
    Split,
)


def make_listing(
    listing_id: str = "laptop-1",
    high: str = "1500.00",
    low: str = "800.00",
    title: str = "Used Laptop",
) -> Listing:
    return Listing(
        id=listing_id,
        title=title,
        category="electronics",
        description=("Lightly used, works fine.",),
        price_high=Money.parse(high),
        price_low=Money.parse(low),
        source=ListingSource.AMAZON_HISTORY,
    )


def make_scenario(b: str, s: str, listing: Listing | None = None, seed: int = 1) -> Scenario:
    listing = listing or make_listing()
    buyer = Money.parse(b)
    seller = Money.parse(s)
    return Scenario(
        listing=listing,
        buyer_reservation=buyer,
        seller_reservation=seller,
        regime=Regime.GFT if buyer >= seller else Regime.NGFT,
        split=Split.TEST,
        seed=seed,
    )


@pytest.fixture
def laptop_listing() -> Listing:
    return make_listing()


@pytest.fixture
def gft_scenario(laptop_listing: Listing) -> Scenario:
    """b=1200, s=900: a 300-wide zone of possible agreement."""
    return make_scenario("1200.00", "900.00", laptop_listing)


@pytest.fixture
def ngft_scenario(laptop_listing: Listing) -> Scenario:
    """b=850, s=1100: no zone of possible agreement."""
    return make_scenario("850.00", "1100.00", laptop_listing)


# the two golden transcripts, written exactly as an agent would emit them
GOLDEN_GFT_TURNS: list[tuple[Role, str]] = [
    (Role.SELLER,
     'Thought: open high\nCode:\nmake_offer(agent="seller", price=1400)\n'
     'wait_for_response(agent="seller")'),
    (Role.BUYER,
     'Thought: push back\nCode:\n'
     'send_message(agent="buyer", content="Your price is too high for a used laptop")\n'
     'make_offer(agent="buyer", price=950)\nwait_for_response(agent="buyer")'),
    (Role.SELLER,
     'Thought: concede some\nCode:\n'
     'send_message(agent="seller", content="I can\'t go that low, but I can offer a discount")\n'
     'make_offer(agent="seller", price=1150)\nwait_for_response(agent="seller")'),
    (Role.BUYER,
     'Thought: meet in the middle\nCode:\nmake_offer(agent="buyer", price=1050)\n'
     'wait_for_response(agent="buyer")'),
    (Role.SELLER, 'Thought: good enough\nCode:\nrespond_to_offer(agent="seller", response=True)'),
]

GOLDEN_NGFT_TURNS: list[tuple[Role, str]] = [
    (Role.SELLER, "Thought: open\nCode:\nmake_offer(1300)\nwait_for_response()"),
    (Role.BUYER, "Thought: counter\nCode:\nmake_offer(800)\nwait_for_response()"),
    (Role.SELLER,
     "Thought: hold firm\nCode:\nsend_message(content=\"I can't go below $1,100\")\n"
     "wait_for_response()"),
    (Role.BUYER,
     "Thought: infeasible, walk away\nCode:\n"
     "send_message(content=\"I can't go above $850\")\nquit_negotiation()"),
]


@pytest.fixture
def golden_gft_turns() -> list[tuple[Role, str]]:
    return list(GOLDEN_GFT_TURNS)


@pytest.fixture
def golden_ngft_turns() -> list[tuple[Role, str]]:
    return list(GOLDEN_NGFT_TURNS)


# --- fake chat-completions server ------------------------------------------------


class FakeChatServer:
    """In-process chat-completions endpoint with a scriptable behavior hook.

    ``script(request_json, index)`` returns (status_code, payload). The
    default echoes a trivial quit turn. Every request is logged.
    """

    def __init__(self, script=None):
        self.script = script or self.default_script
        self.requests: list[dict] = []
        self._lock = threading.Lock()
        server = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 - http.server API
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length) or b"{}")
                with server._lock:
                    index = len(server.requests)
                    server.requests.append(body)
                status, payload = server.script(body, index)
                data = json.dumps(payload).encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):  # silence
                pass

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @staticmethod
    def completion(text: str, prompt_tokens: int = 10, completion_tokens: int = 5) -> dict:
        return {
            "choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": completion_tokens,
            },
        }

    @staticmethod
    def default_script(body: dict, index: int):
        return 200, FakeChatServer.completion(
            "Thought: done\nCode:\nquit_negotiation()"
        )

    @property
    def url(self) -> str:
        host, port = self.httpd.server_address
        return f"http://{host}:{port}/v1/chat/completions"

    def __enter__(self) -> "FakeChatServer":
        self.thread.start()
        return self

    def __exit__(self, *exc) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def fake_server_factory():
    return FakeChatServer
