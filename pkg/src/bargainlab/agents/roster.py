"""Agent roster files: named model/policy entries and per-job agent construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import requests

try:
    import tomllib  # 3.11+
except ImportError:  # pragma: no cover - depends on interpreter version
    tomllib = None

from ..domain import Money, Role
from .base import Agent
from .prompts import DEFAULT_TEMPLATE
from .remote import ChatClient, RemoteConfig, RetryPolicy, RemoteAgent
from .scripted import scripted_policy


@dataclass(frozen=True)
class RosterEntry:
    """One named participant: a scripted policy or a remote endpoint."""

    name: str
    kind: str  # "scripted" | "remote"
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.kind not in ("scripted", "remote"):
            raise ValueError(f"roster entry {self.name!r}: unknown kind {self.kind!r}")


def load_roster(path: str | Path) -> list[RosterEntry]:
    path = Path(path)
    if path.suffix == ".toml":
        if tomllib is None:
            raise ValueError("TOML rosters need Python 3.11+; use JSON instead")
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    else:
        data = json.loads(path.read_text(encoding="utf-8"))
    entries = data["models"] if isinstance(data, dict) else data
    roster = []
    for item in entries:
        params = {k: v for k, v in item.items() if k not in ("name", "kind")}
        roster.append(RosterEntry(name=item["name"], kind=item["kind"], params=params))
    if not roster:
        raise ValueError(f"{path}: empty roster")
    return roster


class AgentFactory:
    """Builds per-negotiation agents; remote entries share one client each."""

    def __init__(self, roster: list[RosterEntry], template: str = DEFAULT_TEMPLATE):
        self.roster = {entry.name: entry for entry in roster}
        self.template = template
        self._clients: dict[str, ChatClient] = {}
        self._session = requests.Session()

    def client_for(self, entry: RosterEntry) -> ChatClient:
        if entry.name not in self._clients:
            params = entry.params
            retry = RetryPolicy(
                max_retries=int(params.get("max_retries", 3)),
                base_delay=float(params.get("retry_base_delay", 1.0)),
                factor=float(params.get("retry_factor", 2.0)),
            )
            config = RemoteConfig(
                endpoint=params["endpoint"],
                model=params.get("model", entry.name),
                auth_env=params.get("auth_env"),
                temperature=float(params.get("temperature", 1.0)),
                timeout_s=float(params.get("timeout_s", 60.0)),
                retry=retry,
                rate_per_s=params.get("rate_per_s"),
                reprompt_budget=int(params.get("reprompt_budget", 1)),
            )
            self._clients[entry.name] = ChatClient(config, session=self._session)
        return self._clients[entry.name]

    def build(self, name: str, role: Role, seed: int = 0) -> Agent:
        entry = self.roster[name]
        if entry.kind == "scripted":
            return scripted_policy(
                entry.params.get("policy", name),
                params=entry.params.get("params", {}),
                role=role,
                name=entry.name,
                seed=seed,
            )
        return RemoteAgent(role=role, client=self.client_for(entry), name=entry.name,
                           template=self.template)
