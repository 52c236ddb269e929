"""Agent implementations: scripted baselines, remote model clients, prompts."""

from .base import Agent, AgentError, TurnAttempt, TurnContext
from .prompts import DEFAULT_TEMPLATE, PromptBundle, TemplateError, assemble_prompt
from .remote import ChatClient, RemoteAgent, RemoteConfig, RetryPolicy
from .roster import AgentFactory, RosterEntry, load_roster
from .scripted import POLICY_IDS, ScriptedAgent, UnknownPolicy, scripted_policy

__all__ = [
    "Agent",
    "AgentError",
    "AgentFactory",
    "ChatClient",
    "DEFAULT_TEMPLATE",
    "POLICY_IDS",
    "PromptBundle",
    "RemoteAgent",
    "RemoteConfig",
    "RetryPolicy",
    "RosterEntry",
    "ScriptedAgent",
    "TemplateError",
    "TurnAttempt",
    "TurnContext",
    "UnknownPolicy",
    "assemble_prompt",
    "load_roster",
    "scripted_policy",
]
