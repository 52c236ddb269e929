"""Round-robin tournament harness.

Every roster entry plays both roles against every entry (self-play
included), and every pairing negotiates the identical scenario list.
Completed jobs are appended to a crash-safe journal so interrupted runs
resume without re-running finished negotiations.
"""

from __future__ import annotations

import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .agents.roster import AgentFactory, RosterEntry
from .domain import Role, Scenario, safe_name
from .engine import EngineConfig, run
from .metrics import PerNegotiationMetrics, score_negotiation
from .reports import write_report_family
from .trace import load_trace


class EmptyRoster(ValueError):
    pass


class EmptyScenarios(ValueError):
    pass


@dataclass(frozen=True)
class Job:
    job_id: str
    buyer: str
    seller: str
    scenario_index: int


@dataclass
class TournamentPlan:
    roster: list[RosterEntry]
    scenarios: list[Scenario]
    pairings: list[tuple[str, str]]
    jobs: list[Job]
    concurrency_limit: int = 8

    @property
    def job_count(self) -> int:
        return len(self.jobs)


def plan(
    roster: list[RosterEntry],
    scenarios: list[Scenario],
    concurrency_limit: int = 8,
) -> TournamentPlan:
    """Enumerate all |roster|^2 pairings over the shared scenario list."""
    if not roster:
        raise EmptyRoster("roster has no entries")
    if not scenarios:
        raise EmptyScenarios("no scenarios to negotiate")
    names = [entry.name for entry in roster]
    if len(set(names)) != len(names):
        raise ValueError("roster names must be unique")
    pairings = [(buyer, seller) for buyer in names for seller in names]
    jobs = [
        Job(
            job_id=f"{safe_name(buyer)}__{safe_name(seller)}__{safe_name(s.scenario_id)}",
            buyer=buyer,
            seller=seller,
            scenario_index=index,
        )
        for buyer, seller in pairings
        for index, s in enumerate(scenarios)
    ]
    return TournamentPlan(
        roster=list(roster),
        scenarios=list(scenarios),
        pairings=pairings,
        jobs=jobs,
        concurrency_limit=concurrency_limit,
    )


@dataclass
class ExecutionResult:
    out_dir: Path
    completed: int
    skipped: int
    failed: list[tuple[str, str]]  # (job_id, error)
    report_paths: dict[str, Path] = field(default_factory=dict)
    metrics: list[PerNegotiationMetrics] = field(default_factory=list)


class _Journal:
    """Append-only JSONL of finished jobs; the single write serialization point."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def completed_jobs(self) -> dict[str, str]:
        done = {}
        if self.path.exists():
            with self.path.open("r", encoding="utf-8") as handle:
                for line in handle:
                    if not line.strip():
                        continue
                    record = json.loads(line)
                    if record.get("status") == "done":
                        done[record["job_id"]] = record["trace_path"]
        return done

    def append(self, record: dict) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                handle.write(json.dumps(record, sort_keys=True) + "\n")
                handle.flush()


def execute(
    tournament: TournamentPlan,
    out_dir: str | Path,
    factory: Optional[AgentFactory] = None,
    engine_config: Optional[EngineConfig] = None,
    resume: bool = False,
    figures: bool = True,
    pricing: Optional[dict] = None,
) -> ExecutionResult:
    """Run all jobs under the concurrency limit and emit the report family.

    A failed job is journaled and listed in the summary; it never aborts
    the tournament. With ``resume=True``, jobs already journaled as done
    are skipped and their traces reused.
    """
    out_dir = Path(out_dir)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    journal = _Journal(out_dir / "journal.jsonl")
    factory = factory or AgentFactory(tournament.roster)
    engine_config = engine_config or EngineConfig()

    done = journal.completed_jobs() if resume else {}
    pending = [job for job in tournament.jobs if job.job_id not in done]

    failed: list[tuple[str, str]] = []

    def run_job(job: Job) -> None:
        scenario = tournament.scenarios[job.scenario_index]
        started = time.monotonic()
        trace_path = traces_dir / f"{job.job_id}.jsonl"
        try:
            buyer = factory.build(job.buyer, Role.BUYER, seed=scenario.seed)
            seller = factory.build(job.seller, Role.SELLER, seed=scenario.seed)
            trace = run(scenario, buyer, seller, engine_config)
            trace.write(trace_path)
        except Exception as exc:  # one bad job must not sink the tournament
            journal.append({
                "job_id": job.job_id,
                "trace_path": str(trace_path),
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
                "wall_time": time.monotonic() - started,
            })
            failed.append((job.job_id, f"{type(exc).__name__}: {exc}"))
            return
        journal.append({
            "job_id": job.job_id,
            "trace_path": str(trace_path),
            "status": "done",
            "wall_time": time.monotonic() - started,
        })

    if pending:
        with ThreadPoolExecutor(max_workers=max(1, tournament.concurrency_limit)) as pool:
            futures = [pool.submit(run_job, job) for job in pending]
            for future in as_completed(futures):
                future.result()

    # aggregate in plan order so reports are byte-identical across runs
    failed_ids = {job_id for job_id, _ in failed}
    metrics: list[PerNegotiationMetrics] = []
    for job in tournament.jobs:
        if job.job_id in failed_ids:
            continue
        trace_path = traces_dir / f"{job.job_id}.jsonl"
        if not trace_path.exists():
            failed.append((job.job_id, "trace file missing"))
            continue
        metrics.append(score_negotiation(load_trace(trace_path)))

    report_dir = out_dir / "reports"
    report_paths = write_report_family(metrics, report_dir, figures=figures)
    if pricing:
        report_paths["costs"] = _write_costs(tournament, traces_dir, pricing,
                                             report_dir / "costs.csv")

    return ExecutionResult(
        out_dir=out_dir,
        completed=len(tournament.jobs) - len(failed),
        skipped=len(done),
        failed=failed,
        report_paths=report_paths,
        metrics=metrics,
    )


def _write_costs(tournament: TournamentPlan, traces_dir: Path, pricing: dict,
                 path: Path) -> Path:
    """Token cost summary per model, priced from a configuration mapping.

    Pricing entries look like {"model": {"in_per_mtok": 2.0, "out_per_mtok": 8.0}}.
    Only jobs whose vendor returned usage contribute.
    """
    import csv

    totals: dict[str, dict[str, float]] = {}
    for job in tournament.jobs:
        trace_path = traces_dir / f"{job.job_id}.jsonl"
        if not trace_path.exists():
            continue
        trace = load_trace(trace_path)
        usage = trace.extras.get("usage", {})
        for role_name, model in (("buyer", job.buyer), ("seller", job.seller)):
            counts = usage.get(role_name)
            if not counts:
                continue
            bucket = totals.setdefault(model, {"prompt_tokens": 0, "completion_tokens": 0})
            bucket["prompt_tokens"] += counts.get("prompt_tokens", 0)
            bucket["completion_tokens"] += counts.get("completion_tokens", 0)

    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["model", "prompt_tokens", "completion_tokens", "cost_usd"])
        for model in sorted(totals):
            counts = totals[model]
            rates = pricing.get(model, {})
            cost = (
                counts["prompt_tokens"] / 1e6 * float(rates.get("in_per_mtok", 0.0))
                + counts["completion_tokens"] / 1e6 * float(rates.get("out_per_mtok", 0.0))
            )
            writer.writerow([
                model,
                str(int(counts["prompt_tokens"])),
                str(int(counts["completion_tokens"])),
                f"{cost:.6f}",
            ])
    return path
