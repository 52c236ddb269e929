"""Command-line interface.

Subcommands: sample (scenario generation), tournament (round-robin run
with reports), report (recompute tables and figures from traces), reward,
advantages, and export-sft (training-signal preparation).
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import rlprep
from .agents.roster import AgentFactory, load_roster
from .domain import Role
from .engine import EngineConfig
from .metrics import score_negotiation
from .reports import write_report_family
from .scenarios import (
    SamplerConfig,
    generate_scenarios,
    gft_probability,
    load_catalog,
    load_scenarios,
    write_scenarios,
)
from .tournament import execute, plan
from .trace import load_trace, load_traces

PRESETS = {
    "benchmark": (400, 200),  # gft, ngft
    "training-eval": (400, 400),
}


@click.group()
def main() -> None:
    """Bilateral price-negotiation sandbox."""


@main.command()
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--n", "count", type=int, default=100, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--gft", "gft_quota", type=int, default=None,
              help="Target number of gains-from-trade scenarios.")
@click.option("--ngft", "ngft_quota", type=int, default=None,
              help="Target number of no-gains-from-trade scenarios.")
@click.option("--preset", type=click.Choice(sorted(PRESETS)), default=None,
              help="Named regime mix (overrides --n/--gft/--ngft).")
def sample(catalog_path: str, count: int, seed: int, out_path: str,
           gft_quota: int | None, ngft_quota: int | None, preset: str | None) -> None:
    """Sample negotiation scenarios from a catalog file."""
    catalog = load_catalog(catalog_path)
    if preset:
        gft_quota, ngft_quota = PRESETS[preset]
    scenarios = generate_scenarios(
        catalog, count, seed, gft_quota=gft_quota, ngft_quota=ngft_quota
    )
    write_scenarios(scenarios, out_path)
    gft = sum(1 for s in scenarios if s.regime.value == "gft")
    click.echo(f"wrote {len(scenarios)} scenarios to {out_path} "
               f"({gft} gft / {len(scenarios) - gft} ngft)")
    mean_p = sum(gft_probability(s.listing) for s in scenarios) / len(scenarios)
    click.echo(f"analytic gft probability over drawn listings: {mean_p:.4f}")


@main.command()
@click.option("--roster", "roster_path", required=True, type=click.Path(exists=True))
@click.option("--scenarios", "scenarios_path", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--concurrency", type=int, default=8, show_default=True)
@click.option("--resume", is_flag=True, default=False,
              help="Skip jobs already journaled as done.")
@click.option("--figures/--no-figures", default=True, show_default=True)
@click.option("--pricing", "pricing_path", type=click.Path(exists=True), default=None,
              help="JSON mapping model -> {in_per_mtok, out_per_mtok} for cost reporting.")
@click.option("--max-rounds", type=int, default=10, show_default=True)
def tournament(roster_path: str, scenarios_path: str, out_dir: str, concurrency: int,
               resume: bool, figures: bool, pricing_path: str | None,
               max_rounds: int) -> None:
    """Run a round-robin tournament and emit the report family."""
    roster = load_roster(roster_path)
    scenarios = load_scenarios(scenarios_path)
    tournament_plan = plan(roster, scenarios, concurrency_limit=concurrency)
    click.echo(f"{len(roster)} models x {len(roster)} x {len(scenarios)} scenarios "
               f"= {tournament_plan.job_count} negotiations")
    pricing = json.loads(Path(pricing_path).read_text()) if pricing_path else None
    result = execute(
        tournament_plan,
        out_dir,
        factory=AgentFactory(roster),
        engine_config=EngineConfig(max_rounds=max_rounds),
        resume=resume,
        figures=figures,
        pricing=pricing,
    )
    click.echo(f"completed {result.completed} jobs "
               f"({result.skipped} resumed, {len(result.failed)} failed)")
    for job_id, error in result.failed:
        click.echo(f"  FAILED {job_id}: {error}", err=True)
    for name, path in sorted(result.report_paths.items()):
        click.echo(f"  {name}: {path}")
    if result.failed:
        sys.exit(1)


@main.command()
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--figures/--no-figures", default=True, show_default=True)
def report(traces_dir: str, out_dir: str, figures: bool) -> None:
    """Recompute the report family (CSV tables plus figures) from traces."""
    metrics = [score_negotiation(trace) for trace in load_traces(traces_dir)]
    if not metrics:
        raise click.ClickException(f"no trace files in {traces_dir}")
    paths = write_report_family(metrics, out_dir, figures=figures)
    click.echo(f"scored {len(metrics)} negotiations")
    for name, path in sorted(paths.items()):
        click.echo(f"  {name}: {path}")


@main.command()
@click.option("--trace", "trace_path", required=True, type=click.Path(exists=True))
@click.option("--role", type=click.Choice(["buyer", "seller"]), required=True)
def reward(trace_path: str, role: str) -> None:
    """Composite reward breakdown for one side of a recorded negotiation."""
    breakdown = rlprep.compute_reward(load_trace(trace_path), Role(role))
    click.echo(json.dumps(breakdown.to_dict(), indent=2, sort_keys=True))


@main.command()
@click.option("--rewards", "rewards_path", required=True, type=click.Path(exists=True),
              help="JSON array, or JSONL of numbers / objects with a 'total' field.")
@click.option("--group-size", "group_size", type=int, required=True)
def advantages(rewards_path: str, group_size: int) -> None:
    """Group-relative advantage normalization over a rewards file."""
    text = Path(rewards_path).read_text(encoding="utf-8").strip()
    if text.startswith("["):
        values = [float(v) for v in json.loads(text)]
    else:
        values = []
        for line in text.splitlines():
            if not line.strip():
                continue
            record = json.loads(line)
            values.append(float(record["total"]) if isinstance(record, dict) else float(record))
    if len(values) % group_size:
        raise click.ClickException(
            f"{len(values)} rewards do not divide into groups of {group_size}"
        )
    for start in range(0, len(values), group_size):
        group = rlprep.group_advantages(values[start:start + group_size], group_size)
        click.echo(json.dumps({
            "group": start // group_size,
            "mean": group.mean,
            "std": group.std,
            "advantages": list(group.advantages),
        }, sort_keys=True))


@main.command(name="export-sft")
@click.option("--traces", "traces_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--mask", default="thought,think", show_default=True,
              help="Comma-separated reasoning span kinds to mask from context.")
@click.option("--role", type=click.Choice(["buyer", "seller", "both"]), default="both",
              show_default=True)
@click.option("--on-undelimited", type=click.Choice(["strip", "reject"]), default="strip",
              show_default=True)
def export_sft(traces_dir: str, out_path: str, mask: str, role: str,
               on_undelimited: str) -> None:
    """Decompose traces into per-turn SFT samples with reasoning masked."""
    roles = [Role.BUYER, Role.SELLER] if role == "both" else [Role(role)]
    mask_kinds = tuple(part.strip() for part in mask.split(",") if part.strip())
    trajectories = []
    for trace in load_traces(traces_dir):
        for r in roles:
            trajectories.append(rlprep.trace_to_trajectory(trace, r))
    samples = rlprep.export_sft(trajectories, mask=mask_kinds, on_undelimited=on_undelimited)
    count = rlprep.write_sft_samples(samples, out_path)
    click.echo(f"wrote {count} samples from {len(trajectories)} trajectories to {out_path}")


if __name__ == "__main__":
    main()
