"""End-to-end CLI coverage: sample -> tournament -> report -> rl prep."""

import json

import pytest
from click.testing import CliRunner

from bargainlab.cli import main

CATALOG = [
    {"id": f"cli-{i}", "title": f"Item {i}", "category": "misc",
     "description": ["fine condition"], "price_high": f"{120 + 45 * i}.00",
     "price_low": f"{60 + 20 * i}.00", "source": "amazon_history"}
    for i in range(4)
]

ROSTER = {"models": [
    {"name": "soft", "kind": "scripted", "policy": "conceder"},
    {"name": "hard", "kind": "scripted", "policy": "boulware"},
]}


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def workdir(tmp_path):
    (tmp_path / "catalog.json").write_text(json.dumps(CATALOG))
    (tmp_path / "roster.json").write_text(json.dumps(ROSTER))
    return tmp_path


def test_sample_writes_scenarios(runner, workdir):
    out = workdir / "scenarios.jsonl"
    result = runner.invoke(main, [
        "sample", "--catalog", str(workdir / "catalog.json"),
        "--n", "12", "--seed", "9", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    lines = out.read_text().strip().splitlines()
    assert len(lines) == 12
    record = json.loads(lines[0])
    assert {"listing", "buyer_reservation", "seller_reservation", "regime",
            "seed"} <= set(record)
    assert "analytic gft probability" in result.output


def test_sample_presets(runner, workdir):
    out = workdir / "mix.jsonl"
    result = runner.invoke(main, [
        "sample", "--catalog", str(workdir / "catalog.json"),
        "--preset", "benchmark", "--seed", "4", "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    regimes = [json.loads(line)["regime"] for line in out.read_text().splitlines()]
    assert regimes.count("gft") == 400
    assert regimes.count("ngft") == 200


def test_tournament_then_report_and_rlprep(runner, workdir):
    scenarios = workdir / "scenarios.jsonl"
    runner.invoke(main, ["sample", "--catalog", str(workdir / "catalog.json"),
                         "--n", "6", "--seed", "2", "--out", str(scenarios)])
    out_dir = workdir / "tournament"
    result = runner.invoke(main, [
        "tournament", "--roster", str(workdir / "roster.json"),
        "--scenarios", str(scenarios), "--out", str(out_dir),
        "--concurrency", "2", "--no-figures",
    ])
    assert result.exit_code == 0, result.output
    assert "= 24 negotiations" in result.output
    assert (out_dir / "journal.jsonl").exists()
    assert (out_dir / "reports" / "pairings.csv").exists()

    report_dir = workdir / "fresh-report"
    result = runner.invoke(main, [
        "report", "--traces", str(out_dir / "traces"), "--out", str(report_dir),
    ])
    assert result.exit_code == 0, result.output
    assert (report_dir / "heatmap_long.csv").exists()
    assert list(report_dir.glob("*.png"))  # figures land next to the tables

    trace_file = sorted((out_dir / "traces").glob("*.jsonl"))[0]
    result = runner.invoke(main, ["reward", "--trace", str(trace_file),
                                  "--role", "buyer"])
    assert result.exit_code == 0, result.output
    breakdown = json.loads(result.output)
    assert 0.0 <= breakdown["total"] <= 2.5

    sft_out = workdir / "samples.jsonl"
    result = runner.invoke(main, [
        "export-sft", "--traces", str(out_dir / "traces"), "--out", str(sft_out),
    ])
    assert result.exit_code == 0, result.output
    samples = [json.loads(line) for line in sft_out.read_text().splitlines()]
    assert samples
    assert {"trajectory_id", "turn_index", "context", "target"} <= set(samples[0])


def test_advantages_command(runner, tmp_path):
    rewards = tmp_path / "rewards.json"
    rewards.write_text(json.dumps([2.0, 1.0, 1.5, 1.5]))
    runner_result = CliRunner().invoke(main, [
        "advantages", "--rewards", str(rewards), "--group-size", "2",
    ])
    assert runner_result.exit_code == 0, runner_result.output
    first, second = [json.loads(line) for line in runner_result.output.strip().splitlines()]
    assert abs(first["advantages"][0] - 0.5 / (0.5 + 1e-4)) < 1e-12
    assert second["advantages"] == [0.0, 0.0]


def test_advantages_rejects_ragged_groups(runner, tmp_path):
    rewards = tmp_path / "rewards.json"
    rewards.write_text(json.dumps([1.0, 2.0, 3.0]))
    result = runner.invoke(main, ["advantages", "--rewards", str(rewards),
                                  "--group-size", "2"])
    assert result.exit_code != 0
