"""Training-signal prep: composite reward, advantages, SFT decomposition."""

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bargainlab.actions import parse_turn
from bargainlab.domain import Money, Role
from bargainlab.engine import init, outcome_from_state, run, step
from bargainlab.agents.scripted import scripted_policy
from bargainlab.rlprep import (
    EPS_STABLE,
    GroupTooSmall,
    MissingParseReports,
    Trajectory,
    TrajectoryTurn,
    UndelimitedReasoning,
    compute_reward,
    consistency_flags,
    export_sft,
    group_advantages,
    mask_reasoning,
    trace_to_trajectory,
)
from bargainlab.trace import NegotiationTrace, TraceHeader

from conftest import GOLDEN_GFT_TURNS, GOLDEN_NGFT_TURNS, make_scenario
from test_metrics import trace_from_turns


class TestComputeReward:
    def test_golden_gft_full_marks(self, gft_scenario):
        trace = trace_from_turns(gft_scenario, GOLDEN_GFT_TURNS)
        for role in Role:
            breakdown = compute_reward(trace, role)
            assert breakdown.r_parsing == 1.0
            assert breakdown.r_execution == 1.0
            assert breakdown.r_constraints == 1.0
            assert breakdown.r_utility == 0.5
            assert breakdown.total == 2.0

    def test_rational_ngft_quit_scores_1_5(self, ngft_scenario):
        trace = trace_from_turns(ngft_scenario, GOLDEN_NGFT_TURNS)
        breakdown = compute_reward(trace, Role.BUYER)
        assert breakdown.r_utility == 0.0
        assert breakdown.total == 1.5

    def test_accepting_worse_than_rejected_sets_flag(self, gft_scenario):
        turns = [
            (Role.SELLER, "Code:\nmake_offer(1050)\nwait_for_response()"),
            (Role.BUYER,
             "Code:\nrespond_to_offer(response=False)\nmake_offer(940)\nwait_for_response()"),
            (Role.SELLER, "Code:\nmake_offer(1100)\nwait_for_response()"),
            (Role.BUYER, "Code:\nrespond_to_offer(response=True)"),
        ]
        trace = trace_from_turns(gft_scenario, turns)
        breakdown = compute_reward(trace, Role.BUYER)
        # buyer rejected 1050 then accepted 1100: strictly worse for it
        assert breakdown.flags.accepted_worse_offer_later
        assert not breakdown.flags.proposed_worse_than_rejected
        assert breakdown.r_constraints == 0.5

    def test_proposing_worse_than_rejected_sets_flag(self, gft_scenario):
        turns = [
            (Role.SELLER, "Code:\nmake_offer(1000)\nwait_for_response()"),
            (Role.BUYER,
             "Code:\nrespond_to_offer(response=False)\nmake_offer(1100)\nwait_for_response()"),
            (Role.SELLER, "Code:\nrespond_to_offer(response=True)"),
        ]
        trace = trace_from_turns(gft_scenario, turns)
        breakdown = compute_reward(trace, Role.BUYER)
        # buyer rejected an ask of 1000, then itself proposed paying 1100
        assert breakdown.flags.proposed_worse_than_rejected
        assert breakdown.r_constraints == 0.5

    def test_unparseable_turns_lower_parsing_rate(self, gft_scenario):
        state = init(gft_scenario, listing_price=Money.parse("1500.00"))
        step(state, Role.BUYER, None, raw="gibberish, no code block")
        step(state, Role.SELLER, parse_turn("Code:\nmake_offer(1100)\nwait_for_response()"))
        step(state, Role.BUYER, parse_turn("Code:\nrespond_to_offer(response=True)"))
        header = TraceHeader(scenario=gft_scenario, listing_price=Money.parse("1500.00"),
                             buyer_name="b", seller_name="s")
        trace = NegotiationTrace(header=header, events=state.history,
                                 outcome=outcome_from_state(state))
        breakdown = compute_reward(trace, Role.BUYER)
        assert breakdown.messages == 2
        assert breakdown.parseable == 1
        assert breakdown.r_parsing == 0.5
        assert breakdown.r_execution == 1.0

    def test_execution_failures_lower_execution_rate(self, gft_scenario):
        turns = [
            # respond with nothing pending: parseable block, failed execution
            (Role.BUYER, "Code:\nrespond_to_offer(response=True)"),
            (Role.SELLER, "Code:\nmake_offer(1100)\nwait_for_response()"),
            (Role.BUYER, "Code:\nrespond_to_offer(response=True)"),
        ]
        trace = trace_from_turns(gft_scenario, turns)
        breakdown = compute_reward(trace, Role.BUYER)
        assert breakdown.messages == 2
        assert breakdown.parseable == 2
        assert breakdown.blocks_executed == 1
        assert breakdown.r_execution == 0.5

    def test_zero_denominators_give_zero_not_vacuous_one(self, gft_scenario):
        turns = [(Role.BUYER, "Code:\nquit_negotiation()")]
        trace = trace_from_turns(gft_scenario, turns)
        breakdown = compute_reward(trace, Role.SELLER)  # the seller never acted
        assert breakdown.messages == 0
        assert breakdown.r_parsing == 0.0
        assert breakdown.r_execution == 0.0

    def test_missing_parse_reports_rejected(self, gft_scenario):
        trace = trace_from_turns(gft_scenario, GOLDEN_GFT_TURNS)
        for event in trace.events:
            event.parse = None
        with pytest.raises(MissingParseReports):
            compute_reward(trace, Role.BUYER)

    def test_overflow_trace_scores_zero(self, gft_scenario):
        trace = trace_from_turns(gft_scenario, GOLDEN_GFT_TURNS)
        trace.extras["overflow"] = True
        assert compute_reward(trace, Role.BUYER).total == 0.0


class TestGroupAdvantages:
    def test_zero_variance_group_is_exactly_zero(self):
        group = group_advantages([1.5, 1.5, 1.5, 1.5])
        assert group.advantages == (0.0, 0.0, 0.0, 0.0)

    def test_two_point_group_hand_oracle(self):
        group = group_advantages([2.0, 1.0])
        expected = 0.5 / (0.5 + EPS_STABLE)
        assert math.isclose(group.advantages[0], expected, abs_tol=1e-12)
        assert math.isclose(group.advantages[1], -expected, abs_tol=1e-12)

    def test_group_too_small(self):
        with pytest.raises(GroupTooSmall):
            group_advantages([1.0])
        with pytest.raises(GroupTooSmall):
            group_advantages([1.0, 2.0, 3.0], group_size=8)

    @given(st.lists(st.floats(min_value=0, max_value=2.5, allow_nan=False),
                    min_size=2, max_size=16))
    def test_centering(self, rewards):
        group = group_advantages(rewards)
        if len(set(rewards)) == 1:
            assert all(a == 0.0 for a in group.advantages)
        elif group.std > 0:
            assert abs(math.fsum(group.advantages)) / len(rewards) < 1e-12


SENTINEL = "ZZ-PRIVATE-{}-YY"


def synthetic_trajectory(turn_count: int, trajectory_id: str = "t0") -> Trajectory:
    turns = []
    for i in range(turn_count):
        response = (
            f"<think>{SENTINEL.format(2 * i)}</think>"
            f"Thought: {SENTINEL.format(2 * i + 1)}\n"
            f"Code:\nmake_offer(agent=\"buyer\", price={100 + i}.00)\n"
            "wait_for_response(agent=\"buyer\")"
        )
        turns.append(TrajectoryTurn(observation=f"observation {i}", response=response))
    return Trajectory(trajectory_id=trajectory_id, role=Role.BUYER,
                      system="system prompt", turns=turns)


class TestMaskReasoning:
    def test_think_spans_removed(self):
        masked = mask_reasoning("<think>secret</think>visible", mask=("think",))
        assert masked == "visible"

    def test_thought_block_removed_code_kept(self):
        masked = mask_reasoning("Thought: secret\nCode:\nquit_negotiation()",
                                mask=("thought",))
        assert "secret" not in masked
        assert "quit_negotiation()" in masked

    def test_unclosed_think_strip(self):
        masked = mask_reasoning("before<think>dangling", on_undelimited="strip")
        assert masked == "before"

    def test_unclosed_think_reject(self):
        with pytest.raises(UndelimitedReasoning):
            mask_reasoning("<think>dangling", on_undelimited="reject")


class TestExportSft:
    def test_turn_count_law(self):
        trajectories = [synthetic_trajectory(t, f"t{t}") for t in (1, 3, 5, 8)]
        samples = export_sft(trajectories)
        assert len(samples) == 1 + 3 + 5 + 8

    def test_one_turn_trajectory(self):
        (sample,) = export_sft([synthetic_trajectory(1)])
        assert sample.turn_index == 0
        assert [m["role"] for m in sample.context] == ["system", "user"]
        assert sample.target.startswith("<think>")

    def test_contexts_strictly_increase(self):
        samples = export_sft([synthetic_trajectory(6)])
        lengths = [sum(len(m["content"]) for m in s.context) for s in samples]
        assert lengths == sorted(set(lengths))

    def test_no_masked_bytes_in_any_context(self):
        samples = export_sft([synthetic_trajectory(5)])
        for sample in samples:
            blob = "".join(m["content"] for m in sample.context)
            assert "ZZ-PRIVATE" not in blob

    def test_context_keeps_prior_tool_calls(self):
        samples = export_sft([synthetic_trajectory(3)])
        third = samples[2]
        blob = "".join(m["content"] for m in third.context)
        assert "make_offer" in blob and "price=101.00" in blob
        assert SENTINEL.format(2) not in blob  # turn-2 reasoning is gone

    def test_target_keeps_reasoning_verbatim(self):
        samples = export_sft([synthetic_trajectory(2)])
        assert SENTINEL.format(2) in samples[1].target

    def test_overflow_flag_propagates(self):
        trajectory = synthetic_trajectory(2)
        trajectory.overflow = True
        samples = export_sft([trajectory])
        assert all(s.overflow for s in samples)


class TestTraceToTrajectory:
    def test_round_trip_from_engine(self, gft_scenario):
        buyer = scripted_policy("linear_conceder", role=Role.BUYER, name="b")
        seller = scripted_policy("boulware", role=Role.SELLER, name="s")
        trace = run(gft_scenario, buyer, seller)
        for role in Role:
            trajectory = trace_to_trajectory(trace, role)
            own_turns = [t for t in trace.turns() if t[1] is role]
            assert len(trajectory.turns) == len(own_turns)
            assert trajectory.turns[0].response == own_turns[0][2]
        buyer_trajectory = trace_to_trajectory(trace, Role.BUYER)
        assert "listed" in buyer_trajectory.turns[0].observation

    def test_counterpart_reservation_never_in_stream(self, gft_scenario):
        buyer = scripted_policy("conceder", role=Role.BUYER, name="b")
        seller = scripted_policy("boulware", role=Role.SELLER, name="s")
        trace = run(gft_scenario, buyer, seller)
        trajectory = trace_to_trajectory(trace, Role.BUYER)
        seller_reservation = gft_scenario.seller_reservation.pretty()
        blob = trajectory.system + "".join(t.observation for t in trajectory.turns)
        assert seller_reservation not in blob
