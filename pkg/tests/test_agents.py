"""Prompt assembly and scripted policy behavior."""

import pytest

from bargainlab.actions import MakeOffer, QuitNegotiation, RespondToOffer
from bargainlab.agents.base import PendingOfferView, TurnContext
from bargainlab.agents.prompts import (
    DEFAULT_TEMPLATE,
    TemplateError,
    assemble_prompt,
)
from bargainlab.agents.scripted import UnknownPolicy, scripted_policy
from bargainlab.domain import Money, Role
from bargainlab.engine import run

from conftest import make_scenario


def ctx_for(agent, scenario, pending=None, own_turns=0):
    return TurnContext(
        role=agent.role,
        scenario=scenario,
        reservation=scenario.reservation_for(agent.role),
        listing_price=scenario.listing.price_high,
        observation_text="",
        pending_offer=pending,
        own_turn_index=own_turns,
    )


class TestPrompts:
    def test_buyer_prompt_contains_own_reservation_once(self, gft_scenario):
        bundle = assemble_prompt(gft_scenario, Role.BUYER)
        assert bundle.system.count("$1,200.00") == 1
        assert "utility = HARD_LIMIT - deal price" in bundle.system

    def test_seller_prompt_hides_buyer_reservation(self, gft_scenario):
        bundle = assemble_prompt(gft_scenario, Role.SELLER)
        assert "$900.00" in bundle.system
        assert "$1,200.00" not in bundle.system

    def test_information_hiding_over_both_roles(self, gft_scenario):
        for role in Role:
            bundle = assemble_prompt(gft_scenario, role)
            other = gft_scenario.reservation_for(role.counterpart).pretty()
            assert other not in bundle.system

    def test_missing_placeholder_raises(self, gft_scenario):
        broken = DEFAULT_TEMPLATE.replace("{RESERVATION}", "none of your business")
        with pytest.raises(TemplateError):
            assemble_prompt(gft_scenario, Role.BUYER, template=broken)

    def test_duplicated_reservation_placeholder_raises(self, gft_scenario):
        doubled = DEFAULT_TEMPLATE + "\nP.S. your limit is {RESERVATION}"
        with pytest.raises(TemplateError):
            assemble_prompt(gft_scenario, Role.BUYER, template=doubled)

    def test_tools_doc_included(self, gft_scenario):
        bundle = assemble_prompt(gft_scenario, Role.BUYER)
        for tool in ("make_offer", "respond_to_offer", "wait_for_time_period"):
            assert tool in bundle.system
            assert tool in bundle.tools_doc

    def test_deterministic(self, gft_scenario):
        first = assemble_prompt(gft_scenario, Role.BUYER)
        second = assemble_prompt(gft_scenario, Role.BUYER)
        assert first.system == second.system


class TestScriptedPolicies:
    def test_unknown_policy(self):
        with pytest.raises(UnknownPolicy):
            scripted_policy("galaxy_brain")

    def test_policy_id_aliases(self):
        agent = scripted_policy("LinearConceder", role=Role.SELLER)
        assert agent.policy_id == "linear_conceder"

    def test_linear_conceder_offer_sequence(self, gft_scenario):
        # closed-form oracle: p_next = p - rate * (p - reservation)
        seller = scripted_policy(
            "linear_conceder", {"open": "1400", "rate": 0.5}, role=Role.SELLER
        )
        seller.begin(gft_scenario, gft_scenario.listing.price_high)
        expected = [1400_00, 1150_00, 1025_00]
        got = []
        for _ in expected:
            calls, _thought = seller.decide(ctx_for(seller, gft_scenario))
            offer = next(c for c in calls if isinstance(c, MakeOffer))
            got.append(offer.price.cents)
        assert got == expected

    def test_always_quit_quits_immediately(self, gft_scenario):
        agent = scripted_policy("always_quit", role=Role.BUYER)
        agent.begin(gft_scenario, gft_scenario.listing.price_high)
        calls, _ = agent.decide(ctx_for(agent, gft_scenario))
        assert calls == [QuitNegotiation()]

    def test_ir_violator_accepts_anything(self, gft_scenario):
        agent = scripted_policy("ir_violator", role=Role.BUYER)
        agent.begin(gft_scenario, gft_scenario.listing.price_high)
        ruinous = PendingOfferView(by=Role.SELLER, price=Money.parse("999999.00"))
        calls, _ = agent.decide(ctx_for(agent, gft_scenario, pending=ruinous))
        assert calls == [RespondToOffer(accept=True)]

    def test_ir_policies_never_accept_violating_offers(self, gft_scenario):
        for policy in ("linear_conceder", "boulware", "conceder", "firm_anchor",
                       "always_accept"):
            agent = scripted_policy(policy, role=Role.BUYER)
            agent.begin(gft_scenario, gft_scenario.listing.price_high)
            too_high = PendingOfferView(by=Role.SELLER, price=Money.parse("1200.01"))
            calls, _ = agent.decide(ctx_for(agent, gft_scenario, pending=too_high))
            assert RespondToOffer(accept=True) not in calls, policy

    def test_scripted_agents_are_deterministic(self, gft_scenario):
        def sequence():
            buyer = scripted_policy("conceder", role=Role.BUYER, name="b", seed=3)
            seller = scripted_policy("boulware", role=Role.SELLER, name="s", seed=3)
            trace = run(gft_scenario, buyer, seller)
            return [(e.kind, e.payload.get("price")) for e in trace.events]

        assert sequence() == sequence()

    def test_firm_anchor_never_moves(self):
        scenario = make_scenario("1300.00", "800.00")
        seller = scripted_policy("firm_anchor", {"open_mult": 1.5}, role=Role.SELLER)
        seller.begin(scenario, scenario.listing.price_high)
        offers = []
        for _ in range(3):
            calls, _ = seller.decide(ctx_for(seller, scenario))
            offers.append(next(c for c in calls if isinstance(c, MakeOffer)).price)
        assert len(set(offers)) == 1
