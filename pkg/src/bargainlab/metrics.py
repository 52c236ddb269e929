"""Negotiation metrics computed from traces.

Three dimensions: individual rationality (violation rates), strategic
effectiveness (utilities and surplus shares), and allocative efficiency
(deal rate), plus the behavioral drivers behind them (opening
aggressiveness, concession rates, temporal patience) and a quintile
decomposition by reservation price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .domain import Deal, Money, Regime, Role
from .trace import K_MAKE_OFFER, NegotiationTrace


class MalformedTrace(ValueError):
    pass


class EmptyGroup(ValueError):
    pass


class TooFewPoints(ValueError):
    pass


@dataclass
class PerNegotiationMetrics:
    """Everything the aggregators need about one finished negotiation."""

    scenario_id: str
    buyer_model: str
    seller_model: str
    regime: Regime
    buyer_reservation: Money
    seller_reservation: Money
    reference_price: Money
    deal: bool
    price: Optional[Money]
    violation_buyer: bool
    violation_seller: bool
    buyer_utility: Money
    seller_utility: Money
    surplus_buyer: Optional[float]
    surplus_seller: Optional[float]
    seller_init_aggr: Optional[float]
    buyer_init_aggr_gap: Optional[float]
    buyer_init_aggr_res: Optional[float]
    buyer_init_aggr_gap_listing: Optional[float]
    concessions_buyer: tuple[float, ...]
    concessions_seller: tuple[float, ...]
    retrogression_buyer: bool
    retrogression_seller: bool
    rounds: int
    turns: int

    @property
    def violation_any(self) -> bool:
        return self.violation_buyer or self.violation_seller


def _concession_series(offers: Sequence[Money], reservation: Money, role: Role) -> list[float]:
    """Per-step fraction of remaining surplus conceded.

    Steps whose remaining distance to the reservation is not strictly
    positive are skipped (the fraction is undefined there); negative
    values (retrogression) are kept.
    """
    series = []
    for current, nxt in zip(offers, offers[1:]):
        if role is Role.SELLER:
            remaining = current.cents - reservation.cents
            moved = current.cents - nxt.cents
        else:
            remaining = reservation.cents - current.cents
            moved = nxt.cents - current.cents
        if remaining > 0:
            series.append(moved / remaining)
    return series


def score_negotiation(trace: NegotiationTrace) -> PerNegotiationMetrics:
    """All per-negotiation metrics for one terminated trace."""
    scenario = trace.scenario
    outcome = trace.outcome
    if outcome.rounds_used < 0 or outcome.turns_used < 0:
        raise MalformedTrace("negative round accounting")

    b = scenario.buyer_reservation
    s = scenario.seller_reservation
    deal = outcome.is_deal
    price = outcome.status.price if isinstance(outcome.status, Deal) else None

    violation_buyer = deal and outcome.buyer_utility.cents < 0
    violation_seller = deal and outcome.seller_utility.cents < 0

    surplus_buyer = surplus_seller = None
    if deal and scenario.regime is Regime.GFT and price is not None:
        width = (b - s).cents
        if s <= price <= b and width > 0:
            surplus_buyer = (b - price).cents / width
            # complement, so the two shares sum to exactly 1.0
            surplus_seller = 1.0 - surplus_buyer
        elif s <= price <= b and width == 0:
            # single-point ZOPA: the full (zero) surplus is split evenly
            surplus_buyer = surplus_seller = 0.5

    buyer_offers = trace.offers(Role.BUYER)
    seller_offers = trace.offers(Role.SELLER)

    seller_init_aggr = seller_offers[0].ratio(s) if seller_offers else None

    buyer_init_aggr_gap = None
    buyer_init_aggr_res = None
    buyer_init_aggr_gap_listing = None
    if buyer_offers:
        p0_buyer = buyer_offers[0]
        buyer_init_aggr_res = (b - p0_buyer).cents / b.cents
        listing_price = trace.header.listing_price
        if listing_price.cents > 0:
            buyer_init_aggr_gap_listing = (listing_price - p0_buyer).cents / listing_price.cents
        if seller_offers:
            p0_seller = seller_offers[0]
            buyer_init_aggr_gap = (p0_seller - p0_buyer).cents / p0_seller.cents

    # concession rates are defined against valid deals only
    valid_deal = deal and surplus_buyer is not None
    concessions_buyer: tuple[float, ...] = ()
    concessions_seller: tuple[float, ...] = ()
    if valid_deal:
        concessions_buyer = tuple(_concession_series(buyer_offers, b, Role.BUYER))
        concessions_seller = tuple(_concession_series(seller_offers, s, Role.SELLER))

    retro_buyer = any(c < 0 for c in _concession_series(buyer_offers, b, Role.BUYER))
    retro_seller = any(c < 0 for c in _concession_series(seller_offers, s, Role.SELLER))

    return PerNegotiationMetrics(
        scenario_id=scenario.scenario_id,
        buyer_model=trace.header.buyer_name,
        seller_model=trace.header.seller_name,
        regime=scenario.regime,
        buyer_reservation=b,
        seller_reservation=s,
        reference_price=scenario.listing.reference_price,
        deal=deal,
        price=price,
        violation_buyer=violation_buyer,
        violation_seller=violation_seller,
        buyer_utility=outcome.buyer_utility,
        seller_utility=outcome.seller_utility,
        surplus_buyer=surplus_buyer,
        surplus_seller=surplus_seller,
        seller_init_aggr=seller_init_aggr,
        buyer_init_aggr_gap=buyer_init_aggr_gap,
        buyer_init_aggr_res=buyer_init_aggr_res,
        buyer_init_aggr_gap_listing=buyer_init_aggr_gap_listing,
        concessions_buyer=concessions_buyer,
        concessions_seller=concessions_seller,
        retrogression_buyer=retro_buyer,
        retrogression_seller=retro_seller,
        rounds=outcome.rounds_used,
        turns=outcome.turns_used,
    )


# --- aggregation --------------------------------------------------------------


def _mean(values: Iterable[float]) -> Optional[float]:
    values = [v for v in values if v is not None]
    if not values:
        return None
    return math.fsum(values) / len(values)


def _mean_of_series(series: Iterable[Sequence[float]]) -> Optional[float]:
    """Mean of per-negotiation mean concessions (each negotiation weighs equally)."""
    per_negotiation = [_mean(s) for s in series if s]
    return _mean(v for v in per_negotiation if v is not None)


@dataclass
class AggregateRow:
    """Aggregated metrics for one group of negotiations."""

    group: dict
    n: int
    deal_rate: float
    violation_rate_buyer: float
    violation_rate_seller: float
    violation_rate_any: float
    avg_utility_buyer_all: float
    avg_utility_seller_all: float
    avg_utility_buyer_deals: Optional[float]
    avg_utility_seller_deals: Optional[float]
    mean_surplus_buyer: Optional[float]
    mean_surplus_seller: Optional[float]
    mean_seller_init_aggr: Optional[float]
    mean_buyer_init_aggr_gap: Optional[float]
    mean_buyer_init_aggr_res: Optional[float]
    mean_concession_buyer: Optional[float]
    mean_concession_seller: Optional[float]
    temporal_patience: float
    mean_turns: float

    def metric(self, name: str) -> Optional[float]:
        return getattr(self, name)


def _aggregate_one(group: dict, items: Sequence[PerNegotiationMetrics]) -> AggregateRow:
    if not items:
        raise EmptyGroup(f"empty metrics group {group!r}")
    n = len(items)
    deals = [m for m in items if m.deal]
    return AggregateRow(
        group=dict(group),
        n=n,
        deal_rate=len(deals) / n,
        violation_rate_buyer=sum(m.violation_buyer for m in items) / n,
        violation_rate_seller=sum(m.violation_seller for m in items) / n,
        violation_rate_any=sum(m.violation_any for m in items) / n,
        avg_utility_buyer_all=_mean(m.buyer_utility.cents / 100 for m in items) or 0.0,
        avg_utility_seller_all=_mean(m.seller_utility.cents / 100 for m in items) or 0.0,
        avg_utility_buyer_deals=_mean(m.buyer_utility.cents / 100 for m in deals),
        avg_utility_seller_deals=_mean(m.seller_utility.cents / 100 for m in deals),
        mean_surplus_buyer=_mean(m.surplus_buyer for m in items),
        mean_surplus_seller=_mean(m.surplus_seller for m in items),
        mean_seller_init_aggr=_mean(m.seller_init_aggr for m in items),
        mean_buyer_init_aggr_gap=_mean(m.buyer_init_aggr_gap for m in items),
        mean_buyer_init_aggr_res=_mean(m.buyer_init_aggr_res for m in items),
        mean_concession_buyer=_mean_of_series(m.concessions_buyer for m in items),
        mean_concession_seller=_mean_of_series(m.concessions_seller for m in items),
        temporal_patience=_mean(float(m.rounds) for m in items) or 0.0,
        mean_turns=_mean(float(m.turns) for m in items) or 0.0,
    )


def aggregate(
    metrics: Sequence[PerNegotiationMetrics],
    group_by: tuple[str, ...] = ("buyer_model", "seller_model", "regime"),
) -> list[AggregateRow]:
    """Aggregate per-negotiation metrics over the requested grouping keys."""
    if not metrics:
        raise EmptyGroup("no metrics to aggregate")
    groups: dict[tuple, list[PerNegotiationMetrics]] = {}
    for item in metrics:
        key = tuple(getattr(item, name) for name in group_by)
        groups.setdefault(key, []).append(item)
    rows = []
    for key in sorted(groups, key=lambda k: tuple(str(part) for part in k)):
        group = {
            name: (value.value if isinstance(value, Regime) else value)
            for name, value in zip(group_by, key)
        }
        rows.append(_aggregate_one(group, groups[key]))
    return rows


# --- quintile decomposition ----------------------------------------------------

QUINTILE_COUNT = 5


def quintile_boundaries(values: Sequence[int]) -> list[int]:
    """Empirical 20/40/60/80th percentile boundaries as order statistics."""
    ordered = sorted(values)
    n = len(ordered)
    return [ordered[math.ceil(n * k / QUINTILE_COUNT) - 1] for k in range(1, QUINTILE_COUNT)]


def quintile_of(value: int, boundaries: Sequence[int]) -> int:
    """0-based quintile; values equal to a boundary go to the lower quintile."""
    return sum(value > boundary for boundary in boundaries)


@dataclass
class QuintileRow:
    model: str
    role: Role
    regime: str
    metric: str
    cells: tuple[Optional[float], ...]  # Q1..Q5
    spread: Optional[float]
    counts: tuple[int, ...]


def quintile_decompose(
    metrics: Sequence[PerNegotiationMetrics],
    keyed_by: Role,
    key: str = "reservation",
) -> list[QuintileRow]:
    """Bucket a role's negotiations into value quintiles and aggregate each.

    ``key`` selects the bucketing value: the keyed role's reservation price
    (default, used by all reported tables) or the item's reference price.
    Boundaries are percentiles within the evaluated set; spread is the
    max-min across the five cells.
    """
    if len(metrics) < QUINTILE_COUNT:
        raise TooFewPoints(f"need at least {QUINTILE_COUNT} points, got {len(metrics)}")
    if key == "reservation":
        value_of: Callable[[PerNegotiationMetrics], int] = (
            (lambda m: m.buyer_reservation.cents)
            if keyed_by is Role.BUYER
            else (lambda m: m.seller_reservation.cents)
        )
    elif key == "reference":
        value_of = lambda m: m.reference_price.cents
    else:
        raise ValueError(f"unknown quintile key {key!r}")

    boundaries = quintile_boundaries([value_of(m) for m in metrics])
    model_of = (
        (lambda m: m.buyer_model) if keyed_by is Role.BUYER else (lambda m: m.seller_model)
    )

    buckets: dict[tuple[str, str, int], list[PerNegotiationMetrics]] = {}
    for item in metrics:
        slot = (model_of(item), item.regime.value, quintile_of(value_of(item), boundaries))
        buckets.setdefault(slot, []).append(item)

    surplus_metric = "mean_surplus_buyer" if keyed_by is Role.BUYER else "mean_surplus_seller"
    wanted = ("deal_rate", "violation_rate_any", surplus_metric, "temporal_patience")

    rows: list[QuintileRow] = []
    models = sorted({model_of(m) for m in metrics})
    regimes = sorted({m.regime.value for m in metrics})
    for model in models:
        for regime in regimes:
            counts = tuple(
                len(buckets.get((model, regime, q), ())) for q in range(QUINTILE_COUNT)
            )
            if not sum(counts):
                continue
            per_q = [
                _aggregate_one({"q": q}, buckets[(model, regime, q)])
                if (model, regime, q) in buckets
                else None
                for q in range(QUINTILE_COUNT)
            ]
            for metric in wanted:
                cells = tuple(
                    row.metric(metric) if row is not None else None for row in per_q
                )
                present = [c for c in cells if c is not None]
                spread = (max(present) - min(present)) if present else None
                rows.append(
                    QuintileRow(
                        model=model,
                        role=keyed_by,
                        regime=regime,
                        metric=metric,
                        cells=cells,
                        spread=spread,
                        counts=counts,
                    )
                )
    return rows


def spread_of(cells: Sequence[Optional[float]]) -> Optional[float]:
    present = [c for c in cells if c is not None]
    if not present:
        return None
    return max(present) - min(present)
