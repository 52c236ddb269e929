"""Scenario generation: catalog ingestion, reservation-price sampling, splits.

Seller reservations are drawn uniformly from [0.6*p_min, 0.9*p_min] and
buyer reservations from [0.4*p_min, p_max + 0.1*(p_max - p_min)], where
p_min/p_max are the listing's historical low/high. Draws are continuous
dollars, rounded to cents, with the regime label recomputed after
rounding. Every draw gets its own PCG64 substream keyed by
(master_seed, listing id, draw index) so datasets are reproducible
byte-for-byte on any platform.
"""

from __future__ import annotations

import functools
import hashlib
import json
import threading
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Iterator, Optional

import numpy as np

from .domain import (
    Listing,
    ListingSource,
    Money,
    MoneyError,
    Regime,
    Scenario,
    Split,
    classify_regime,
)

SELLER_LO_MULT = 0.6
SELLER_HI_MULT = 0.9
BUYER_LO_MULT = 0.4
BUYER_HI_SLACK = 0.1
SPLIT_FRACTIONS = (0.80, 0.085, 0.115)


@dataclass(frozen=True)
class SamplerConfig:
    seller_lo_mult: float = SELLER_LO_MULT
    seller_hi_mult: float = SELLER_HI_MULT
    buyer_lo_mult: float = BUYER_LO_MULT
    buyer_hi_slack: float = BUYER_HI_SLACK
    split_fractions: tuple[float, float, float] = SPLIT_FRACTIONS
    master_seed: int = 0

    def __post_init__(self) -> None:
        if min(self.seller_lo_mult, self.seller_hi_mult, self.buyer_lo_mult) <= 0:
            raise ValueError("multipliers must be strictly positive")
        if abs(sum(self.split_fractions) - 1.0) > 1e-9:
            raise ValueError("split fractions must sum to 1")


DEFAULT_CONFIG = SamplerConfig()


class SchemaError(ValueError):
    def __init__(self, position: int, message: str):
        self.position = position
        super().__init__(f"catalog item {position}: {message}")


class EmptyCatalog(ValueError):
    pass


def load_catalog(path: str | Path) -> list[Listing]:
    """Read a catalog file (JSON array or JSONL of listing objects).

    Posted-price items carry only their posted price as the high bound;
    the low bound is set to half of it (banker's-rounded to the cent).
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    items: list[dict]
    stripped = text.strip()
    if not stripped:
        raise EmptyCatalog(f"{path}: empty file")
    if stripped.startswith("["):
        items = json.loads(stripped)
    else:
        items = [json.loads(line) for line in stripped.splitlines() if line.strip()]
    if not items:
        raise EmptyCatalog(f"{path}: no listings")

    listings = []
    for position, item in enumerate(items):
        try:
            source = ListingSource(item.get("source", "posted_price"))
            high = Money.parse(str(item["price_high"]))
            if source is ListingSource.POSTED_PRICE:
                low = Money.from_decimal(high.dollars * Decimal("0.5"))
            else:
                low = Money.parse(str(item["price_low"]))
            listings.append(
                Listing(
                    id=str(item["id"]),
                    title=item.get("title", ""),
                    category=item.get("category", ""),
                    description=tuple(item.get("description", ())),
                    price_high=high,
                    price_low=low,
                    source=source,
                )
            )
        except (KeyError, ValueError, MoneyError, TypeError) as exc:
            raise SchemaError(position, str(exc)) from exc
    return listings


def derive_seed(master_seed: int, listing_id: str, draw_index: int) -> int:
    """64-bit per-scenario seed from (master seed, listing id, draw index)."""
    digest = hashlib.blake2b(
        f"{master_seed}|{listing_id}|{draw_index}".encode("utf-8"), digest_size=8
    ).digest()
    return int.from_bytes(digest, "little")


_local = threading.local()


def _substream(seed: int, listing_id: str) -> np.random.Generator:
    """Independent PCG64 stream per (scenario seed, listing).

    The full 256-bit generator state comes straight from a keyed hash, so
    streams are portable and byte-identical everywhere; the bit generator
    object is reused per thread because construction dominates draw cost.
    """
    try:
        pcg, gen = _local.pair
    except AttributeError:
        pcg = np.random.PCG64(0)
        gen = np.random.Generator(pcg)
        _local.pair = (pcg, gen)
    digest = hashlib.blake2b(
        f"{seed}|{listing_id}".encode("utf-8"), digest_size=32
    ).digest()
    pcg.state = {
        "bit_generator": "PCG64",
        "state": {
            "state": int.from_bytes(digest[:16], "little"),
            "inc": int.from_bytes(digest[16:], "little") | 1,  # increment must be odd
        },
        "has_uint32": 0,
        "uinteger": 0,
    }
    return gen


@functools.lru_cache(maxsize=65536)
def reservation_bounds(listing: Listing,
                       config: SamplerConfig = DEFAULT_CONFIG) -> tuple[float, float, float, float]:
    """(s_lo, s_hi, b_lo, b_hi) in dollars for this listing."""
    p_min = listing.price_low.cents / 100
    p_max = listing.price_high.cents / 100
    return (
        config.seller_lo_mult * p_min,
        config.seller_hi_mult * p_min,
        config.buyer_lo_mult * p_min,
        p_max + config.buyer_hi_slack * (p_max - p_min),
    )


def sample_scenario(
    listing: Listing,
    seed: int,
    split: Split = Split.TEST,
    config: SamplerConfig = DEFAULT_CONFIG,
) -> Scenario:
    """Draw one scenario; deterministic per (listing.id, seed).

    The seed is stored on the scenario, so any line of a scenario file can
    be regenerated from its listing and seed alone. Draws are continuous
    dollars (seller first, then buyer) rounded half-even to the cent.
    """
    rng = _substream(seed, listing.id)
    s_lo, s_hi, b_lo, b_hi = reservation_bounds(listing, config)
    s = Money(round((s_lo + (s_hi - s_lo) * rng.random()) * 100))
    b = Money(round((b_lo + (b_hi - b_lo) * rng.random()) * 100))
    return Scenario(
        listing=listing,
        buyer_reservation=b,
        seller_reservation=s,
        regime=classify_regime(b, s),
        split=split,
        seed=seed,
    )


def gft_probability(listing: Listing, config: SamplerConfig = DEFAULT_CONFIG) -> float:
    """Exact P(b >= s) for the two independent uniform reservations.

    Closed-form integration of the rectangle above the diagonal; handles
    degenerate (zero-width) intervals as point masses.
    """
    s_lo, s_hi, b_lo, b_hi = reservation_bounds(listing, config)
    s_width = s_hi - s_lo
    b_width = b_hi - b_lo
    if s_width == 0 and b_width == 0:
        return 1.0 if b_lo >= s_lo else 0.0
    if s_width == 0:
        return min(1.0, max(0.0, (b_hi - s_lo) / b_width))
    if b_width == 0:
        return min(1.0, max(0.0, (b_lo - s_lo) / s_width))
    # area of {(s, b): b >= s} within the rectangle
    # for s <= b_lo the whole b-interval qualifies; above b_hi nothing does
    t1 = min(max(b_lo, s_lo), s_hi)
    t2 = min(max(b_hi, s_lo), s_hi)
    area = (t1 - s_lo) * b_width
    # between t1 and t2 the qualifying length is b_hi - s
    area += (b_hi * (t2 - t1)) - (t2 * t2 - t1 * t1) / 2.0
    return area / (s_width * b_width)


def make_splits(
    catalog: list[Listing],
    config: SamplerConfig = DEFAULT_CONFIG,
) -> dict[Split, list[Listing]]:
    """Deterministic, disjoint, exhaustive partition of the catalog.

    Sizes follow largest-remainder apportionment of the configured
    fractions, so each split lands within one item of its target.
    """
    if len(catalog) < 3:
        raise ValueError("need at least 3 listings to split")
    n = len(catalog)
    targets = [n * fraction for fraction in config.split_fractions]
    sizes = [int(t) for t in targets]
    remainders = sorted(
        range(3), key=lambda i: (-(targets[i] - sizes[i]), i)
    )
    for i in remainders[: n - sum(sizes)]:
        sizes[i] += 1

    order = np.random.Generator(
        np.random.PCG64(config.master_seed)
    ).permutation(n)
    shuffled = [catalog[i] for i in order]
    train = shuffled[: sizes[0]]
    val = shuffled[sizes[0]: sizes[0] + sizes[1]]
    test = shuffled[sizes[0] + sizes[1]:]
    return {Split.TRAIN: train, Split.VAL: val, Split.TEST: test}


def generate_scenarios(
    catalog: list[Listing],
    n: int,
    master_seed: int,
    split: Split = Split.TEST,
    gft_quota: Optional[int] = None,
    ngft_quota: Optional[int] = None,
    config: SamplerConfig = DEFAULT_CONFIG,
) -> list[Scenario]:
    """Draw n scenarios round-robin over the catalog.

    With quotas set, draws continue (deterministically) until each regime
    bucket is full, so e.g. a 400 GFT + 200 NGFT evaluation set can be
    reproduced from one seed.
    """
    if not catalog:
        raise EmptyCatalog("no listings to sample from")
    def draw(index: int) -> Scenario:
        listing = catalog[index % len(catalog)]
        return sample_scenario(
            listing, derive_seed(master_seed, listing.id, index), split, config
        )

    if gft_quota is not None or ngft_quota is not None:
        want = {Regime.GFT: gft_quota or 0, Regime.NGFT: ngft_quota or 0}
        have = {Regime.GFT: 0, Regime.NGFT: 0}
        out: list[Scenario] = []
        draw_index = 0
        # guard: quotas may be unattainable for extreme catalogs
        limit = 1000 * sum(want.values()) + 1000
        while (have[Regime.GFT] < want[Regime.GFT] or have[Regime.NGFT] < want[Regime.NGFT]):
            if draw_index >= limit:
                raise ValueError("could not fill regime quotas; catalog too skewed")
            scenario = draw(draw_index)
            draw_index += 1
            if have[scenario.regime] < want[scenario.regime]:
                have[scenario.regime] += 1
                out.append(scenario)
        return out
    return [draw(i) for i in range(n)]


def write_scenarios(scenarios: Iterable[Scenario], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        for scenario in scenarios:
            handle.write(json.dumps(scenario.to_dict(), sort_keys=True) + "\n")


def load_scenarios(path: str | Path) -> list[Scenario]:
    out = []
    with Path(path).open("r", encoding="utf-8") as handle:
        for line in handle:
            if line.strip():
                out.append(Scenario.from_dict(json.loads(line)))
    if not out:
        raise ValueError(f"{path}: no scenarios")
    return out
