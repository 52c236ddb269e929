"""Core value types for bilateral price negotiation.

Everything here is an immutable value: prices are exact integer cents,
roles are a two-element enum, and a Scenario bundles a catalog listing
with the two private reservation prices that define the game.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from enum import Enum
from typing import Union

_CENT = Decimal("0.01")


class Role(str, Enum):
    BUYER = "buyer"
    SELLER = "seller"

    @property
    def counterpart(self) -> "Role":
        return Role.SELLER if self is Role.BUYER else Role.BUYER

    def __str__(self) -> str:
        return self.value


class MoneyError(ValueError):
    """Raised for unparseable or out-of-domain price values."""


@dataclass(frozen=True, order=True)
class Money:
    """An exact amount in integer cents.

    Offer prices must be strictly positive; utilities reuse the same type
    and may be negative. All arithmetic stays in integers so traces and
    metrics replay bit-identically.
    """

    cents: int

    @classmethod
    def from_decimal(cls, value: Union[Decimal, int, str]) -> "Money":
        """Convert a decimal dollar amount to cents.

        Amounts are kept to exactly two fraction digits; any excess
        precision is removed with banker's rounding.
        """
        try:
            quantized = Decimal(value).quantize(_CENT, rounding=ROUND_HALF_EVEN)
        except InvalidOperation as exc:
            raise MoneyError(f"not a decimal amount: {value!r}") from exc
        return cls(int(quantized * 100))

    @classmethod
    def from_float(cls, value: float) -> "Money":
        # repr() gives the shortest decimal that round-trips the float,
        # so typical literals like 1050.00 convert exactly.
        return cls.from_decimal(Decimal(repr(value)))

    @classmethod
    def parse(cls, text: str) -> "Money":
        cleaned = text.strip().replace("$", "").replace(",", "")
        if not cleaned:
            raise MoneyError("empty price string")
        return cls.from_decimal(cleaned)

    @property
    def dollars(self) -> Decimal:
        return Decimal(self.cents) / 100

    def __str__(self) -> str:
        sign = "-" if self.cents < 0 else ""
        whole, frac = divmod(abs(self.cents), 100)
        return f"{sign}{whole}.{frac:02d}"

    def pretty(self) -> str:
        """Dollar rendering with grouping, e.g. ``$1,050.00``."""
        sign = "-" if self.cents < 0 else ""
        whole, frac = divmod(abs(self.cents), 100)
        return f"{sign}${whole:,}.{frac:02d}"

    def __add__(self, other: "Money") -> "Money":
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.cents + other.cents)

    def __sub__(self, other: "Money") -> "Money":
        if not isinstance(other, Money):
            return NotImplemented
        return Money(self.cents - other.cents)

    def __neg__(self) -> "Money":
        return Money(-self.cents)

    def ratio(self, other: "Money") -> float:
        """self / other as a float; denominator must be nonzero."""
        if other.cents == 0:
            raise ZeroDivisionError("ratio denominator is zero")
        return self.cents / other.cents


ZERO = Money(0)


class ListingSource(str, Enum):
    AMAZON_HISTORY = "amazon_history"
    POSTED_PRICE = "posted_price"


class Regime(str, Enum):
    GFT = "gft"
    NGFT = "ngft"


class Split(str, Enum):
    TRAIN = "train"
    VAL = "val"
    TEST = "test"


@dataclass(frozen=True)
class Listing:
    """A catalog item with its historical price bounds."""

    id: str
    title: str
    category: str
    description: tuple[str, ...]
    price_high: Money
    price_low: Money
    source: ListingSource

    def __post_init__(self) -> None:
        if self.price_low.cents <= 0 or self.price_high.cents <= 0:
            raise ValueError(f"listing {self.id}: prices must be positive")
        if self.price_low > self.price_high:
            raise ValueError(
                f"listing {self.id}: price_low {self.price_low} exceeds "
                f"price_high {self.price_high}"
            )

    @property
    def reference_price(self) -> Money:
        """Midpoint of the historical price range."""
        return Money((self.price_low.cents + self.price_high.cents) // 2)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "title": self.title,
            "category": self.category,
            "description": list(self.description),
            "price_high": str(self.price_high),
            "price_low": str(self.price_low),
            "source": self.source.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Listing":
        return cls(
            id=data["id"],
            title=data["title"],
            category=data.get("category", ""),
            description=tuple(data.get("description", ())),
            price_high=Money.parse(data["price_high"]),
            price_low=Money.parse(data["price_low"]),
            source=ListingSource(data["source"]),
        )


def classify_regime(b: Money, s: Money) -> Regime:
    """Gains-from-trade exactly when the buyer's cap reaches the seller's floor."""
    return Regime.GFT if b >= s else Regime.NGFT


@dataclass(frozen=True)
class Scenario:
    """One negotiation instance: a listing plus sampled private reservations."""

    listing: Listing
    buyer_reservation: Money
    seller_reservation: Money
    regime: Regime
    split: Split
    seed: int

    def __post_init__(self) -> None:
        if self.buyer_reservation.cents <= 0 or self.seller_reservation.cents <= 0:
            raise ValueError("reservation prices must be positive")
        expected = classify_regime(self.buyer_reservation, self.seller_reservation)
        if expected is not self.regime:
            raise ValueError(
                f"regime {self.regime.value} inconsistent with reservations "
                f"b={self.buyer_reservation} s={self.seller_reservation}"
            )

    @property
    def scenario_id(self) -> str:
        return f"{self.listing.id}#{self.seed}"

    @property
    def zopa_width(self) -> Money | None:
        """Total available surplus b - s; defined only under gains from trade."""
        if self.regime is not Regime.GFT:
            return None
        return self.buyer_reservation - self.seller_reservation

    def reservation_for(self, role: Role) -> Money:
        return self.buyer_reservation if role is Role.BUYER else self.seller_reservation

    def to_dict(self) -> dict:
        return {
            "scenario_id": self.scenario_id,
            "listing": self.listing.to_dict(),
            "buyer_reservation": str(self.buyer_reservation),
            "seller_reservation": str(self.seller_reservation),
            "regime": self.regime.value,
            "split": self.split.value,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        return cls(
            listing=Listing.from_dict(data["listing"]),
            buyer_reservation=Money.parse(data["buyer_reservation"]),
            seller_reservation=Money.parse(data["seller_reservation"]),
            regime=Regime(data["regime"]),
            split=Split(data["split"]),
            seed=int(data["seed"]),
        )


# --- negotiation outcomes ---------------------------------------------------


@dataclass(frozen=True)
class Deal:
    price: Money


@dataclass(frozen=True)
class Quit:
    by: Role


@dataclass(frozen=True)
class RoundLimit:
    pass


Status = Union[Deal, Quit, RoundLimit]


def utilities(scenario: Scenario, status: Status) -> tuple[Money, Money]:
    """Utilities (buyer, seller) for a terminal status.

    A deal at price p yields (b - p, p - s); any no-deal outcome yields
    (0, 0). A deal outside a party's reservation comes out negative here;
    the violation itself is flagged downstream rather than mapped to an
    infinite penalty, so aggregation stays finite.
    """
    if isinstance(status, Deal):
        if status.price.cents <= 0:
            raise ValueError("deal price must be positive")
        return (
            scenario.buyer_reservation - status.price,
            status.price - scenario.seller_reservation,
        )
    return (ZERO, ZERO)


@dataclass(frozen=True)
class Outcome:
    """Terminal record of a negotiation."""

    status: Status
    rounds_used: int
    turns_used: int
    buyer_utility: Money
    seller_utility: Money
    fault: str | None = None

    @property
    def is_deal(self) -> bool:
        return isinstance(self.status, Deal)


_ID_SAFE = re.compile(r"[^A-Za-z0-9._-]+")


def safe_name(text: str) -> str:
    """Filesystem-safe slug used for job ids and trace file names."""
    return _ID_SAFE.sub("-", text).strip("-") or "x"
