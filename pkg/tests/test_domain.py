"""Domain value types: money arithmetic, regimes, utilities."""

import pytest
from hypothesis import given
from hypothesis import strategies as st

from bargainlab.domain import (
    Deal,
    Money,
    MoneyError,
    Quit,
    Regime,
    Role,
    classify_regime,
    utilities,
)
from conftest import make_scenario

money = st.builds(Money, cents=st.integers(min_value=1, max_value=10**9))


class TestMoney:
    def test_parse_two_fraction_digits(self):
        assert Money.parse("1050.00").cents == 105000
        assert Money.parse("$1,050.00").cents == 105000
        assert Money.parse("1400").cents == 140000

    def test_excess_precision_bankers_rounded(self):
        assert Money.parse("10.999").cents == 1100
        assert Money.parse("10.005").cents == 1000  # ties to even
        assert Money.parse("10.015").cents == 1002
        assert Money.parse("10.025").cents == 1002

    def test_parse_rejects_garbage(self):
        with pytest.raises(MoneyError):
            Money.parse("not a price")
        with pytest.raises(MoneyError):
            Money.parse("")

    def test_str_round_trip(self):
        assert str(Money(105000)) == "1050.00"
        assert str(Money(-1)) == "-0.01"
        assert Money.parse(str(Money(123456789))) == Money(123456789)

    def test_arithmetic_is_exact(self):
        assert Money(105000) - Money(90000) == Money(15000)
        assert -(Money(5) - Money(10)) == Money(5)

    def test_pretty(self):
        assert Money(105000).pretty() == "$1,050.00"
        assert Money(-50).pretty() == "-$0.50"

    @given(money)
    def test_parse_str_identity(self, value):
        assert Money.parse(str(value)) == value


class TestRegime:
    def test_gft_iff_b_at_least_s(self):
        assert classify_regime(Money.parse("1200"), Money.parse("900")) is Regime.GFT
        assert classify_regime(Money.parse("850"), Money.parse("1100")) is Regime.NGFT
        assert classify_regime(Money.parse("100"), Money.parse("100")) is Regime.GFT

    @given(
        b=st.integers(min_value=1, max_value=10**7),
        s=st.integers(min_value=1, max_value=10**7),
        raise_b=st.integers(min_value=0, max_value=10**6),
        lower_s=st.integers(min_value=0, max_value=10**6),
    )
    def test_monotone(self, b, s, raise_b, lower_s):
        # raising b or lowering s never flips gains-from-trade off
        if classify_regime(Money(b), Money(s)) is Regime.GFT:
            assert classify_regime(Money(b + raise_b), Money(max(1, s - lower_s))) is Regime.GFT


class TestUtilities:
    def test_deal_splits_zopa(self):
        scenario = make_scenario("1200.00", "900.00")
        buyer_u, seller_u = utilities(scenario, Deal(Money.parse("1050.00")))
        assert (buyer_u, seller_u) == (Money(15000), Money(15000))

    def test_no_deal_is_zero(self):
        scenario = make_scenario("850.00", "1100.00")
        assert utilities(scenario, Quit(by=Role.BUYER)) == (Money(0), Money(0))

    def test_degenerate_point_zopa(self):
        scenario = make_scenario("100.00", "100.00")
        assert utilities(scenario, Deal(Money.parse("100.00"))) == (Money(0), Money(0))

    @given(
        b=st.integers(min_value=2, max_value=10**6),
        s=st.integers(min_value=1, max_value=10**6),
        p=st.integers(min_value=1, max_value=2 * 10**6),
    )
    def test_gft_deal_conserves_surplus(self, b, s, p):
        if b < s:
            return
        scenario = make_scenario(str(Money(b)), str(Money(s)))
        buyer_u, seller_u = utilities(scenario, Deal(Money(p)))
        assert buyer_u + seller_u == Money(b) - Money(s)
        if not s <= p <= b:
            assert min(buyer_u.cents, seller_u.cents) < 0

    @given(
        b=st.integers(min_value=1, max_value=10**6),
        s=st.integers(min_value=1, max_value=10**6),
        p=st.integers(min_value=1, max_value=2 * 10**6),
    )
    def test_ngft_deal_hurts_someone(self, b, s, p):
        if b >= s:
            return
        scenario = make_scenario(str(Money(b)), str(Money(s)))
        buyer_u, seller_u = utilities(scenario, Deal(Money(p)))
        assert min(buyer_u.cents, seller_u.cents) < 0
