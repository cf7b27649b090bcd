import pytest
from hypothesis import given
from hypothesis import strategies as st

from eductx.amounts import (
    MAX_SUBUNITS,
    SUBUNITS_PER_TOKEN,
    format_amount,
    from_tokens,
    is_whole_tokens,
    parse_amount,
)
from eductx.errors import InvalidAmount, PrecisionError


def test_reimbursement_example():
    assert parse_amount("0.00235781") == 235781


def test_unit_scale():
    assert parse_amount("1") == 100_000_000


def test_registration_amount():
    assert parse_amount("0.1") == 10_000_000


@pytest.mark.parametrize(
    "text,subunits",
    [("0", 0), ("60", 60 * SUBUNITS_PER_TOKEN), ("0.00000001", 1), ("1.5", 150_000_000)],
)
def test_parse_examples(text, subunits):
    assert parse_amount(text) == subunits


def test_nine_fraction_digits_rejected():
    with pytest.raises(PrecisionError):
        parse_amount("0.000000001")


def test_negative_rejected():
    with pytest.raises(InvalidAmount):
        parse_amount("-1")


@pytest.mark.parametrize("text", ["", "abc", "1.2.3", ".", "1e8", "--1"])
def test_garbage_rejected(text):
    with pytest.raises(InvalidAmount):
        parse_amount(text)


def test_format_fixed_width():
    assert format_amount(235781) == "0.00235781"
    assert format_amount(60 * SUBUNITS_PER_TOKEN) == "60.00000000"
    assert format_amount(0) == "0.00000000"


def test_whole_token_predicate():
    assert is_whole_tokens(from_tokens(6))
    assert not is_whole_tokens(from_tokens(6) + 1)
    assert not is_whole_tokens(450_000_000 // 100)  # 0.045 ECTX


@given(subunits=st.integers(min_value=0, max_value=MAX_SUBUNITS))
def test_parse_format_roundtrip(subunits):
    assert parse_amount(format_amount(subunits)) == subunits


@given(subunits=st.integers(min_value=0, max_value=MAX_SUBUNITS))
def test_format_has_exactly_eight_decimals(subunits):
    text = format_amount(subunits)
    whole, frac = text.split(".")
    assert len(frac) == 8
    assert whole.isdigit() and frac.isdigit()
