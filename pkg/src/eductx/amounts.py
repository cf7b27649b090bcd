"""Exact token arithmetic.

Amounts live as integer subunits end to end: 1 ECTX = 10^8 subunits, and one
whole ECTX equals one whole academic credit. Strings in, strings out; no
floats anywhere on any path.
"""

from __future__ import annotations

from .errors import InvalidAmount, PrecisionError

SUBUNITS_PER_TOKEN = 10**8
DECIMALS = 8
MAX_SUBUNITS = 2**64 - 1

TokenAmount = int  # subunit count


def parse_amount(text: str) -> TokenAmount:
    """Parse a decimal token string ("0.00235781") to exact subunits."""
    text = text.strip()
    if not text:
        raise InvalidAmount("empty amount")
    negative = text.startswith("-")
    body = text[1:] if negative or text.startswith("+") else text
    if not body:
        raise InvalidAmount(f"not a decimal amount: {text!r}")
    whole, _, frac = body.partition(".")
    if not whole and not frac:
        raise InvalidAmount(f"not a decimal amount: {text!r}")
    whole = whole or "0"
    if not whole.isdigit() or (frac and not frac.isdigit()):
        raise InvalidAmount(f"not a decimal amount: {text!r}")
    if len(frac) > DECIMALS:
        raise PrecisionError(f"more than {DECIMALS} fractional digits: {text!r}")
    if negative:
        raise InvalidAmount("amounts cannot be negative")
    subunits = int(whole) * SUBUNITS_PER_TOKEN + int(frac.ljust(DECIMALS, "0") or "0")
    if subunits > MAX_SUBUNITS:
        raise InvalidAmount("amount exceeds 64-bit range")
    return subunits


def format_amount(subunits: TokenAmount) -> str:
    """Render subunits with exactly 8 decimal places."""
    if subunits < 0:
        raise InvalidAmount("amounts cannot be negative")
    whole, frac = divmod(subunits, SUBUNITS_PER_TOKEN)
    return f"{whole}.{frac:08d}"


def from_tokens(tokens: int) -> TokenAmount:
    """Whole-token shortcut used for credit values."""
    if tokens < 0:
        raise InvalidAmount("amounts cannot be negative")
    return tokens * SUBUNITS_PER_TOKEN


def is_whole_tokens(subunits: TokenAmount) -> bool:
    return subunits % SUBUNITS_PER_TOKEN == 0
