"""Fixed-width checked arithmetic for firmware code.

Python integers never wrap, so firmware that wants C-like ``int32_t`` or
``uint32_t`` behaviour uses these helpers. They trap at the arithmetic site
instead of silently wrapping.
"""

from .faults import IntegerOverflowError


def _bounds(bits: int, signed: bool) -> tuple[int, int]:
    if signed:
        return -(1 << (bits - 1)), (1 << (bits - 1)) - 1
    return 0, (1 << bits) - 1


def _check(value: int, bits: int, signed: bool, op: str) -> int:
    lo, hi = _bounds(bits, signed)
    if value < lo or value > hi:
        kind = "i" if signed else "u"
        raise IntegerOverflowError(f"{op} result {value} does not fit {kind}{bits}")
    return value


def add(a: int, b: int, bits: int = 32, signed: bool = True) -> int:
    return _check(a + b, bits, signed, "add")


def sub(a: int, b: int, bits: int = 32, signed: bool = True) -> int:
    return _check(a - b, bits, signed, "sub")


def mul(a: int, b: int, bits: int = 32, signed: bool = True) -> int:
    return _check(a * b, bits, signed, "mul")


def div(a: int, b: int, bits: int = 32, signed: bool = True) -> int:
    """C-style division truncating toward zero; ``b == 0`` raises ZeroDivisionError."""
    if b == 0:
        raise ZeroDivisionError(f"division of {a} by zero")
    q = abs(a) // abs(b)
    if (a < 0) != (b < 0):
        q = -q
    return _check(q, bits, signed, "div")


def wrap(value: int, bits: int = 32, signed: bool = True) -> int:
    """Two's-complement truncation, for code that wants the silent hardware result."""
    value &= (1 << bits) - 1
    if signed and value >> (bits - 1):
        value -= 1 << bits
    return value
