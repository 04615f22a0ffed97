"""Exact TeX lengths in scaled points (65536 sp = 1 pt)."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import NumberTooLarge

UNITY = 65536
MAX_DIMEN = 2**30 - 1
INFINITY = 2**31 - 1

# unit -> (numerator, denominator) relative to pt
UNIT_RATIOS: dict[str, tuple[int, int]] = {
    "pt": (1, 1),
    "in": (7227, 100),
    "pc": (12, 1),
    "cm": (7227, 254),
    "mm": (7227, 2540),
    "bp": (7227, 7200),
    "dd": (1238, 1157),
    "cc": (14856, 1157),
}
UNITS = ("em", "ex", "pt", "in", "pc", "cm", "mm", "bp", "dd", "cc", "sp")


def round_decimals(digits: str) -> int:
    """Fraction given by decimal digits, rounded to a multiple of 2^-16."""
    a = 0
    for d in reversed(digits[:17]):
        a = (a + int(d) * 2 * UNITY) // 10
    return (a + 1) // 2


def xn_over_d(x: int, n: int, d: int) -> tuple[int, int]:
    """Truncated x*n/d and its remainder, with TeX's sign convention."""
    q, r = divmod(abs(x) * n, d)
    if q >= 2**30 + 2**15:
        raise NumberTooLarge("Dimension too large")
    return (q, r) if x >= 0 else (-q, -r)


def nx_plus_y(n: int, x: int, y: int) -> int:
    v = n * x + y
    if abs(v) > MAX_DIMEN:
        raise NumberTooLarge("Dimension too large")
    return v


def to_sp(integer: int, frac_digits: str, unit: str, *, em: int = 10 * UNITY,
          ex: int | None = None, negative: bool = False) -> int:
    """Convert ``integer.frac_digits unit`` to scaled points the way TeX does."""
    if integer > INFINITY:
        raise NumberTooLarge("Number too big")
    f = round_decimals(frac_digits) if frac_digits else 0
    if unit in ("em", "ex"):
        v = em if unit == "em" else (ex if ex is not None else xn_over_d(em, 45, 100)[0])
        val = nx_plus_y(integer, v, xn_over_d(v, f, UNITY)[0])
    elif unit == "sp":
        val = integer
    else:
        num, denom = UNIT_RATIOS[unit]
        if num != 1 or denom != 1:
            integer, rem = xn_over_d(integer, num, denom)
            f = (num * f + UNITY * rem) // denom
            integer += f // UNITY
            f %= UNITY
        if integer >= 16384:
            raise NumberTooLarge("Dimension too large")
        val = integer * UNITY + f
    if abs(val) > MAX_DIMEN:
        raise NumberTooLarge("Dimension too large")
    return -val if negative else val


def print_scaled(s: int) -> str:
    """Decimal rendering used by \\the on a dimension (without the unit)."""
    out = []
    if s < 0:
        out.append("-")
        s = -s
    out.append(str(s // UNITY))
    out.append(".")
    s = 10 * (s % UNITY) + 5
    delta = 10
    while True:
        if delta > UNITY:
            s = s + 0o100000 - 50000
        out.append(str(s // UNITY))
        s = 10 * (s % UNITY)
        delta *= 10
        if s <= delta:
            break
    return "".join(out)


@dataclass(frozen=True, order=True, slots=True)
class Dimension:
    sp: int

    def __post_init__(self):
        if abs(self.sp) > MAX_DIMEN:
            raise NumberTooLarge("Dimension too large")

    @classmethod
    def from_pt(cls, pt: int | str) -> Dimension:
        integer, _, frac = str(pt).lstrip("-").partition(".")
        return cls(to_sp(int(integer or 0), frac, "pt", negative=str(pt).startswith("-")))

    @property
    def pt(self) -> float:
        return self.sp / UNITY

    def __add__(self, other: Dimension) -> Dimension:
        return Dimension(self.sp + other.sp)

    def __sub__(self, other: Dimension) -> Dimension:
        return Dimension(self.sp - other.sp)

    def __neg__(self) -> Dimension:
        return Dimension(-self.sp)

    def __str__(self) -> str:
        return print_scaled(self.sp) + "pt"
