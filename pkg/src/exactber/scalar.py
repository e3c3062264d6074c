"""Scalar rings used by every piece of linear algebra in the package.

Three interchangeable backends share one small contract (``Backend``):

* ``RationalBackend`` -- exact rational functions of the crossover
  probability ``p`` (elements are :class:`RatFn`),
* ``SeriesBackend``   -- Maclaurin series in ``p`` truncated after a fixed
  order (elements are :class:`Series`),
* ``NumericBackend``  -- double precision numbers at a fixed ``p``.

The symbol ``q`` never appears: everything is expressed through
``q = 1 - p`` when a channel probability is built, so all scalars live in
``Q(p)``. Exact rational coefficients are ``gmpy2.mpq``.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Iterable, Sequence, Union

from gmpy2 import mpq

Rational = type(mpq(0))
_ZERO = mpq(0)
_ONE = mpq(1)

__all__ = [
    "BackendMismatchError",
    "SeriesPoleError",
    "Poly",
    "RatFn",
    "Series",
    "Backend",
    "RationalBackend",
    "SeriesBackend",
    "NumericBackend",
    "make_backend",
    "as_rational",
    "poly_mul",
    "ratfn_reduce",
    "series_from_ratfn",
    "eval_at_p",
    "is_zero",
    "format_rational",
    "parse_rational",
]


class BackendMismatchError(TypeError):
    """Raised when scalars from two different rings meet in one operation."""


class SeriesPoleError(ZeroDivisionError):
    """Raised when a series is requested for a function with a pole at ``p = 0``."""


def as_rational(x) -> Rational:
    """Coerce ints, Fractions, mpq and decimal strings to an exact rational."""
    if isinstance(x, Rational):
        return x
    if isinstance(x, (int, Fraction)):
        return mpq(x)
    if isinstance(x, str):
        return parse_rational(x)
    if isinstance(x, float):
        # floats are accepted only when they are exactly representable
        return mpq(Fraction(x))
    raise TypeError(f"cannot interpret {x!r} as an exact rational")


def format_rational(x) -> str:
    """``'+N/D'`` / ``'-N/D'`` string used by the JSON formats."""
    x = as_rational(x)
    sign = "-" if x < 0 else "+"
    return f"{sign}{abs(x.numerator)}/{x.denominator}"


def parse_rational(s: str) -> Rational:
    s = s.strip()
    if s.startswith("+"):
        s = s[1:]
    return mpq(Fraction(s))


# ----------------------------------------------------------------------------
# Dense univariate polynomials over Q


class Poly:
    """Dense polynomial in ``p``; ``coeffs[k]`` is the coefficient of ``p**k``.

    Coefficients are trimmed so the last one is nonzero; the zero polynomial
    has an empty coefficient tuple.
    """

    __slots__ = ("coeffs",)

    def __init__(self, coeffs: Iterable = ()):
        cs = [as_rational(c) for c in coeffs]
        while cs and cs[-1] == 0:
            cs.pop()
        self.coeffs: tuple = tuple(cs)

    @classmethod
    def _raw(cls, cs: list) -> "Poly":
        while cs and cs[-1] == 0:
            cs.pop()
        obj = cls.__new__(cls)
        obj.coeffs = tuple(cs)
        return obj

    @classmethod
    def constant(cls, c) -> "Poly":
        return cls((c,))

    @classmethod
    def monomial(cls, k: int, c=1) -> "Poly":
        return cls([0] * k + [c])

    # -- structure --------------------------------------------------------
    @property
    def degree(self) -> int:
        """Degree; ``-1`` for the zero polynomial."""
        return len(self.coeffs) - 1

    def is_zero(self) -> bool:
        return not self.coeffs

    def lead(self) -> Rational:
        return self.coeffs[-1] if self.coeffs else _ZERO

    def valuation(self) -> int:
        """Lowest power with a nonzero coefficient (``-1`` for zero)."""
        for k, c in enumerate(self.coeffs):
            if c != 0:
                return k
        return -1

    def __getitem__(self, k: int) -> Rational:
        return self.coeffs[k] if 0 <= k < len(self.coeffs) else _ZERO

    def __len__(self) -> int:
        return len(self.coeffs)

    # -- arithmetic -------------------------------------------------------
    def __add__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        if len(a) < len(b):
            a, b = b, a
        cs = list(a)
        for i, c in enumerate(b):
            cs[i] += c
        return Poly._raw(cs)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly._raw([-c for c in self.coeffs])

    def __sub__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        other = _as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        a, b = self.coeffs, other.coeffs
        if not a or not b:
            return Poly._raw([])
        out = [_ZERO] * (len(a) + len(b) - 1)
        for i, x in enumerate(a):
            if x == 0:
                continue
            for j, y in enumerate(b):
                out[i + j] += x * y
        return Poly._raw(out)

    __rmul__ = __mul__

    def __pow__(self, n: int) -> "Poly":
        if n < 0:
            raise ValueError("negative polynomial power")
        result, base = Poly((1,)), self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    def scale(self, c) -> "Poly":
        c = as_rational(c)
        if c == 0:
            return Poly._raw([])
        return Poly._raw([x * c for x in self.coeffs])

    def divmod(self, other: "Poly") -> tuple["Poly", "Poly"]:
        if other.is_zero():
            raise ZeroDivisionError("division by zero polynomial")
        rem = list(self.coeffs)
        db = other.degree
        lb = other.coeffs[-1]
        if len(rem) - 1 < db:
            return Poly._raw([]), Poly._raw(rem)
        quot = [_ZERO] * (len(rem) - db)
        for k in range(len(rem) - 1 - db, -1, -1):
            c = rem[k + db] / lb
            quot[k] = c
            if c != 0:
                for i, y in enumerate(other.coeffs):
                    rem[k + i] -= c * y
        return Poly._raw(quot), Poly._raw(rem[:db])

    def __floordiv__(self, other: "Poly") -> "Poly":
        return self.divmod(other)[0]

    def __mod__(self, other: "Poly") -> "Poly":
        return self.divmod(other)[1]

    def monic(self) -> "Poly":
        if self.is_zero():
            return self
        return self.scale(1 / self.coeffs[-1])

    def __eq__(self, other) -> bool:
        other = _as_poly(other)
        if other is NotImplemented:
            return NotImplemented
        return self.coeffs == other.coeffs

    def __hash__(self) -> int:
        return hash(self.coeffs)

    def __call__(self, x):
        """Horner evaluation at an exact rational or a float."""
        acc = _ZERO if not isinstance(x, float) else 0.0
        if isinstance(x, float):
            for c in reversed(self.coeffs):
                acc = acc * x + float(c)
            return acc
        x = as_rational(x)
        for c in reversed(self.coeffs):
            acc = acc * x + c
        return acc

    def integer_content(self) -> tuple[int, int]:
        """(lcm of denominators, gcd of scaled numerators)."""
        den = 1
        for c in self.coeffs:
            den = math.lcm(den, int(c.denominator))
        g = 0
        for c in self.coeffs:
            g = math.gcd(g, int(c * den))
        return den, g

    def __repr__(self) -> str:
        return f"Poly({self})"

    def __str__(self) -> str:
        return _poly_str(self.coeffs)


def _as_poly(x):
    if isinstance(x, Poly):
        return x
    if isinstance(x, (int, Fraction, Rational)):
        return Poly((x,))
    return NotImplemented


def _term_str(c: Rational, k: int) -> str:
    mag = abs(c)
    if k == 0:
        body = str(mag.numerator) if mag.denominator == 1 else f"{mag.numerator}/{mag.denominator}"
    else:
        var = "p" if k == 1 else f"p^{k}"
        if mag == 1:
            body = var
        elif mag.denominator == 1:
            body = f"{mag.numerator}{var}"
        else:
            body = f"{mag.numerator}/{mag.denominator} {var}"
    return body


def _poly_str(coeffs: Sequence[Rational]) -> str:
    parts = []
    for k, c in enumerate(coeffs):
        if c == 0:
            continue
        body = _term_str(c, k)
        if not parts:
            parts.append(("-" if c < 0 else "") + body)
        else:
            parts.append(("- " if c < 0 else "+ ") + body)
    return " ".join(parts) if parts else "0"


def poly_mul(a: Poly, b: Poly) -> Poly:
    return a * b


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Monic gcd by the Euclidean algorithm over Q."""
    while not b.is_zero():
        a, b = b, a % b
        if not b.is_zero():
            b = b.monic()
    return a.monic()


# ----------------------------------------------------------------------------
# Rational functions


class RatFn:
    """Reduced rational function ``num / den`` in ``p``.

    Internally the denominator is kept monic; :meth:`integer_form` gives the
    presentation with coprime integer coefficients used for display and JSON.
    """

    __slots__ = ("num", "den")

    def __init__(self, num, den=None, *, reduce: bool = True):
        num = _as_poly(num) if not isinstance(num, Poly) else num
        if den is None:
            den = Poly((1,))
        elif not isinstance(den, Poly):
            den = _as_poly(den)
        if num is NotImplemented or den is NotImplemented:
            raise TypeError("RatFn needs polynomial numerator and denominator")
        if den.is_zero():
            raise ZeroDivisionError("division by zero polynomial")
        if reduce:
            num, den = _reduce_pair(num, den)
        self.num: Poly = num
        self.den: Poly = den

    @classmethod
    def _raw(cls, num: Poly, den: Poly) -> "RatFn":
        obj = cls.__new__(cls)
        obj.num = num
        obj.den = den
        return obj

    def is_zero(self) -> bool:
        return self.num.is_zero()

    def _coerce(self, other):
        if isinstance(other, RatFn):
            return other
        if isinstance(other, (Series,)) or isinstance(other, float):
            raise BackendMismatchError(f"cannot combine RatFn with {type(other).__name__}")
        if isinstance(other, Poly):
            return RatFn._raw(other, Poly((1,)))
        if isinstance(other, (int, Fraction, Rational)):
            return RatFn._raw(Poly((other,)), Poly((1,)))
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.num.is_zero():
            return self
        if self.num.is_zero():
            return o
        if self.den == o.den:
            return RatFn(self.num + o.num, self.den)
        return RatFn(self.num * o.den + o.num * self.den, self.den * o.den)

    __radd__ = __add__

    def __neg__(self) -> "RatFn":
        return RatFn._raw(-self.num, self.den)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self + (-o)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o + (-self)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if self.num.is_zero() or o.num.is_zero():
            return RatFn._raw(Poly(), Poly((1,)))
        # cross-cancel before multiplying keeps the gcds small
        g1 = poly_gcd(self.num, o.den)
        g2 = poly_gcd(o.num, self.den)
        n1, d2 = (self.num // g1, o.den // g1) if g1.degree > 0 else (self.num, o.den)
        n2, d1 = (o.num // g2, self.den // g2) if g2.degree > 0 else (o.num, self.den)
        num, den = n1 * n2, d1 * d2
        lc = den.lead()
        return RatFn._raw(num.scale(1 / lc), den.scale(1 / lc))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        if o.num.is_zero():
            raise ZeroDivisionError("division by zero polynomial")
        return self * RatFn._raw(o.den, o.num)._normalized()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o / self

    def _normalized(self) -> "RatFn":
        lc = self.den.lead()
        return RatFn._raw(self.num.scale(1 / lc), self.den.scale(1 / lc))

    def __eq__(self, other) -> bool:
        try:
            o = self._coerce(other)
        except BackendMismatchError:
            return False
        if o is NotImplemented:
            return NotImplemented
        return self.num * o.den == o.num * self.den

    def __hash__(self) -> int:
        return hash((self.num, self.den))

    def __call__(self, x):
        return eval_at_p(self, x)

    def integer_form(self) -> tuple[list[int], list[int]]:
        """Numerator and denominator with coprime integer coefficients.

        The denominator's leading coefficient is positive.
        """
        den_l = 1
        for c in self.num.coeffs + self.den.coeffs:
            den_l = math.lcm(den_l, int(c.denominator))
        num = [int(c * den_l) for c in self.num.coeffs]
        den = [int(c * den_l) for c in self.den.coeffs]
        g = 0
        for c in num + den:
            g = math.gcd(g, c)
        g = g or 1
        if den[-1] < 0:
            g = -g
        return [c // g for c in num], [c // g for c in den]

    def to_json(self) -> dict:
        num, den = self.integer_form()
        return {"num": [format_rational(c) for c in num], "den": [format_rational(c) for c in den]}

    @classmethod
    def from_json(cls, obj: dict) -> "RatFn":
        return cls(Poly(parse_rational(s) for s in obj["num"]), Poly(parse_rational(s) for s in obj["den"]))

    def __repr__(self) -> str:
        return f"RatFn({self})"

    def __str__(self) -> str:
        num, den = self.integer_form()
        if den == [1]:
            return _poly_str([mpq(c) for c in num])
        return f"({_poly_str([mpq(c) for c in num])}) / ({_poly_str([mpq(c) for c in den])})"


def _reduce_pair(num: Poly, den: Poly) -> tuple[Poly, Poly]:
    if den.is_zero():
        raise ZeroDivisionError("division by zero polynomial")
    if num.is_zero():
        return Poly(), Poly((1,))
    g = poly_gcd(num, den)
    if g.degree > 0:
        num, den = num // g, den // g
    lc = den.lead()
    return num.scale(1 / lc), den.scale(1 / lc)


def ratfn_reduce(r: RatFn) -> RatFn:
    """Cancel the gcd of numerator and denominator and make the latter monic."""
    num, den = _reduce_pair(r.num, r.den)
    return RatFn._raw(num, den)


# ----------------------------------------------------------------------------
# Truncated power series


class Series:
    """Power series in ``p`` known modulo ``p**(order + 1)``."""

    __slots__ = ("coeffs", "order")

    def __init__(self, coeffs: Iterable, order: int):
        if order < 0:
            raise ValueError("series order must be >= 0")
        cs = [as_rational(c) for c in coeffs][: order + 1]
        cs.extend([_ZERO] * (order + 1 - len(cs)))
        self.coeffs: tuple = tuple(cs)
        self.order = order

    @classmethod
    def _raw(cls, cs: list, order: int) -> "Series":
        obj = cls.__new__(cls)
        obj.coeffs = tuple(cs)
        obj.order = order
        return obj

    def _coerce(self, other):
        if isinstance(other, Series):
            if other.order != self.order:
                raise BackendMismatchError(f"series orders differ: {self.order} vs {other.order}")
            return other
        if isinstance(other, (RatFn, float)):
            raise BackendMismatchError(f"cannot combine Series with {type(other).__name__}")
        if isinstance(other, Poly):
            return Series(other.coeffs, self.order)
        if isinstance(other, (int, Fraction, Rational)):
            return Series._raw([as_rational(other)] + [_ZERO] * self.order, self.order)
        return NotImplemented

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def is_unit(self) -> bool:
        return self.coeffs[0] != 0

    def valuation(self) -> int:
        """Index of the first nonzero coefficient, ``order + 1`` for zero."""
        for k, c in enumerate(self.coeffs):
            if c != 0:
                return k
        return self.order + 1

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Series._raw([a + b for a, b in zip(self.coeffs, o.coeffs)], self.order)

    __radd__ = __add__

    def __neg__(self) -> "Series":
        return Series._raw([-a for a in self.coeffs], self.order)

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return Series._raw([a - b for a, b in zip(self.coeffs, o.coeffs)], self.order)

    def __rsub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o - self

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        a, b, n = self.coeffs, o.coeffs, self.order + 1
        out = [_ZERO] * n
        for i in range(n):
            x = a[i]
            if x == 0:
                continue
            for j in range(n - i):
                y = b[j]
                if y != 0:
                    out[i + j] += x * y
        return Series._raw(out, self.order)

    __rmul__ = __mul__

    def inverse(self) -> "Series":
        a = self.coeffs
        if a[0] == 0:
            raise ZeroDivisionError("non-unit divisor: series has zero constant term")
        n = self.order + 1
        inv0 = 1 / a[0]
        out = [inv0] + [_ZERO] * (n - 1)
        for k in range(1, n):
            acc = _ZERO
            for i in range(1, k + 1):
                if a[i] != 0:
                    acc += a[i] * out[k - i]
            out[k] = -acc * inv0
        return Series._raw(out, self.order)

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return self * o.inverse()

    def __rtruediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return NotImplemented
        return o * self.inverse()

    def __eq__(self, other) -> bool:
        try:
            o = self._coerce(other)
        except BackendMismatchError:
            return False
        if o is NotImplemented:
            return NotImplemented
        return self.coeffs == o.coeffs

    def __hash__(self) -> int:
        return hash((self.coeffs, self.order))

    def __call__(self, x):
        return eval_at_p(self, x)

    def to_json(self) -> dict:
        return {"coeffs": [format_rational(c) for c in self.coeffs], "order": self.order}

    @classmethod
    def from_json(cls, obj: dict) -> "Series":
        return cls([parse_rational(s) for s in obj["coeffs"]], int(obj["order"]))

    def __repr__(self) -> str:
        return f"Series({self})"

    def __str__(self) -> str:
        return f"{_poly_str(self.coeffs)} + O(p^{self.order + 1})"


def series_from_ratfn(r: RatFn, order: int) -> Series:
    """Maclaurin coefficients of ``r`` through ``p**order``."""
    den0 = r.den[0]
    if den0 == 0:
        raise SeriesPoleError("series pole at p=0")
    return Series(r.num.coeffs, order) / Series(r.den.coeffs, order)


# ----------------------------------------------------------------------------
# Generic helpers


Scalar = Union[RatFn, Series, float]


def is_zero(x) -> bool:
    if isinstance(x, (RatFn, Series, Poly)):
        return x.is_zero()
    return x == 0


def eval_at_p(x, p):
    """Value of a scalar at crossover probability ``p``.

    Exact rational ``p`` gives an exact result for :class:`RatFn` and
    :class:`Poly`; a float ``p`` gives a float. Series are summed through
    their known order.
    """
    if isinstance(x, RatFn):
        if isinstance(p, float):
            return x.num(p) / x.den(p)
        p = as_rational(p)
        return x.num(p) / x.den(p)
    if isinstance(x, Series):
        return Poly(x.coeffs)(p if isinstance(p, float) else as_rational(p))
    if isinstance(x, Poly):
        return x(p)
    return x


# ----------------------------------------------------------------------------
# Backends


class Backend:
    """Scalar ring contract used by matrix assembly and elimination."""

    name = "abstract"
    exact = True

    def zero(self):
        raise NotImplementedError

    def one(self):
        raise NotImplementedError

    def from_poly(self, poly: Poly):
        raise NotImplementedError

    def from_rational(self, x):
        return self.from_poly(Poly((x,)))

    def from_float(self, x: float):
        raise TypeError(f"{self.name} backend cannot hold inexact channel probabilities")

    def is_zero(self, x) -> bool:
        return is_zero(x)

    def pivot_rank(self, x):
        """Sort key for pivot choice; ``None`` means the entry cannot be a pivot."""
        raise NotImplementedError

    def to_json(self, x):
        raise NotImplementedError


class RationalBackend(Backend):
    name = "exact"

    def zero(self) -> RatFn:
        return RatFn._raw(Poly(), Poly((1,)))

    def one(self) -> RatFn:
        return RatFn._raw(Poly((1,)), Poly((1,)))

    def from_poly(self, poly: Poly) -> RatFn:
        return RatFn._raw(poly, Poly((1,)))

    def pivot_rank(self, x: RatFn):
        if x.is_zero():
            return None
        return (x.num.degree + x.den.degree, len(x.num.coeffs))

    def to_json(self, x: RatFn):
        return x.to_json()


class SeriesBackend(Backend):
    name = "series"

    def __init__(self, order: int = 10):
        if order < 0:
            raise ValueError("series order must be >= 0")
        self.order = order

    def zero(self) -> Series:
        return Series._raw([_ZERO] * (self.order + 1), self.order)

    def one(self) -> Series:
        return Series._raw([_ONE] + [_ZERO] * self.order, self.order)

    def from_poly(self, poly: Poly) -> Series:
        return Series(poly.coeffs, self.order)

    def pivot_rank(self, x: Series):
        if x.coeffs[0] == 0:
            return None
        return (0, sum(1 for c in x.coeffs if c != 0))

    def to_json(self, x: Series):
        return x.to_json()


class NumericBackend(Backend):
    """Double precision at a fixed crossover probability (``p`` may be None
    for channels whose probabilities are already numbers)."""

    name = "numeric"
    exact = False

    def __init__(self, p: float | None = None):
        self.p = None if p is None else float(p)

    def zero(self) -> float:
        return 0.0

    def one(self) -> float:
        return 1.0

    def from_poly(self, poly: Poly) -> float:
        if self.p is None:
            raise ValueError("numeric backend needs a value of p to evaluate symbolic probabilities")
        return poly(self.p)

    def from_rational(self, x) -> float:
        return float(x)

    def from_float(self, x: float) -> float:
        return float(x)

    def pivot_rank(self, x: float):
        if x == 0.0:
            return None
        return -abs(x)

    def to_json(self, x: float):
        return float(x)


def make_backend(name: str, *, order: int = 10, p: float | None = None) -> Backend:
    if name in ("exact", "ratfn", "rational"):
        return RationalBackend()
    if name == "series":
        return SeriesBackend(order)
    if name == "numeric":
        return NumericBackend(p)
    raise ValueError(f"unknown backend {name!r}")
