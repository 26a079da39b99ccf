"""Level-1 calculus: generalized exponents, graded coefficients and star sums.

A level-1 term is k(zeta) * e^{E(zeta)} where E is a finite sum of exponential
monomials nu * e^{s*zeta} (the principal entries, scales s > 0) plus a linear
exponential tail, and k is a graded coefficient: a plain exponential series
(grade 0) optionally extended by whole lower-scale star sums (each extension
raises the grade by one).  Star sums are ordered by asymptotic dominance of
their exponents; an infinite family is represented as an explicit truncation
plus arithmetic-progression continuations, which is what validity checking
decides on.

All values are immutable and the operations pure.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cmp_to_key
from typing import Iterable, Optional, Sequence, Union

import mpmath

from .scalars import ExactBeta, ExactScalar, as_fraction
from .series import GenExpSeries, exp_series

DEFAULT_TAIL_FLOOR = Fraction(-30)


class TransExponent:
    """Finite sum of nu*e^{s*zeta} entries (scales strictly decreasing) plus a
    linear-exponential tail with exponents below the smallest scale."""

    __slots__ = ("principal", "tail")

    def __init__(self, principal: Iterable[tuple] = (), tail: GenExpSeries | None = None):
        entries: dict[Fraction, ExactScalar] = {}
        for s, nu in principal:
            s = as_fraction(s)
            if s <= 0:
                raise ValueError("principal scales must be positive")
            nu = ExactScalar.of(nu)
            entries[s] = entries[s] + nu if s in entries else nu
        self.principal = tuple(
            (s, nu) for s, nu in sorted(entries.items(), reverse=True) if not nu.is_zero()
        )
        self.tail = tail if tail is not None else GenExpSeries.zero(DEFAULT_TAIL_FLOOR)
        if any(mu >= self.min_scale() for mu, _ in self.tail.terms):
            raise ValueError("tail exponents must stay below the smallest scale")

    @staticmethod
    def zero() -> "TransExponent":
        return TransExponent()

    @staticmethod
    def single(scale, nu, tail: GenExpSeries | None = None) -> "TransExponent":
        return TransExponent([(scale, nu)], tail)

    # -- queries -----------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.principal and self.tail.is_zero()

    def max_scale(self) -> Fraction:
        return self.principal[0][0] if self.principal else Fraction(0)

    def min_scale(self) -> Fraction:
        """Smallest principal scale; +inf sentinel (as a huge rational) if none."""
        return self.principal[-1][0] if self.principal else Fraction(10**9)

    def nu_at(self, scale) -> ExactScalar:
        scale = as_fraction(scale)
        for s, nu in self.principal:
            if s == scale:
                return nu
        return ExactScalar.of(0)

    def scales(self) -> tuple:
        return tuple(s for s, _ in self.principal)

    def is_canonical(self) -> bool:
        """Canonical (large) form: every positive-exponent part lives in the
        principal list, nothing in the tail but strictly decaying entries...
        here: the tail is empty (decaying parts belong to the coefficient)."""
        return self.tail.is_zero()

    def __eq__(self, other):
        if not isinstance(other, TransExponent):
            return NotImplemented
        return self.principal == other.principal and self.tail == other.tail

    def __hash__(self):
        return hash((self.principal, self.tail))

    # -- algebra --------------------------------------------------------------

    def __add__(self, other: "TransExponent") -> "TransExponent":
        return TransExponent(
            list(self.principal) + list(other.principal), self.tail + other.tail
        )

    def __neg__(self) -> "TransExponent":
        return TransExponent([(s, -nu) for s, nu in self.principal], -self.tail)

    def __sub__(self, other: "TransExponent") -> "TransExponent":
        return self + (-other)

    def scaled(self, c) -> "TransExponent":
        c = ExactScalar.of(c)
        return TransExponent([(s, nu * c) for s, nu in self.principal], self.tail * c)

    def compose_linear(self, alpha, beta=0) -> "TransExponent":
        """E(alpha*zeta + beta): scales multiply by alpha, entries by e^{s*beta}."""
        alpha = as_fraction(alpha)
        beta = ExactBeta.of(beta)
        return TransExponent(
            [(s * alpha, nu * beta.exp_times(s)) for s, nu in self.principal],
            self.tail.scale_argument(alpha, beta),
        )

    def derivative(self) -> GenExpSeries:
        """d/dzeta of the exponent, as a sum of exponentials (a multiplier, not
        an exponent): nu*e^{s*zeta} -> s*nu*e^{s*zeta}."""
        terms = [(s, nu * s) for s, nu in self.principal]
        return GenExpSeries(terms, self.tail.floor) + self.tail.derivative()

    def split_tail(self) -> tuple["TransExponent", GenExpSeries]:
        """Large/small split: positive tail exponents join the principal data,
        the nonpositive remainder is returned for absorption into coefficients."""
        promote = [(mu, b) for mu, b in self.tail.terms if mu > 0]
        small = GenExpSeries(
            [(mu, b) for mu, b in self.tail.terms if mu <= 0],
            self.tail.floor,
            self.tail.threshold,
        )
        large = TransExponent(
            list(self.principal) + [(mu, b) for mu, b in promote], None
        )
        return large, small

    # -- numerics ------------------------------------------------------------------

    def eval(self, zeta, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            z = mpmath.mpf(str(zeta)) if isinstance(zeta, (Fraction, str)) else mpmath.mpf(zeta)
            total = mpmath.mpf(0)
            for s, nu in self.principal:
                total += nu.numeric(prec_bits) * mpmath.exp(z * s.numerator / s.denominator)
            total += self.tail.eval(z, prec_bits)
            return total

    def canonical(self) -> str:
        entries = ", ".join(f"{nu.canonical()}@{s}" for s, nu in self.principal)
        if self.tail.is_zero():
            return "EE{" + entries + "}"
        tail_terms = " + ".join(
            f"{b.canonical()}*E({mu})" for mu, b in self.tail.terms
        ) or "0"
        return "EE{" + entries + " | " + tail_terms + f" / floor={self.tail.floor}" + "}"

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"TransExponent[{self.canonical()}]"


class K1Coefficient:
    """Graded coefficient: base exponential series plus optional whole star
    bodies at strictly lower scales (absolute scales; each layer of bodies
    raises the grade by one)."""

    __slots__ = ("base", "uppers")

    def __init__(self, base: GenExpSeries | None = None, uppers: Iterable[tuple] = ()):
        self.base = base if base is not None else GenExpSeries.zero(DEFAULT_TAIL_FLOOR)
        merged: dict[Fraction, StarSeries] = {}
        for scale, body in uppers:
            scale = as_fraction(scale)
            if scale <= 0:
                raise ValueError("upper scales must be positive")
            merged[scale] = merged[scale] + body if scale in merged else body
        self.uppers = tuple(
            (s, b) for s, b in sorted(merged.items()) if not b.is_zero()
        )

    @staticmethod
    def of(x) -> "K1Coefficient":
        if isinstance(x, K1Coefficient):
            return x
        if isinstance(x, GenExpSeries):
            return K1Coefficient(x)
        return K1Coefficient(GenExpSeries([(0, ExactScalar.of(x))], DEFAULT_TAIL_FLOOR))

    @staticmethod
    def one() -> "K1Coefficient":
        return K1Coefficient.of(1)

    @property
    def level(self) -> int:
        if not self.uppers:
            return 0
        return 1 + max(body.level for _, body in self.uppers)

    def is_zero(self) -> bool:
        return self.base.is_zero() and not self.uppers

    def __eq__(self, other):
        if not isinstance(other, K1Coefficient):
            return NotImplemented
        return self.base == other.base and self.uppers == other.uppers

    def __hash__(self):
        return hash((self.base, self.uppers))

    def __add__(self, other: "K1Coefficient") -> "K1Coefficient":
        other = K1Coefficient.of(other)
        return K1Coefficient(
            self.base + other.base, list(self.uppers) + list(other.uppers)
        )

    def __neg__(self) -> "K1Coefficient":
        return K1Coefficient(-self.base, [(s, -b) for s, b in self.uppers])

    def __sub__(self, other):
        return self + (-K1Coefficient.of(other))

    def __mul__(self, other) -> "K1Coefficient":
        """Product; the grade never silently drops, and multiplying two bodies
        leaves their combined double-exponential content explicit in the
        result's bodies (escalation is visible, not hidden)."""
        if isinstance(other, GenExpSeries):
            return K1Coefficient(
                self.base * other, [(s, b.mul_series(other)) for s, b in self.uppers]
            )
        if isinstance(other, (int, Fraction, ExactScalar)):
            c = ExactScalar.of(other)
            return K1Coefficient(
                self.base * c, [(s, b.mul_scalar(c)) for s, b in self.uppers]
            )
        other = K1Coefficient.of(other)
        out = K1Coefficient(self.base * other.base)
        for s, b in self.uppers:
            if not other.base.is_zero():
                out = out + K1Coefficient(None, [(s, b.mul_series(other.base))])
        for s, b in other.uppers:
            if not self.base.is_zero():
                out = out + K1Coefficient(None, [(s, b.mul_series(self.base))])
        for s1, b1 in self.uppers:
            for s2, b2 in other.uppers:
                prod = b1 * b2  # ambient max(s1, s2); keeps both scales explicit
                out = out + K1Coefficient(None, [(prod.scale, prod)])
        return out

    __rmul__ = __mul__

    def derivative(self) -> "K1Coefficient":
        return K1Coefficient(
            self.base.derivative(), [(s, b.derivative()) for s, b in self.uppers]
        )

    def compose_linear(self, alpha, beta=0) -> "K1Coefficient":
        return K1Coefficient(
            self.base.scale_argument(alpha, beta),
            [
                (as_fraction(alpha) * s, b.compose_linear(alpha, beta))
                for s, b in self.uppers
            ],
        )

    def leading_scalar(self) -> Optional[ExactScalar]:
        """Coefficient of the asymptotically dominant component (the base wins
        over any double-exponentially small body)."""
        if not self.base.is_zero():
            return self.base.leading_term()[1]
        for _, body in self.uppers:  # smallest scale decays slowest
            lead = body.leading_term()
            if lead is not None:
                return lead.coeff.leading_scalar()
        return None

    def eval(self, zeta, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            total = self.base.eval(zeta, prec_bits)
            for _, body in self.uppers:
                total += body.eval(zeta, prec_bits)
            return total

    def canonical(self) -> str:
        parts = [self.base.canonical()]
        for s, b in self.uppers:
            parts.append(f"up@{s}:{b.canonical()}")
        return "[" + " ; ".join(parts) + "]"

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"K1Coefficient[{self.canonical()}]"


class Level1Term:
    __slots__ = ("coeff", "exponent")

    def __init__(self, coeff, exponent: TransExponent):
        coeff = K1Coefficient.of(coeff)
        if coeff.is_zero():
            raise ValueError("level-1 terms carry nonzero coefficients")
        if exponent.principal:
            ambient = exponent.max_scale()
            for s, _ in coeff.uppers:
                if s >= ambient:
                    raise ValueError(
                        f"coefficient body at scale {s} must stay below the "
                        f"term's ambient scale {ambient}"
                    )
        self.coeff = coeff
        self.exponent = exponent

    def __eq__(self, other):
        if not isinstance(other, Level1Term):
            return NotImplemented
        return self.coeff == other.coeff and self.exponent == other.exponent

    def __hash__(self):
        return hash((self.coeff, self.exponent))

    @property
    def level(self) -> int:
        """Grade of the term: coefficient grade, or 1+ if the exponent itself
        still carries entries below its ambient scale (content that a graded
        coefficient would have to absorb)."""
        sub = 1 if len(self.exponent.principal) > 1 else 0
        return max(self.coeff.level, sub)

    def eval(self, zeta, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            return self.coeff.eval(zeta, prec_bits) * mpmath.exp(
                self.exponent.eval(zeta, prec_bits)
            )

    def canonical(self) -> str:
        return f"({self.coeff.canonical()})*{self.exponent.canonical()}"

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"Level1Term[{self.canonical()}]"


@dataclass(frozen=True)
class ArithmeticTail:
    """Continuation descriptor for an infinite family: beyond the explicit
    terms, exponents continue as base + q*step for q = 0, 1, 2, ..."""

    base: TransExponent
    step: TransExponent
    note: str = ""

    def shifted(self, extra: TransExponent) -> "ArithmeticTail":
        return ArithmeticTail(self.base + extra, self.step, self.note)

    def compose_linear(self, alpha, beta=0) -> "ArithmeticTail":
        return ArithmeticTail(
            self.base.compose_linear(alpha, beta),
            self.step.compose_linear(alpha, beta),
            self.note,
        )

    def canonical(self) -> str:
        return f"cont(base={self.base.canonical()}; step={self.step.canonical()})"


def _exponent_compare(e1: TransExponent, e2: TransExponent) -> int:
    """Dominance of e^{e1} vs e^{e2}: lexicographic on the principal entries,
    largest scale first; a larger entry wins.  0 means equal principal data."""
    for e in (e1, e2):
        if not e.is_canonical():
            raise ValueError("term comparison requires large normal form")
    scales = sorted(set(e1.scales()) | set(e2.scales()), reverse=True)
    for s in scales:
        d = (e1.nu_at(s) - e2.nu_at(s)).sign()
        if d:
            return d
    return 0


class TermOrder(enum.Enum):
    DOMINATES = "dominates"
    DOMINATED = "dominated"
    EQUAL_PRINCIPAL = "comparable-equal-principal"


def compare_terms(t1: Level1Term, t2: Level1Term) -> TermOrder:
    """Asymptotic dominance of two terms in large normal form.

    Any strict difference of the principal data decides (coefficients carry at
    most linear-exponential growth, the double exponential wins); equal
    principal data is reported as such -- coefficient-level ordering is
    deliberately not decided here.
    """
    d = _exponent_compare(t1.exponent, t2.exponent)
    if d > 0:
        return TermOrder.DOMINATES
    if d < 0:
        return TermOrder.DOMINATED
    return TermOrder.EQUAL_PRINCIPAL


class StarSeries:
    """A finite star sum at an ambient scale, terms in descending dominance,
    with optional arithmetic continuations describing the infinite family it
    truncates.  `accuracy` is the claimed kept-rate bound at the ambient scale
    (errors are O(e^{-(accuracy+eps) e^{scale*zeta}}))."""

    __slots__ = ("scale", "terms", "accuracy", "tails", "notes")

    def __init__(
        self,
        scale,
        terms: Iterable[Level1Term] = (),
        accuracy=None,
        tails: Iterable[ArithmeticTail] = (),
        notes: Iterable[str] = (),
    ):
        self.scale = as_fraction(scale)
        terms = list(terms)
        for t in terms:
            if t.exponent.max_scale() > self.scale:
                raise ValueError(
                    f"term at scale {t.exponent.max_scale()} exceeds ambient {self.scale}"
                )
        self.terms = tuple(
            sorted(terms, key=cmp_to_key(self._term_cmp))
        )
        self.accuracy = None if accuracy is None else as_fraction(accuracy)
        self.tails = tuple(tails)
        self.notes = tuple(notes)

    @staticmethod
    def _term_cmp(a: Level1Term, b: Level1Term) -> int:
        try:
            return -_exponent_compare(a.exponent, b.exponent)
        except ValueError:
            return 0  # raw forms keep insertion order

    @staticmethod
    def empty(scale, accuracy=None) -> "StarSeries":
        return StarSeries(scale, (), accuracy)

    # -- queries ---------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms and not self.tails

    @property
    def level(self) -> int:
        return max((t.level for t in self.terms), default=0)

    def leading_term(self) -> Optional[Level1Term]:
        return self.terms[0] if self.terms else None

    def __eq__(self, other):
        if not isinstance(other, StarSeries):
            return NotImplemented
        return (
            self.scale == other.scale
            and self.terms == other.terms
            and self.accuracy == other.accuracy
            and self.tails == other.tails
        )

    def __hash__(self):
        return hash((self.scale, self.terms, self.accuracy, self.tails))

    def _with(self, **kw) -> "StarSeries":
        data = dict(
            scale=self.scale,
            terms=self.terms,
            accuracy=self.accuracy,
            tails=self.tails,
            notes=self.notes,
        )
        data.update(kw)
        return StarSeries(**data)

    # -- algebra -------------------------------------------------------------------

    def __add__(self, other: "StarSeries") -> "StarSeries":
        scale = max(self.scale, other.scale)
        acc = _min_opt(self.accuracy, other.accuracy)
        merged = _merge_terms(list(self.terms) + list(other.terms))
        return StarSeries(
            scale, merged, acc, self.tails + other.tails, self.notes + other.notes
        )

    def __neg__(self) -> "StarSeries":
        return StarSeries(
            self.scale,
            [Level1Term(-t.coeff, t.exponent) for t in self.terms],
            self.accuracy,
            tuple(self.tails),
            self.notes,
        )

    def __sub__(self, other: "StarSeries") -> "StarSeries":
        return self + (-other)

    def mul_series(self, g: GenExpSeries) -> "StarSeries":
        if g.is_zero():
            return StarSeries.empty(self.scale, self.accuracy)
        return self._with(
            terms=[Level1Term(t.coeff * g, t.exponent) for t in self.terms]
        )

    def mul_scalar(self, c) -> "StarSeries":
        c = ExactScalar.of(c)
        if c.is_zero():
            return StarSeries.empty(self.scale, self.accuracy)
        return self._with(
            terms=[Level1Term(t.coeff * c, t.exponent) for t in self.terms]
        )

    def __mul__(self, other: "StarSeries") -> "StarSeries":
        scale = max(self.scale, other.scale)
        if self.scale == other.scale:
            acc = _min_opt(
                _add_opt(self.accuracy, other.min_rate()),
                _add_opt(other.accuracy, self.min_rate()),
            )
        else:
            hi = self if self.scale > other.scale else other
            acc = hi.accuracy
        terms = []
        for t1 in self.terms:
            for t2 in other.terms:
                terms.append(
                    Level1Term(t1.coeff * t2.coeff, t1.exponent + t2.exponent)
                )
        tails = []
        for tail in self.tails:
            for t2 in other.terms[:1]:
                tails.append(tail.shifted(t2.exponent))
            for t2 in other.tails:
                tails.append(ArithmeticTail(tail.base + t2.base, tail.step + t2.step,
                                            tail.note or t2.note))
        for tail in other.tails:
            for t1 in self.terms[:1]:
                tails.append(tail.shifted(t1.exponent))
        return StarSeries(scale, _merge_terms(terms), acc, tails,
                          self.notes + other.notes)

    def min_rate(self) -> Fraction:
        """Smallest decay rate at the ambient scale among stored terms."""
        rates = [
            -_nu_fraction(t.exponent.nu_at(self.scale))
            for t in self.terms
            if not t.exponent.nu_at(self.scale).is_zero()
        ]
        return min(rates) if rates else Fraction(0)

    def derivative(self) -> "StarSeries":
        out = StarSeries.empty(self.scale, self.accuracy)
        for t in self.terms:
            out = out + term_derivative(t)
        return out._with(tails=self.tails, notes=out.notes)

    def compose_linear(self, alpha, beta=0) -> "StarSeries":
        """Plain substitution zeta -> alpha*zeta + beta (no conjugation prefactor)."""
        alpha = as_fraction(alpha)
        beta = ExactBeta.of(beta)
        acc = self.accuracy
        if acc is not None and not beta.is_zero():
            scaled = acc * beta.exp_times(self.scale)
            acc = _fraction_lower_bound(scaled)
        return StarSeries(
            self.scale * alpha,
            [
                Level1Term(
                    t.coeff.compose_linear(alpha, beta),
                    t.exponent.compose_linear(alpha, beta),
                )
                for t in self.terms
            ],
            acc,
            [tail.compose_linear(alpha, beta) for tail in self.tails],
            self.notes,
        )

    def truncate(self, max_rate, coeff_floor=None) -> "StarSeries":
        """Drop terms decaying faster than e^{-max_rate * e^{scale*zeta}} and
        floor the coefficient bases."""
        max_rate = as_fraction(max_rate)
        kept = []
        for t in self.terms:
            nu = t.exponent.nu_at(self.scale)
            rate = -_nu_fraction(nu) if not nu.is_zero() else Fraction(0)
            if rate > max_rate:
                continue
            coeff = t.coeff
            if coeff_floor is not None:
                coeff = _floor_coeff(coeff, coeff_floor)
            if not coeff.is_zero():
                kept.append(Level1Term(coeff, t.exponent))
        acc = max_rate if self.accuracy is None else min(self.accuracy, max_rate)
        return StarSeries(self.scale, kept, acc, self.tails, self.notes)

    # -- numerics ----------------------------------------------------------------------

    def eval(self, zeta, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            total = mpmath.mpf(0)
            for t in self.terms:
                total += t.eval(zeta, prec_bits)
            return total

    # -- printing -------------------------------------------------------------------------

    def canonical(self) -> str:
        head = f"star(scale={self.scale}, acc={self.accuracy if self.accuracy is not None else 'none'})"
        body = " ; ".join(t.canonical() for t in self.terms)
        out = head + "[" + body + "]"
        for tail in self.tails:
            out += " & " + tail.canonical()
        return out

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"StarSeries[{self.canonical()}]"


def _nu_fraction(nu: ExactScalar) -> Fraction:
    """Rational value of a rate; non-rational rates fall back to a certified
    rational lower approximation."""
    if nu.is_rational():
        return nu.as_fraction()
    return _fraction_lower_bound(nu)


def _fraction_lower_bound(x: ExactScalar) -> Fraction:
    v = x.numeric(128)
    return Fraction(int(mpmath.floor(v * 4096)), 4096)


def _min_opt(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return min(a, b)


def _add_opt(a, b):
    return None if a is None else a + b


def _merge_terms(terms: Sequence[Level1Term]) -> list[Level1Term]:
    """Merge terms with exactly equal exponents when both coefficients are
    grade 0 (an honest K-coefficient addition); higher-grade formal sums stay
    as separate terms because their ordering is the undecided question."""
    out: list[Optional[Level1Term]] = []
    by_exp: dict[TransExponent, int] = {}
    for t in terms:
        if t.coeff.level == 0:
            idx = by_exp.get(t.exponent)
            if idx is not None:
                prev = out[idx]
                if prev is None:
                    out[idx] = t
                    continue
                if prev.coeff.level == 0:
                    summed = prev.coeff + t.coeff
                    out[idx] = (
                        None if summed.is_zero() else Level1Term(summed, t.exponent)
                    )
                    continue
            else:
                by_exp[t.exponent] = len(out)
        out.append(t)
    return [t for t in out if t is not None]


# -- operations ---------------------------------------------------------------------


def exponent_derivative(e: TransExponent) -> GenExpSeries:
    """Derivative of a generalized exponent, returned as the exponential-sum
    multiplier it acts as."""
    return e.derivative()


def term_derivative(t: Level1Term) -> StarSeries:
    """(k e^{E})' = (k' + k E') e^{E}; notes record when the coefficient grade
    is >= 1, i.e. the derivative's coefficient does not stay in the grade-0
    class."""
    mult = t.exponent.derivative()
    coeff = t.coeff.derivative() + t.coeff * mult
    scale = max(t.exponent.max_scale(), Fraction(0)) or _coeff_scale(t.coeff)
    notes = ()
    if t.coeff.level > 0:
        notes = (
            f"derivative coefficient carries grade-{t.coeff.level} bodies; "
            "it is not expressible with grade-0 coefficients",
        )
    if coeff.is_zero():
        return StarSeries.empty(scale)
    return StarSeries(scale, [Level1Term(coeff, t.exponent)], None, (), notes)


def _coeff_scale(k: K1Coefficient) -> Fraction:
    scales = [s for s, _ in k.uppers]
    return max(scales) if scales else Fraction(0)


def normal_form(s: StarSeries, coeff_floor=None) -> StarSeries:
    """Large normal form: positive sub-scale exponent entries join the
    principal data; decaying tails are absorbed into the coefficient through
    the Taylor series of exp; exactly equal exponents merge (grade 0)."""
    new_terms = []
    for t in s.terms:
        large, small = t.exponent.split_tail()
        coeff = t.coeff
        if not small.is_zero():
            floor = coeff_floor if coeff_floor is not None else coeff.base.floor
            coeff = coeff * exp_series(small, floor)
        if not coeff.is_zero():
            new_terms.append(Level1Term(coeff, large))
    return StarSeries(
        s.scale, _merge_terms(new_terms), s.accuracy, s.tails, s.notes
    )


@dataclass(frozen=True)
class ValidityResult:
    valid: bool
    witness_nu: Optional[ExactScalar] = None
    reason: str = ""

    def __bool__(self):
        return self.valid

    def canonical(self) -> str:
        if self.valid:
            return f"Valid ({self.reason})" if self.reason else "Valid"
        mag = abs(_nu_fraction(self.witness_nu)) if self.witness_nu is not None else "?"
        return f"Invalid (principal value stuck at magnitude {mag}; {self.reason})"


def validity_check(
    family: Union[StarSeries, Sequence[TransExponent], Iterable[TransExponent]],
    scale,
    sample: int = 12,
) -> ValidityResult:
    """Does the principal exponent at the ambient scale tend to -infinity along
    the family?  Continuation descriptors are decided exactly; bare generators
    are sampled (and say so in the reason)."""
    scale = as_fraction(scale)
    if isinstance(family, StarSeries):
        for tail in family.tails:
            d = tail.step.nu_at(scale)
            if d.is_zero():
                return ValidityResult(
                    False,
                    tail.base.nu_at(scale),
                    f"continuation varies only below scale {scale}"
                    + (f" [{tail.note}]" if tail.note else ""),
                )
            if d.sign() > 0:
                return ValidityResult(False, tail.base.nu_at(scale), "growing continuation")
        if family.tails:
            return ValidityResult(True, None, "all continuations descend at the ambient scale")
        return ValidityResult(True, None, "finite family")
    exponents = list(_take(family, sample))
    if not exponents:
        return ValidityResult(True, None, "empty family")
    nus = [_nu_fraction(e.nu_at(scale)) for e in exponents]
    for i in range(1, len(nus)):
        if nus[i] >= nus[i - 1]:
            if all(x == nus[i] for x in nus[i:]):
                return ValidityResult(
                    False, ExactScalar.of(nus[i]), f"sampled principal value is constant from index {i}"
                )
            if nus[i] == nus[i - 1]:
                continue  # non-strict descent is permitted
            return ValidityResult(False, ExactScalar.of(nus[i]), "sampled principal value increases")
    if nus[-1] < nus[0]:
        return ValidityResult(True, None, f"sampled {len(nus)} exponents, descending")
    return ValidityResult(False, ExactScalar.of(nus[-1]), "sampled principal value never descends")


def _take(it, n):
    out = []
    for x in it:
        out.append(x)
        if len(out) >= n:
            break
    return out


def flatten_coefficient(k: K1Coefficient) -> StarSeries:
    """View a graded coefficient as a star sum in its own right: the base
    becomes a trivial-exponent term and the bodies contribute their terms at
    their own scales (continuations included)."""
    scale = _coeff_scale(k)
    terms: list[Level1Term] = []
    tails: list[ArithmeticTail] = []
    if not k.base.is_zero():
        terms.append(Level1Term(K1Coefficient(k.base), TransExponent.zero()))
    for _, body in k.uppers:
        terms.extend(body.terms)
        tails.extend(body.tails)
    return StarSeries(max(scale, Fraction(0)) or Fraction(1), terms, None, tails)


# -- divide and differentiate -----------------------------------------------------


@dataclass(frozen=True)
class GapWitness:
    """The coefficient combination k_q'k_1 - k_1'k_q + k_q k_1 (E_q' - E_1')
    that escaped the graded class, with the invalid rewrite that proves it."""

    expression: K1Coefficient
    rewrite: StarSeries
    validity: ValidityResult
    class_level: int
    level_required: int

    def canonical(self) -> str:
        return (
            f"GapDetected: derivative coefficient needs grade {self.level_required} "
            f"inside a grade-{self.class_level} sum; rewrite at scale "
            f"{self.rewrite.scale} is {self.validity.canonical()}"
        )


@dataclass(frozen=True)
class LowerBoundReport:
    certified: bool
    scale: Optional[Fraction]  # bound e^{-rate * e^{scale*zeta}}; scale 0 means e^{-rate*zeta}
    rate: Optional[Fraction]
    steps: tuple = ()
    gap: Optional[GapWitness] = None

    def bound_text(self) -> str:
        if not self.certified:
            return self.gap.canonical() if self.gap else "no bound"
        if self.scale == 0:
            return f"|s(zeta)| >= e^(-{self.rate}*zeta) for large zeta"
        return f"|s(zeta)| >= e^(-{self.rate}*e^({self.scale}*zeta)) for large zeta"

    def canonical(self) -> str:
        head = "CertifiedLowerBound" if self.certified else "GapDetected"
        lines = [head + ": " + self.bound_text()]
        lines.extend("  - " + s for s in self.steps)
        return "\n".join(lines)


DEFAULT_SLACK = Fraction(1, 2)


def ordering_lower_bound(
    s: StarSeries, class_level: Optional[int] = None, slack: Fraction = DEFAULT_SLACK
) -> LowerBoundReport:
    """Sharp-type exponential lower bound for a finite star sum, or the exact
    point where the argument breaks.

    The sum is normalized; if one term strictly dominates, every ratio term
    vanishes at infinity and the dominant term certifies the bound directly.
    An equal-principal block forces the derivative step: the new coefficients
    k_q'k_1 - k_1'k_q + k_q k_1 (E_q' - E_1') must stay inside the graded class
    for the recursion to continue, and when their rewrite is invalid the gap is
    reported instead of a bound.
    """
    s = normal_form(s)
    if not s.terms:
        raise ValueError("lower bound requested for an empty sum")
    if class_level is None:
        class_level = s.level
    steps: list[str] = []
    return _lower_bound(s, class_level, slack, steps, depth=0)


def _lower_bound(
    s: StarSeries, class_level: int, slack: Fraction, steps: list, depth: int
) -> LowerBoundReport:
    terms = list(s.terms)
    t1 = terms[0]
    block = [t for t in terms[1:] if compare_terms(t1, t) == TermOrder.EQUAL_PRINCIPAL]
    rest = [t for t in terms[1:] if compare_terms(t1, t) == TermOrder.DOMINATES]
    if len(block) + len(rest) + 1 != len(terms):
        raise ValueError("leading term is not maximal; sum is not normalized")

    if not block:
        # Strict dominance: S = 1 + sum of ratio terms, every ratio vanishing.
        coeff_rep = _coefficient_bound(t1.coeff, class_level, slack, steps, depth)
        if coeff_rep is not None and not coeff_rep.certified:
            return coeff_rep
        sigma = t1.exponent.max_scale()
        if sigma == 0:
            steps.append(f"[{depth}] single coefficient term; linear bound from its dominant part")
            return LowerBoundReport(
                True, coeff_rep.scale, coeff_rep.rate, tuple(steps)
            ) if coeff_rep else LowerBoundReport(True, Fraction(0), slack, tuple(steps))
        nu = t1.exponent.nu_at(sigma)
        if nu.sign() >= 0:
            raise ValueError("dominant term is not exponentially small")
        rate = -_nu_fraction(nu) + slack
        steps.append(
            f"[{depth}] dominant term at scale {sigma} with principal value "
            f"{_nu_fraction(nu)}; {len(terms) - 1} ratio term(s) vanish at infinity"
        )
        return LowerBoundReport(True, sigma, rate, tuple(steps))

    # Equal-principal block: divide by the first term and differentiate.
    steps.append(
        f"[{depth}] {len(block) + 1} terms share the principal data; "
        "dividing by the first and differentiating"
    )
    new_terms: list[Level1Term] = []
    e1_deriv = exponent_derivative(t1.exponent)
    for t in block + rest:
        wronsk = (
            t.coeff.derivative() * t1.coeff
            - t1.coeff.derivative() * t.coeff
            + (t.coeff * t1.coeff) * (exponent_derivative(t.exponent) - e1_deriv)
        )
        if wronsk.is_zero():
            steps.append(f"[{depth}] a ratio is an exact constant; it cannot cancel the 1")
            continue
        if wronsk.level > class_level:
            rewrite = flatten_coefficient(wronsk)
            validity = validity_check(rewrite, rewrite.scale)
            if not validity.valid:
                steps.append(
                    f"[{depth}] derivative coefficient escapes grade {class_level}: "
                    f"rewrite at scale {rewrite.scale} has a stuck principal value"
                )
                gap = GapWitness(wronsk, rewrite, validity, class_level, wronsk.level)
                return LowerBoundReport(False, None, None, tuple(steps), gap)
            steps.append(
                f"[{depth}] derivative coefficient has grade {wronsk.level} > {class_level} "
                "but its rewrite is still a valid family; continuing"
            )
        delta = t.exponent - t1.exponent
        new_terms.append(Level1Term(wronsk, delta))

    if not new_terms:
        sigma = t1.exponent.max_scale()
        nu = t1.exponent.nu_at(sigma) if sigma else ExactScalar.of(0)
        rate = (-_nu_fraction(nu) if sigma else Fraction(0)) + slack
        steps.append(f"[{depth}] all ratios constant; the sum is a nonzero multiple of the lead")
        return LowerBoundReport(True, sigma, rate, tuple(steps))

    inner = StarSeries(
        max((t.exponent.max_scale() for t in new_terms), default=s.scale) or s.scale,
        new_terms,
        None,
        s.tails,
    )
    rec = _lower_bound(normal_form(inner), class_level, slack, steps, depth + 1)
    if not rec.certified:
        return rec
    sigma1 = t1.exponent.max_scale()
    rate1 = -_nu_fraction(t1.exponent.nu_at(sigma1)) if sigma1 else Fraction(0)
    if rec.scale is not None and rec.scale > sigma1:
        scale, rate = rec.scale, rec.rate + slack
    elif rec.scale == sigma1:
        scale, rate = sigma1, rate1 + (rec.rate or 0) + slack
    else:
        scale, rate = sigma1, rate1 + slack
    steps.append(f"[{depth}] integrating the derivative bound back")
    return LowerBoundReport(True, scale, rate, tuple(steps))


def _coefficient_bound(
    k: K1Coefficient, class_level: int, slack: Fraction, steps: list, depth: int
) -> Optional[LowerBoundReport]:
    """Bound for a graded coefficient on its own: the base dominates any body,
    and among bodies the smallest scale decays slowest."""
    if not k.base.is_zero():
        mu, _ = k.base.leading_term()
        return LowerBoundReport(True, Fraction(0), -mu + slack, tuple(steps))
    if not k.uppers:
        return None
    scale, body = k.uppers[0]  # smallest scale first
    validity = validity_check(body, scale)
    if not validity.valid:
        steps.append(
            f"[{depth}] coefficient body at scale {scale} is not a valid family"
        )
        gap = GapWitness(k, body, validity, class_level, max(k.level, class_level + 1))
        return LowerBoundReport(False, None, None, tuple(steps), gap)
    return _lower_bound(normal_form(body), body.level, slack, steps, depth + 1)
