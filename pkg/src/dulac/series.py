"""Truncated generalized exponential series: finite sums of b * e^{mu*zeta}.

This is the substrate for every asymptotic class in the engine: level-0
deviations (all exponents negative), level-1 K-coefficient bases (finitely many
nonnegative exponents allowed) and the exponent tails of level-1 terms.

Truncation discipline: a series with floor Omega stores exactly the terms with
mu > Omega; everything at or below Omega is unknown and absorbed into an
O(e^{Omega*zeta}) error.  Floors propagate pessimistically, so no retained term
ever depends on a discarded one.  All values are immutable; operations are pure.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Optional

import mpmath

from .scalars import ExactBeta, ExactScalar, as_fraction


class GenExpSeries:
    __slots__ = ("terms", "floor", "threshold")

    def __init__(self, terms: Iterable[tuple] = (), floor=Fraction(-8), threshold=0):
        floor = as_fraction(floor)
        threshold = as_fraction(threshold)
        if threshold < 0:
            raise ValueError("threshold must be nonnegative")
        merged: dict[Fraction, ExactScalar] = {}
        for mu, b in terms:
            mu = as_fraction(mu)
            b = ExactScalar.of(b)
            if mu in merged:
                merged[mu] = merged[mu] + b
            else:
                merged[mu] = b
        kept = tuple(
            (mu, b)
            for mu, b in sorted(merged.items(), reverse=True)
            if not b.is_zero() and mu > floor
        )
        self.terms = kept
        self.floor = floor
        self.threshold = threshold

    # -- constructors ---------------------------------------------------------

    @staticmethod
    def zero(floor=Fraction(-8), threshold=0) -> "GenExpSeries":
        return GenExpSeries((), floor, threshold)

    @staticmethod
    def one(floor=Fraction(-8)) -> "GenExpSeries":
        return GenExpSeries([(0, 1)], floor)

    @staticmethod
    def single(mu, b, floor, threshold=0) -> "GenExpSeries":
        return GenExpSeries([(mu, b)], floor, threshold)

    # -- queries ----------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self.terms

    @property
    def is_fc0(self) -> bool:
        """All exponents strictly negative (exponentially small deviation)."""
        return all(mu < 0 for mu, _ in self.terms)

    @property
    def is_k10(self) -> bool:
        """Level-1 coefficient carrier: finitely many nonnegative exponents.

        Always true for these finite truncations; exposed for invariant checks.
        """
        return True

    def leading_term(self) -> Optional[tuple[Fraction, ExactScalar]]:
        return self.terms[0] if self.terms else None

    def leading_exponent(self) -> Fraction:
        """Exponent of the dominant term, or the floor for the zero series."""
        return self.terms[0][0] if self.terms else self.floor

    def coefficient(self, mu) -> ExactScalar:
        mu = as_fraction(mu)
        for m, b in self.terms:
            if m == mu:
                return b
        return ExactScalar.of(0)

    def __eq__(self, other):
        if not isinstance(other, GenExpSeries):
            return NotImplemented
        return self.terms == other.terms and self.floor == other.floor

    def __hash__(self):
        return hash((self.terms, self.floor))

    def __bool__(self):
        return not self.is_zero()

    # -- ring operations ----------------------------------------------------------

    def __add__(self, other: "GenExpSeries") -> "GenExpSeries":
        floor = max(self.floor, other.floor)
        return GenExpSeries(
            list(self.terms) + list(other.terms),
            floor,
            max(self.threshold, other.threshold),
        )

    def __neg__(self) -> "GenExpSeries":
        return GenExpSeries([(mu, -b) for mu, b in self.terms], self.floor, self.threshold)

    def __sub__(self, other: "GenExpSeries") -> "GenExpSeries":
        return self + (-other)

    def __mul__(self, other) -> "GenExpSeries":
        if isinstance(other, (int, Fraction, ExactScalar)):
            c = ExactScalar.of(other)
            return GenExpSeries(
                [(mu, b * c) for mu, b in self.terms], self.floor, self.threshold
            )
        # Convolution floor: a discarded term of one factor, multiplied by the
        # other factor's leading term, bounds what the product can claim.
        floor = max(
            self.floor + other.leading_exponent(),
            other.floor + self.leading_exponent(),
        )
        terms: dict[Fraction, ExactScalar] = {}
        for mu1, b1 in self.terms:
            for mu2, b2 in other.terms:
                mu = mu1 + mu2
                if mu <= floor:
                    continue
                prod = b1 * b2
                terms[mu] = terms[mu] + prod if mu in terms else prod
        return GenExpSeries(
            terms.items(), floor, max(self.threshold, other.threshold)
        )

    __rmul__ = __mul__

    def derivative(self) -> "GenExpSeries":
        return GenExpSeries(
            [(mu, b * mu) for mu, b in self.terms], self.floor, self.threshold
        )

    def scale_argument(self, alpha, beta=0) -> "GenExpSeries":
        """The series of zeta -> self(alpha*zeta + beta), exactly.

        Term (mu, b) becomes (alpha*mu, b * e^{mu*beta}); the floor scales to
        alpha * Omega.  beta may be an ExactBeta (rational + logs of rationals).
        """
        alpha = as_fraction(alpha)
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        beta = ExactBeta.of(beta)
        terms = [(alpha * mu, b * beta.exp_times(mu)) for mu, b in self.terms]
        # The validity region transforms; keep a conservative rational bound.
        thr = Fraction(0)
        if self.threshold > 0 or not beta.is_zero():
            raw = (mpmath.mpf(str(self.threshold)) - beta.numeric(64)) / mpmath.mpf(
                str(alpha)
            )
            thr = max(Fraction(0), Fraction(int(mpmath.ceil(raw * 64)), 64))
        return GenExpSeries(terms, alpha * self.floor, thr)

    def truncate(self, floor) -> "GenExpSeries":
        floor = as_fraction(floor)
        if floor < self.floor:
            floor = self.floor  # cannot invent accuracy below the known floor
        return GenExpSeries(self.terms, floor, self.threshold)

    # -- numerics -------------------------------------------------------------------

    def eval(self, zeta, prec_bits: int = 64) -> mpmath.mpf:
        """Sum the stored terms at zeta, in descending-exponent order."""
        with mpmath.workprec(prec_bits):
            z = mpmath.mpf(str(zeta)) if isinstance(zeta, (Fraction, str)) else mpmath.mpf(zeta)
            total = mpmath.mpf(0)
            for mu, b in self.terms:
                total += b.numeric(prec_bits) * mpmath.exp(
                    z * mu.numerator / mu.denominator
                )
            return total

    # -- printing ----------------------------------------------------------------------

    def canonical(self) -> str:
        if not self.terms:
            body = "0"
        else:
            body = " + ".join(f"{b.canonical()}*E({mu})" for mu, b in self.terms)
        tail = f" | floor={self.floor}"
        if self.threshold:
            tail += f", a={self.threshold}"
        return body + tail

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"GenExpSeries[{self.canonical()}]"


def taylor_compose(series: GenExpSeries, delta: GenExpSeries, floor) -> GenExpSeries:
    """series(zeta + delta(zeta)) expanded to the requested floor.

    delta must be exponentially small (negative leading exponent); the Taylor
    index is stopped exactly where further terms fall at or below the floor.
    """
    floor = as_fraction(floor)
    if delta.is_zero():
        return series.truncate(floor)
    lead_d = delta.leading_exponent()
    if lead_d >= 0:
        raise ValueError("increment must be exponentially small")
    out = GenExpSeries.zero(floor, max(series.threshold, delta.threshold))
    deriv = series
    power = GenExpSeries.one(floor)
    fact = 1
    s = 0
    while not deriv.is_zero() and deriv.leading_exponent() + s * lead_d > floor:
        contrib = deriv * power * ExactScalar.of(Fraction(1, fact))
        out = out + contrib.truncate(floor)
        s += 1
        fact *= s
        deriv = deriv.derivative()
        power = power * delta
    return out.truncate(floor)


def exp_series(t: GenExpSeries, floor) -> GenExpSeries:
    """e^{t(zeta)} for a series with no positive exponents, to the given floor.

    A constant term exponentiates to an exact scalar factor; the strictly
    decaying remainder is expanded by the Taylor series of exp.
    """
    floor = as_fraction(floor)
    const = ExactScalar.of(0)
    rest_terms = []
    for mu, b in t.terms:
        if mu > 0:
            raise ValueError("exp_series needs nonpositive exponents")
        if mu == 0:
            const = const + b
        else:
            rest_terms.append((mu, b))
    if not const.is_rational():
        raise ValueError("cannot exponentiate a non-rational constant exactly")
    factor = ExactScalar.exp(const.as_fraction()) if not const.is_zero() else ExactScalar.of(1)
    rest = GenExpSeries(rest_terms, min(floor, t.floor), t.threshold)
    out = GenExpSeries.one(floor)
    power = GenExpSeries.one(floor)
    fact = 1
    n = 0
    lead = rest.leading_exponent()
    while not rest.is_zero() and (n + 1) * lead > floor:
        n += 1
        fact *= n
        power = power * rest
        out = out + power * ExactScalar.of(Fraction(1, fact))
    return (out * factor).truncate(floor)


def log1p_series(u: GenExpSeries, floor) -> GenExpSeries:
    """ln(1 + u(zeta)) for an exponentially small u, to the given floor."""
    floor = as_fraction(floor)
    if u.is_zero():
        return GenExpSeries.zero(floor, u.threshold)
    lead = u.leading_exponent()
    if lead >= 0:
        raise ValueError("log1p_series needs an exponentially small argument")
    out = GenExpSeries.zero(floor, u.threshold)
    power = GenExpSeries.one(floor)
    m = 0
    while (m + 1) * lead > floor:
        m += 1
        power = power * u
        out = out + power * ExactScalar.of(Fraction((-1) ** (m + 1), m))
    return out.truncate(floor)


def fc0_lower_bound(phi: GenExpSeries) -> Optional[tuple[Fraction, ExactScalar]]:
    """The dominant term of a nonzero level-0 series certifies |phi| >= e^{-lambda*zeta}
    for every lambda > -mu; returns (mu, b) or None for the zero series."""
    return phi.leading_term()
