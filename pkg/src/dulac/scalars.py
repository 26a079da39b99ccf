"""Exact scalar arithmetic for series coefficients and affine shifts.

Coefficients of the exponential series are exact rationals extended by a small
multiplicative basis of symbols: e^r (r rational), p^m (p prime, m a rational in
(0,1)) and ln(p)^k (k a positive integer).  A scalar is a formal Q-linear
combination of such monomials; two monomials cancel only when their signatures
are identical, so zero tests are exact and no epsilon comparisons ever happen.

Affine shifts beta are carried as rat + sum of c_p * ln(p) over primes, which is
closed under addition and rational scaling and exponentiates back into the
scalar monomials (e^{mu*beta} = e^{mu*rat} * prod p^{mu*c_p}).

Everything here is immutable and safe for concurrent use.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Iterable, Union

import mpmath

RatLike = Union[int, Fraction]

_MAX_TRIAL = 1_000_000


def as_fraction(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"expected an exact rational, got {type(x).__name__}: {x!r}")


def factorize(n: int) -> dict[int, int]:
    """Prime factorization by trial division; inputs here are small by design."""
    if n <= 0:
        raise ValueError("can only factor positive integers")
    out: dict[int, int] = {}
    for p in (2, 3, 5):
        while n % p == 0:
            out[p] = out.get(p, 0) + 1
            n //= p
    d = 7
    while d * d <= n:
        if d > _MAX_TRIAL:
            raise ValueError(f"refusing to factor large composite {n}")
        while n % d == 0:
            out[d] = out.get(d, 0) + 1
            n //= d
        d += 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def _rat_factorization(q: Fraction) -> dict[int, int]:
    """Signed prime exponents of a positive rational."""
    if q <= 0:
        raise ValueError("positive rationals only")
    fac = {p: e for p, e in factorize(q.numerator).items()}
    for p, e in factorize(q.denominator).items():
        fac[p] = fac.get(p, 0) - e
    return {p: e for p, e in fac.items() if e != 0}


# A monomial signature: (exp_arg, ((prime, frac_pow), ...), ((prime, log_pow), ...)).
# The represented value is e^{exp_arg} * prod prime^frac_pow * prod ln(prime)^log_pow
# with 0 < frac_pow < 1 (integer parts are folded into the rational coefficient).
Signature = tuple

_ONE_SIG: Signature = (Fraction(0), (), ())


def _normalize_powers(pows: dict[int, Fraction]) -> tuple[Fraction, tuple]:
    """Fold integer parts of prime powers into a rational factor."""
    factor = Fraction(1)
    kept = {}
    for p, m in pows.items():
        k = m.numerator // m.denominator  # floor
        frac = m - k
        factor *= Fraction(p) ** k
        if frac:
            kept[p] = kept.get(p, Fraction(0)) + frac
    return factor, tuple(sorted(kept.items()))


class ExactScalar:
    """A formal Q-linear combination of multiplicative monomials, exact throughout."""

    __slots__ = ("_terms",)

    def __init__(self, terms: dict[Signature, Fraction] | None = None):
        self._terms = {sig: c for sig, c in (terms or {}).items() if c != 0}

    # -- constructors -------------------------------------------------------

    @staticmethod
    def of(x) -> "ExactScalar":
        if isinstance(x, ExactScalar):
            return x
        q = as_fraction(x)
        return ExactScalar({_ONE_SIG: q} if q else {})

    @staticmethod
    def exp(r) -> "ExactScalar":
        """e^r for rational r, kept symbolic unless r = 0."""
        r = as_fraction(r)
        return ExactScalar({(r, (), ()): Fraction(1)})

    @staticmethod
    def rat_pow(base, expo) -> "ExactScalar":
        """base^expo for positive rational base and rational expo, exactly."""
        base, expo = as_fraction(base), as_fraction(expo)
        pows = {p: e * expo for p, e in _rat_factorization(base).items()}
        factor, kept = _normalize_powers(pows)
        return ExactScalar({(Fraction(0), kept, ()): factor})

    @staticmethod
    def log_rat(arg) -> "ExactScalar":
        """ln(arg) for positive rational arg, as a sum of ln(prime) monomials."""
        arg = as_fraction(arg)
        terms: dict[Signature, Fraction] = {}
        for p, e in _rat_factorization(arg).items():
            sig = (Fraction(0), (), ((p, 1),))
            terms[sig] = terms.get(sig, Fraction(0)) + Fraction(e)
        return ExactScalar(terms)

    # -- queries -------------------------------------------------------------

    def is_zero(self) -> bool:
        return not self._terms

    def is_rational(self) -> bool:
        return all(sig == _ONE_SIG for sig in self._terms)

    def as_fraction(self) -> Fraction:
        if not self._terms:
            return Fraction(0)
        if not self.is_rational():
            raise ValueError(f"scalar is not rational: {self}")
        return self._terms[_ONE_SIG]

    def monomials(self) -> Iterable[tuple[Signature, Fraction]]:
        return sorted(self._terms.items())

    # -- ring ops ------------------------------------------------------------

    def __add__(self, other) -> "ExactScalar":
        other = ExactScalar.of(other)
        terms = dict(self._terms)
        for sig, c in other._terms.items():
            terms[sig] = terms.get(sig, Fraction(0)) + c
        return ExactScalar(terms)

    __radd__ = __add__

    def __neg__(self) -> "ExactScalar":
        return ExactScalar({sig: -c for sig, c in self._terms.items()})

    def __sub__(self, other) -> "ExactScalar":
        return self + (-ExactScalar.of(other))

    def __rsub__(self, other) -> "ExactScalar":
        return ExactScalar.of(other) + (-self)

    @staticmethod
    def _mul_sig(a: Signature, b: Signature) -> tuple[Fraction, Signature]:
        r = a[0] + b[0]
        pows: dict[int, Fraction] = {}
        for p, m in a[1] + b[1]:
            pows[p] = pows.get(p, Fraction(0)) + m
        factor, kept = _normalize_powers(pows)
        logs: dict[int, int] = {}
        for p, k in a[2] + b[2]:
            logs[p] = logs.get(p, 0) + k
        return factor, (r, kept, tuple(sorted(logs.items())))

    def __mul__(self, other) -> "ExactScalar":
        other = ExactScalar.of(other)
        terms: dict[Signature, Fraction] = {}
        for sa, ca in self._terms.items():
            for sb, cb in other._terms.items():
                factor, sig = self._mul_sig(sa, sb)
                terms[sig] = terms.get(sig, Fraction(0)) + ca * cb * factor
        return ExactScalar(terms)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "ExactScalar":
        other = ExactScalar.of(other)
        if other.is_zero():
            raise ZeroDivisionError("scalar division by zero")
        if len(other._terms) != 1:
            raise ValueError("can only divide by a single-monomial scalar")
        (sig, c), = other._terms.items()
        r, pows, logs = sig
        if logs:
            raise ValueError("cannot invert a ln(p) monomial exactly")
        inv_sig = (-r, tuple((p, -m) for p, m in pows), ())
        inv = ExactScalar({_ONE_SIG: 1 / c}) * ExactScalar({inv_sig: Fraction(1)})
        return self * inv

    def __pow__(self, n: int) -> "ExactScalar":
        if not isinstance(n, int) or n < 0:
            raise ValueError("only nonnegative integer powers")
        out = ExactScalar.of(1)
        for _ in range(n):
            out = out * self
        return out

    # -- comparisons and numerics ---------------------------------------------

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, Fraction)):
            other = ExactScalar.of(other)
        if not isinstance(other, ExactScalar):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(frozenset(self._terms.items()))

    def numeric(self, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            total = mpmath.mpf(0)
            for (r, pows, logs), c in sorted(self._terms.items()):
                v = mpmath.mpf(c.numerator) / c.denominator
                if r:
                    v *= mpmath.exp(mpmath.mpf(r.numerator) / r.denominator)
                for p, m in pows:
                    v *= mpmath.power(p, mpmath.mpf(m.numerator) / m.denominator)
                for p, k in logs:
                    v *= mpmath.log(p) ** k
                total += v
            return total

    def sign(self) -> int:
        """Exact sign: trivial for a single monomial (all atoms are positive reals),
        numerically certified otherwise."""
        if not self._terms:
            return 0
        if len(self._terms) == 1:
            (c,) = self._terms.values()
            return 1 if c > 0 else -1
        prec = 256
        while prec <= 4096:
            v = self.numeric(prec)
            if abs(v) > mpmath.mpf(2) ** (-(prec // 2)):
                return 1 if v > 0 else -1
            prec *= 2
        raise ValueError(f"cannot certify sign of {self}")

    def __lt__(self, other):
        return (self - ExactScalar.of(other)).sign() < 0

    def __gt__(self, other):
        return (self - ExactScalar.of(other)).sign() > 0

    # -- printing --------------------------------------------------------------

    @staticmethod
    def _format_monomial(sig: Signature, c: Fraction) -> str:
        parts = [str(c)]
        r, pows, logs = sig
        if r:
            parts.append(f"exp({r})")
        for p, m in pows:
            parts.append(f"pow({p},{m})")
        for p, k in logs:
            parts.append(f"log({p})" if k == 1 else f"log({p})^{k}")
        return "*".join(parts)

    def canonical(self) -> str:
        if not self._terms:
            return "0"
        mons = [self._format_monomial(sig, c) for sig, c in sorted(self._terms.items())]
        if len(mons) == 1:
            return mons[0]
        return "(" + " + ".join(mons) + ")"

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"ExactScalar[{self.canonical()}]"


ONE = ExactScalar.of(1)
ZERO = ExactScalar.of(0)


class ExactBeta:
    """An affine shift: rational + sum of rational multiples of ln(prime).

    Closed under addition, negation and rational scaling; e^{mu*beta} lands back
    in ExactScalar, which is what scale_argument needs.
    """

    __slots__ = ("rat", "logs")

    def __init__(self, rat=0, logs: dict[int, Fraction] | None = None):
        self.rat = as_fraction(rat)
        self.logs = tuple(sorted((p, c) for p, c in (logs or {}).items() if c != 0))

    @staticmethod
    def of(x) -> "ExactBeta":
        if isinstance(x, ExactBeta):
            return x
        return ExactBeta(as_fraction(x))

    @staticmethod
    def log(arg, mult=1) -> "ExactBeta":
        """mult * ln(arg) for a positive rational arg."""
        arg, mult = as_fraction(arg), as_fraction(mult)
        logs: dict[int, Fraction] = {}
        for p, e in _rat_factorization(arg).items():
            logs[p] = logs.get(p, Fraction(0)) + mult * e
        return ExactBeta(0, logs)

    def is_zero(self) -> bool:
        return self.rat == 0 and not self.logs

    def __add__(self, other) -> "ExactBeta":
        other = ExactBeta.of(other)
        logs = dict(self.logs)
        for p, c in other.logs:
            logs[p] = logs.get(p, Fraction(0)) + c
        return ExactBeta(self.rat + other.rat, logs)

    def __neg__(self) -> "ExactBeta":
        return ExactBeta(-self.rat, {p: -c for p, c in self.logs})

    def __sub__(self, other) -> "ExactBeta":
        return self + (-ExactBeta.of(other))

    def scale(self, q) -> "ExactBeta":
        q = as_fraction(q)
        return ExactBeta(self.rat * q, {p: c * q for p, c in self.logs})

    def exp_times(self, mu) -> ExactScalar:
        """e^{mu * beta} as an exact scalar."""
        mu = as_fraction(mu)
        out = ExactScalar.exp(mu * self.rat) if mu * self.rat else ExactScalar.of(1)
        pows = {p: mu * c for p, c in self.logs}
        factor, kept = _normalize_powers(pows)
        return out * ExactScalar({(Fraction(0), kept, ()): factor})

    def as_scalar(self) -> ExactScalar:
        """The value of beta itself (needs ln(p) monomials when logs are present)."""
        out = ExactScalar.of(self.rat)
        for p, c in self.logs:
            out = out + ExactScalar({(Fraction(0), (), ((p, 1),)): c})
        return out

    def numeric(self, prec_bits: int = 64) -> mpmath.mpf:
        with mpmath.workprec(prec_bits):
            v = mpmath.mpf(self.rat.numerator) / self.rat.denominator
            for p, c in self.logs:
                v += mpmath.log(p) * mpmath.mpf(c.numerator) / c.denominator
            return v

    def __eq__(self, other):
        if not isinstance(other, ExactBeta):
            return NotImplemented
        return self.rat == other.rat and self.logs == other.logs

    def __hash__(self):
        return hash((self.rat, self.logs))

    def canonical(self) -> str:
        parts = []
        if self.rat or not self.logs:
            parts.append(str(self.rat))
        for p, c in self.logs:
            parts.append(f"log({p})" if c == 1 else f"{c}*log({p})")
        return "+".join(parts)

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"ExactBeta[{self.canonical()}]"
