"""Chart transforms between the z-chart and the logarithmic chart zeta = -ln z.

A flow-box connector f(z) = alpha*z + sum a_q z^{q+2} becomes, in the
logarithmic chart,

    f_log(zeta) = zeta - ln(alpha) - L(zeta),
    L(zeta)     = ln(1 + sum (a_q/alpha) e^{-(q+1) zeta}),

so flowbox_to_log returns the pair (affine shift, L) and the near-identity
generator stored in a composition word carries the deviation phi = -L with
f_log = zeta - ln(alpha) + phi.

Semi-hyperbolic transits z -> e^{-1/z^k} and z -> (1/-ln z)^{1/k} become
multiplication by k followed by exp, and ln followed by division by k.  The
word compiler assembles those generators for a whole simple alternant polycycle.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Union

import mpmath

from .scalars import ExactBeta, as_fraction
from .series import GenExpSeries, log1p_series


class NotSimpleAlternantError(ValueError):
    """The polycycle description violates the alternation/evenness conditions."""


@dataclass(frozen=True)
class AffineMap:
    """zeta -> alpha*zeta + beta with alpha > 0 and beta an exact shift."""

    alpha: Fraction
    beta: ExactBeta

    def __init__(self, alpha, beta=0):
        alpha = as_fraction(alpha)
        if alpha <= 0:
            raise ValueError("affine linear part must be positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", ExactBeta.of(beta))

    @staticmethod
    def identity() -> "AffineMap":
        return AffineMap(1, 0)

    def is_identity(self) -> bool:
        return self.alpha == 1 and self.beta.is_zero()

    def compose(self, inner: "AffineMap") -> "AffineMap":
        """self after inner: zeta -> self(inner(zeta))."""
        return AffineMap(
            self.alpha * inner.alpha, inner.beta.scale(self.alpha) + self.beta
        )

    def inverse(self) -> "AffineMap":
        inv_alpha = 1 / self.alpha
        return AffineMap(inv_alpha, (-self.beta).scale(inv_alpha))

    def apply(self, zeta, prec_bits: int = 64):
        with mpmath.workprec(prec_bits):
            a = mpmath.mpf(self.alpha.numerator) / self.alpha.denominator
            return a * zeta + self.beta.numeric(prec_bits)

    def canonical(self) -> str:
        return f"aff({self.alpha},{self.beta.canonical()})"

    def __str__(self):
        return self.canonical()


@dataclass(frozen=True)
class FlowBoxMap:
    """f(z) = alpha*z + sum_q a_q z^{q+2}: an analytic connector germ."""

    alpha: Fraction
    tail: tuple
    radius_hint: Fraction

    def __init__(self, alpha, tail: Iterable = (), radius_hint=Fraction(1, 2)):
        alpha = as_fraction(alpha)
        if alpha <= 0:
            raise ValueError("flow-box linear coefficient must be positive")
        radius_hint = as_fraction(radius_hint)
        if radius_hint <= 0:
            raise ValueError("radius hint must be positive")
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "tail", tuple(as_fraction(a) for a in tail))
        object.__setattr__(self, "radius_hint", radius_hint)

    @staticmethod
    def identity() -> "FlowBoxMap":
        return FlowBoxMap(1)

    def is_identity(self) -> bool:
        return self.alpha == 1 and not any(self.tail)

    def eval_z(self, z):
        """Evaluate the polynomial germ at an mpmath value, exact coefficients."""
        w = z * self.alpha.numerator / self.alpha.denominator
        zp = z * z
        for a in self.tail:
            if a:
                w += zp * a.numerator / a.denominator
            zp *= z
        return w

    def canonical(self) -> str:
        tail = ",".join(str(a) for a in self.tail)
        return f"fb(alpha={self.alpha}; tail={tail}; r={self.radius_hint})"


def flowbox_to_log(f: FlowBoxMap, order) -> tuple[AffineMap, GenExpSeries]:
    """Log-chart split of a connector: returns (affine, L) with
    f_log(zeta) = zeta - ln(alpha) - L(zeta) and L expanded to the given floor.

    L's coefficients are exact rationals; for f(z) = z + z^2 they are
    -(-1)^q / q at exponent -q.
    """
    order = as_fraction(order)
    if order >= 0:
        raise ValueError("expansion order must be a negative floor")
    if f.alpha <= 0:
        raise ValueError("flow-box linear coefficient must be positive")
    affine = AffineMap(1, ExactBeta.log(f.alpha, -1))
    inner = GenExpSeries(
        [(-(q + 1), a / f.alpha) for q, a in enumerate(f.tail) if a],
        order - 1,
        _radius_threshold(f.radius_hint),
    )
    ln_tail = log1p_series(inner, order) if not inner.is_zero() else GenExpSeries.zero(
        order, inner.threshold
    )
    return affine, ln_tail


def _radius_threshold(radius: Fraction) -> Fraction:
    """Smallest convenient rational a with e^{-a} comfortably inside the radius."""
    if radius >= 1:
        return Fraction(0)
    v = -mpmath.log(mpmath.mpf(radius.numerator) / radius.denominator)
    return Fraction(int(mpmath.ceil(v * 4)) + 2, 4)


# -- composition words ---------------------------------------------------------


@dataclass(frozen=True)
class HMapGen:
    """Near-identity generator id + deviation, with all deviation exponents < 0.

    When the generator came from a flow-box connector, the exact z-chart germ is
    kept so the numeric oracle can bypass the truncated series entirely.
    """

    deviation: GenExpSeries
    source: Optional[FlowBoxMap] = None

    def __post_init__(self):
        if not self.deviation.is_fc0:
            raise ValueError("HMap deviation must have all exponents negative")

    def canonical(self) -> str:
        if self.source is not None:
            tail = ",".join(str(a) for a in self.source.tail)
            return (
                f"hfb(alpha={self.source.alpha}; tail={tail}; "
                f"r={self.source.radius_hint}; order={self.deviation.floor})"
            )
        return f"h({self.deviation.canonical()})"


class ExpGen:
    def canonical(self) -> str:
        return "exp"

    def __eq__(self, other):
        return isinstance(other, ExpGen)

    def __hash__(self):
        return hash("exp")


class LnGen:
    def canonical(self) -> str:
        return "ln"

    def __eq__(self, other):
        return isinstance(other, LnGen)

    def __hash__(self):
        return hash("ln")


EXP = ExpGen()
LN = LnGen()

Generator = Union[AffineMap, HMapGen, ExpGen, LnGen]


class CompositionWord:
    """A Dulac map as a sequence of generators in application order
    (leftmost applied first)."""

    __slots__ = ("gens",)

    def __init__(self, gens: Iterable[Generator] = ()):
        self.gens = tuple(gens)
        self._check_balance()

    def _check_balance(self):
        depth = 0
        for g in self.gens:
            if isinstance(g, ExpGen):
                depth += 1
            elif isinstance(g, LnGen):
                depth -= 1
            if depth not in (0, 1):
                raise ValueError(
                    "word leaves the depth-1 alternant regime (unbalanced exp/ln)"
                )
        if depth != 0:
            raise ValueError("word has unmatched exp/ln generators")

    def __iter__(self):
        return iter(self.gens)

    def __len__(self):
        return len(self.gens)

    def __eq__(self, other):
        if not isinstance(other, CompositionWord):
            return NotImplemented
        return self.gens == other.gens

    def __hash__(self):
        return hash(self.gens)

    def fused(self) -> "CompositionWord":
        """Canonical form: adjacent affine generators composed, identities elided."""
        out: list[Generator] = []
        for g in self.gens:
            if isinstance(g, AffineMap):
                if out and isinstance(out[-1], AffineMap):
                    g = g.compose(out[-1])
                    out.pop()
                if g.is_identity():
                    continue
            out.append(g)
        return CompositionWord(out)

    def affine_skeleton(self) -> AffineMap:
        """The affine part left after replacing every near-identity factor by id.

        An exp..ln block with inner skeleton (alpha, beta) contributes the shift
        zeta -> zeta + ln(alpha): ln(alpha e^zeta + beta) = zeta + ln(alpha) + flat.
        """
        stack: list[AffineMap] = [AffineMap.identity()]
        for g in self.gens:
            if isinstance(g, ExpGen):
                stack.append(AffineMap.identity())
            elif isinstance(g, LnGen):
                inner = stack.pop()
                if inner.alpha != 1:
                    shift = AffineMap(1, ExactBeta.log(inner.alpha))
                else:
                    shift = AffineMap.identity()
                stack[-1] = shift.compose(stack[-1])
            elif isinstance(g, AffineMap):
                stack[-1] = g.compose(stack[-1])
        return stack[0]

    def pretty(self) -> str:
        """Right-to-left composition product, for reading against the narrative."""
        return " o ".join(g.canonical() for g in reversed(self.gens)) or "id"

    def canonical(self) -> str:
        return " ; ".join(g.canonical() for g in self.gens) if self.gens else "id"

    def __str__(self):
        return self.canonical()

    def __repr__(self):
        return f"CompositionWord[{self.canonical()}]"


# -- polycycle descriptions ------------------------------------------------------

EXP_TYPE = "exp"
LOG_TYPE = "log"


@dataclass(frozen=True)
class Equilibrium:
    k: int
    kind: str

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("saddle order k must be >= 1")
        if self.kind not in (EXP_TYPE, LOG_TYPE):
            raise ValueError(f"unknown transit kind {self.kind!r}")


@dataclass(frozen=True)
class PolycycleSpec:
    """Equilibria in cyclic order, with connectors[i] the flow box from the exit
    section of equilibrium i to the entry section of equilibrium i+1 (mod N);
    the return map is based at the exit section of equilibrium base_section."""

    equilibria: tuple
    connectors: tuple
    base_section: int = 0

    def __init__(self, equilibria, connectors, base_section=0):
        equilibria = tuple(equilibria)
        connectors = tuple(connectors)
        object.__setattr__(self, "equilibria", equilibria)
        object.__setattr__(self, "connectors", connectors)
        object.__setattr__(self, "base_section", int(base_section))
        self.validate()

    def validate(self):
        n = len(self.equilibria)
        if n == 0 or n % 2 != 0:
            raise NotSimpleAlternantError(
                f"not simple alternant: need an even, positive number of equilibria (got {n})"
            )
        if len(self.connectors) != n:
            raise NotSimpleAlternantError(
                f"need one connector per equilibrium ({n}), got {len(self.connectors)}"
            )
        for i, eq in enumerate(self.equilibria):
            nxt = self.equilibria[(i + 1) % n]
            if eq.kind == nxt.kind:
                raise NotSimpleAlternantError(
                    f"not simple alternant: equilibria {i} and {(i + 1) % n} "
                    f"are both {eq.kind}-type"
                )
        if not 0 <= self.base_section < n:
            raise ValueError(f"base section {self.base_section} out of range")
        first = self.equilibria[(self.base_section + 1) % n]
        if first.kind != EXP_TYPE:
            raise NotSimpleAlternantError(
                "first traversed transit after the base section must be of "
                "exponential type; rotate the base section"
            )

    def canonical(self) -> str:
        lines = [f"polycycle {len(self.equilibria)}"]
        for eq, conn in zip(self.equilibria, self.connectors):
            lines.append(f"saddle k={eq.k} kind={eq.kind}")
            tail = ",".join(str(a) for a in conn.tail)
            lines.append(f"connector alpha={conn.alpha} tail={tail}")
        lines.append(f"base={self.base_section}")
        return "\n".join(lines)

    def __str__(self):
        return self.canonical()


def transit_generators(k: int, kind: str) -> list[Generator]:
    """Log-chart generators of one saddle transit.

    Exponential type: multiply by k, then exp.  Logarithmic type: ln, then
    divide by k.  Unit affines are dropped.
    """
    if k < 1:
        raise ValueError("saddle order k must be >= 1")
    if kind == EXP_TYPE:
        gens: list[Generator] = []
        if k != 1:
            gens.append(AffineMap(k, 0))
        gens.append(EXP)
        return gens
    if kind == LOG_TYPE:
        gens = [LN]
        if k != 1:
            gens.append(AffineMap(Fraction(1, k), 0))
        return gens
    raise ValueError(f"unknown transit kind {kind!r}")


def connector_generators(conn: FlowBoxMap, order) -> list[Generator]:
    """Generators of one connector: the near-identity factor then the -ln(alpha)
    shift, so that their composition is f_log = zeta - ln(alpha) + phi."""
    if conn.is_identity():
        return []
    affine, ln_tail = flowbox_to_log(conn, order)
    gens: list[Generator] = []
    phi = -ln_tail
    if not phi.is_zero() or conn.tail:
        gens.append(HMapGen(phi, source=conn))
    if not affine.is_identity():
        gens.append(affine)
    return gens


def compile_polycycle(spec: PolycycleSpec, order) -> CompositionWord:
    """Assemble the return-map word of a simple alternant polycycle.

    Generators appear in traversal order starting at the base exit section:
    connector, transit, connector, transit, ...; the result is fused so equal
    adjacent affines merge and unit affines disappear.
    """
    spec.validate()
    n = len(spec.equilibria)
    b = spec.base_section
    gens: list[Generator] = []
    for step in range(n):
        i = (b + step) % n
        gens.extend(connector_generators(spec.connectors[i], order))
        nxt = spec.equilibria[(i + 1) % n]
        gens.extend(transit_generators(nxt.k, nxt.kind))
    return CompositionWord(gens).fused()


# -- polycycle spec file format ---------------------------------------------------


class PolycycleFormatError(ValueError):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


def parse_polycycle(text: str) -> PolycycleSpec:
    """Parse the line-oriented polycycle format.

    Header `polycycle N`, then per equilibrium a `saddle k=<int> kind=<exp|log>`
    line followed by its outgoing `connector alpha=<rat> tail=<rat,...>` line,
    and a final `base=<index>`.
    """
    lines = [
        (no + 1, ln.strip())
        for no, ln in enumerate(text.splitlines())
        if ln.strip() and not ln.strip().startswith("#")
    ]
    if not lines:
        raise PolycycleFormatError(1, "empty polycycle description")
    no, head = lines[0]
    parts = head.split()
    if len(parts) != 2 or parts[0] != "polycycle":
        raise PolycycleFormatError(no, f"expected 'polycycle N', got {head!r}")
    try:
        n = int(parts[1])
    except ValueError:
        raise PolycycleFormatError(no, f"bad equilibrium count {parts[1]!r}") from None
    body = lines[1:]
    if len(body) != 2 * n + 1:
        raise PolycycleFormatError(
            no, f"expected {2 * n} saddle/connector lines plus base=, got {len(body)}"
        )
    equilibria = []
    connectors = []
    for idx in range(n):
        sno, sline = body[2 * idx]
        fields = _parse_fields(sno, sline, "saddle", ("k", "kind"))
        try:
            k = int(fields["k"])
        except ValueError:
            raise PolycycleFormatError(sno, f"bad saddle order {fields['k']!r}") from None
        if fields["kind"] not in (EXP_TYPE, LOG_TYPE):
            raise PolycycleFormatError(sno, f"kind must be exp or log, got {fields['kind']!r}")
        equilibria.append(Equilibrium(k, fields["kind"]))
        cno, cline = body[2 * idx + 1]
        fields = _parse_fields(cno, cline, "connector", ("alpha", "tail"))
        try:
            alpha = Fraction(fields["alpha"])
            tail = [Fraction(t) for t in fields["tail"].split(",") if t]
        except (ValueError, ZeroDivisionError):
            raise PolycycleFormatError(cno, f"bad rational in {cline!r}") from None
        if alpha <= 0:
            raise PolycycleFormatError(cno, "connector alpha must be positive")
        connectors.append(FlowBoxMap(alpha, tail))
    bno, bline = body[-1]
    if not bline.startswith("base="):
        raise PolycycleFormatError(bno, f"expected 'base=<index>', got {bline!r}")
    try:
        base = int(bline[len("base="):])
    except ValueError:
        raise PolycycleFormatError(bno, f"bad base index in {bline!r}") from None
    try:
        return PolycycleSpec(equilibria, connectors, base)
    except (NotSimpleAlternantError, ValueError) as exc:
        raise PolycycleFormatError(bno, str(exc)) from None


def _parse_fields(line_no: int, line: str, keyword: str, keys: tuple) -> dict:
    parts = line.split()
    if not parts or parts[0] != keyword:
        raise PolycycleFormatError(line_no, f"expected a {keyword!r} line, got {line!r}")
    fields = {}
    for part in parts[1:]:
        if "=" not in part:
            raise PolycycleFormatError(line_no, f"malformed field {part!r}")
        key, val = part.split("=", 1)
        fields[key] = val
    for key in keys:
        if key not in fields:
            raise PolycycleFormatError(line_no, f"missing field {key}= on {keyword} line")
    return fields
