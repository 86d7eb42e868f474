"""Sparse multivariate polynomials over indexed variable families.

A variable is a pair ``(family, index)`` such as ``("x", 3)`` or
``("rho", 0)``; a monomial is a product of such variables with positive
integer powers; a polynomial stores ``monomial -> coefficient`` with no
zero coefficients and canonically sorted monomial keys.  On top of the
ring operations the module provides Lie derivatives along polynomial
vector fields, a plain-text dump/parse format and compilation to fast
vectorized evaluators.

All values are immutable in practice: operations build new polynomials.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

Var = tuple[str, int]
Monomial = tuple[tuple[Var, int], ...]

COEFF_EPS = 0.0  # exact: only coefficients that are exactly 0.0 are dropped


class PolynomialError(ValueError):
    pass


def _canon(monomial: Iterable[tuple[Var, int]]) -> Monomial:
    acc: dict[Var, int] = {}
    for var, power in monomial:
        if power < 0:
            raise PolynomialError(f"negative power {power} on {var}")
        if power:
            acc[var] = acc.get(var, 0) + power
    return tuple(sorted(acc.items()))


def _mono_degree(monomial: Monomial) -> int:
    return sum(p for _, p in monomial)


def _mono_sort_key(monomial: Monomial):
    # graded lexicographic: total degree first, then the variable tuple
    return (_mono_degree(monomial), monomial)


class IndexedPolynomial:
    """Polynomial with real coefficients over indexed variables."""

    __slots__ = ("_terms",)

    def __init__(self, terms: Mapping[Monomial, float] | None = None):
        acc: dict[Monomial, float] = {}
        if terms:
            for mono, coef in terms.items():
                mono = _canon(mono)
                coef = float(coef)
                acc[mono] = acc.get(mono, 0.0) + coef
        self._terms = {m: c for m, c in sorted(acc.items(), key=lambda kv: _mono_sort_key(kv[0])) if c != COEFF_EPS}

    # -- constructors ------------------------------------------------------

    @classmethod
    def constant(cls, value: float) -> "IndexedPolynomial":
        return cls({(): float(value)})

    @classmethod
    def variable(cls, family: str, index: int) -> "IndexedPolynomial":
        return cls({(((family, int(index)), 1),): 1.0})

    # -- queries -----------------------------------------------------------

    @property
    def terms(self) -> Mapping[Monomial, float]:
        return dict(self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def variables(self) -> set[Var]:
        return {v for mono in self._terms for v, _ in mono}

    def indices(self) -> set[int]:
        return {i for _, i in self.variables()}

    def max_index(self) -> int | None:
        idx = self.indices()
        return max(idx) if idx else None

    def min_index(self) -> int | None:
        idx = self.indices()
        return min(idx) if idx else None

    def degree(self) -> int:
        return max((_mono_degree(m) for m in self._terms), default=0)

    def coefficient(self, monomial: Iterable[tuple[Var, int]]) -> float:
        return self._terms.get(_canon(monomial), 0.0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, IndexedPolynomial):
            return NotImplemented
        return self._terms == other._terms

    def __hash__(self):
        return hash(tuple(self._terms.items()))

    def __repr__(self) -> str:
        return f"IndexedPolynomial({format_polynomial(self)!r})"

    # -- ring operations -----------------------------------------------------

    def __add__(self, other) -> "IndexedPolynomial":
        other = _as_poly(other)
        acc = dict(self._terms)
        for mono, coef in other._terms.items():
            acc[mono] = acc.get(mono, 0.0) + coef
        return IndexedPolynomial(acc)

    __radd__ = __add__

    def __neg__(self) -> "IndexedPolynomial":
        return IndexedPolynomial({m: -c for m, c in self._terms.items()})

    def __sub__(self, other) -> "IndexedPolynomial":
        return self + (-_as_poly(other))

    def __rsub__(self, other) -> "IndexedPolynomial":
        return _as_poly(other) - self

    def __mul__(self, other) -> "IndexedPolynomial":
        if isinstance(other, (int, float)):
            return IndexedPolynomial({m: c * other for m, c in self._terms.items()})
        other = _as_poly(other)
        acc: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                mono = _canon(m1 + m2)
                acc[mono] = acc.get(mono, 0.0) + c1 * c2
        return IndexedPolynomial(acc)

    __rmul__ = __mul__

    def __pow__(self, power: int) -> "IndexedPolynomial":
        if not isinstance(power, int) or power < 0:
            raise PolynomialError("powers must be non-negative integers")
        result = IndexedPolynomial.constant(1.0)
        for _ in range(power):
            result = result * self
        return result

    # -- calculus ------------------------------------------------------------

    def partial(self, var: Var) -> "IndexedPolynomial":
        acc: dict[Monomial, float] = {}
        for mono, coef in self._terms.items():
            for i, (v, p) in enumerate(mono):
                if v == var:
                    rest = mono[:i] + ((v, p - 1),) + mono[i + 1 :]
                    rest = _canon(rest)
                    acc[rest] = acc.get(rest, 0.0) + coef * p
                    break
        return IndexedPolynomial(acc)


def _as_poly(value) -> IndexedPolynomial:
    if isinstance(value, IndexedPolynomial):
        return value
    if isinstance(value, (int, float)):
        return IndexedPolynomial.constant(value)
    raise PolynomialError(f"cannot coerce {value!r} to a polynomial")


def combine(op: str, p: IndexedPolynomial, q) -> IndexedPolynomial:
    """Dispatch ``add``/``mul``/``scale`` with exact coefficient arithmetic."""
    if op == "add":
        return p + q
    if op == "mul":
        return p * q
    if op == "scale":
        if not isinstance(q, (int, float)):
            raise PolynomialError("scale expects a scalar")
        return p * q
    raise PolynomialError(f"unknown combine op {op!r}")


def evaluate(p: IndexedPolynomial, assignment: Mapping[Var, float]):
    """Evaluate by direct summation of monomials.

    Values may be scalars or numpy arrays of a common broadcastable
    shape.  Raises :class:`PolynomialError` on unbound variables.
    """
    missing = p.variables() - set(assignment)
    if missing:
        raise PolynomialError(f"unbound variable(s): {sorted(missing)}")
    total = 0.0
    for mono, coef in p._terms.items():
        term = coef
        for var, power in mono:
            term = term * assignment[var] ** power
        total = total + term
    return total


@dataclass(frozen=True)
class PolyVectorField:
    """Time derivatives of indexed variables, with an explicit truncation.

    ``rows[(family, i)]`` gives the drift polynomial of that variable;
    every row may only reference indices below ``truncation``.
    """

    rows: Mapping[Var, IndexedPolynomial]
    truncation: int

    def __post_init__(self):
        for var, rhs in self.rows.items():
            top = rhs.max_index()
            if top is not None and top >= self.truncation:
                raise PolynomialError(
                    f"field row {var} references index {top} >= truncation {self.truncation}"
                )

    def row(self, var: Var) -> IndexedPolynomial:
        family, index = var
        if index >= self.truncation:
            raise PolynomialError(
                f"truncation overflow: variable {var} lies outside truncation {self.truncation}"
            )
        try:
            return self.rows[var]
        except KeyError:
            raise PolynomialError(f"field has no row for variable {var}") from None


def lie_derivative(p: IndexedPolynomial, f: PolyVectorField) -> IndexedPolynomial:
    """Directional derivative of ``p`` along ``f``: sum of (dp/dv) * f(v)."""
    result = IndexedPolynomial()
    for var in sorted(p.variables()):
        dp = p.partial(var)
        if dp.is_zero():
            continue
        result = result + dp * f.row(var)
    return result


# -- text dump format ---------------------------------------------------------
#
# One term per line: "coef * x[3]*rho[2]^2"; a bare "coef" line is the
# constant term; the zero polynomial prints as "0".  Coefficients use
# repr() so that parsing is lossless.


def _format_var(var: Var, power: int) -> str:
    family, index = var
    head = f"{family}[{index}]"
    return head if power == 1 else f"{head}^{power}"


def format_polynomial(p: IndexedPolynomial) -> str:
    if p.is_zero():
        return "0"
    lines = []
    for mono, coef in p._terms.items():
        if mono:
            body = "*".join(_format_var(v, pw) for v, pw in mono)
            lines.append(f"{coef!r} * {body}")
        else:
            lines.append(f"{coef!r}")
    return "\n".join(lines)


def parse_polynomial(text: str) -> IndexedPolynomial:
    total = IndexedPolynomial()
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line == "0":
            continue
        coef_part, _, body = line.partition("*")
        coef = float(coef_part.strip())
        terms: list[tuple[Var, int]] = []
        if body.strip():
            for factor in body.split("*"):
                factor = factor.strip()
                name, _, rest = factor.partition("[")
                idx_part, _, pow_part = rest.partition("]")
                power = 1
                if pow_part.startswith("^"):
                    power = int(pow_part[1:])
                terms.append(((name, int(idx_part)), power))
        total = total + IndexedPolynomial({tuple(terms): coef})
    return total


# -- compiled evaluation -------------------------------------------------------


@dataclass
class CompiledPolynomial:
    """Gather-and-multiply form for fast vectorized evaluation.

    Each monomial is flattened into ``slots`` variable references with
    powers expanded into repetition; unused slots point at a virtual
    constant-one entry appended past the real variables, so evaluation
    is one fancy-index gather, a product over slots, and a weighted sum
    (no elementwise pow).  ``evaluate(values)`` takes an array whose last
    axis enumerates ``var_order`` and keeps the remaining axes.
    """

    var_order: tuple[Var, ...]
    coeffs: np.ndarray          # (terms,)
    slot_idx: np.ndarray        # (terms, slots) indices into var_order + [one]

    def evaluate(self, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != len(self.var_order):
            raise PolynomialError(
                f"expected {len(self.var_order)} variable values, got {values.shape[-1]}"
            )
        if self.coeffs.size == 0:
            return np.zeros(values.shape[:-1])
        ones = np.ones(values.shape[:-1] + (1,))
        ext = np.concatenate([values, ones], axis=-1)
        factors = ext[..., self.slot_idx].prod(axis=-1)
        return factors @ self.coeffs


def compile_polynomial(p: IndexedPolynomial, var_order: Iterable[Var]) -> CompiledPolynomial:
    order = tuple(var_order)
    lookup = {v: i for i, v in enumerate(order)}
    missing = p.variables() - set(lookup)
    if missing:
        raise PolynomialError(f"unbound variable(s) in compile: {sorted(missing)}")
    monos = list(p._terms.items())
    slots = max((_mono_degree(m) for m, _ in monos), default=1)
    slots = max(slots, 1)
    coeffs = np.array([c for _, c in monos], dtype=float)
    one_slot = len(order)
    slot_idx = np.full((len(monos), slots), one_slot, dtype=np.intp)
    for t, (mono, _) in enumerate(monos):
        s = 0
        for var, power in mono:
            for _ in range(power):
                slot_idx[t, s] = lookup[var]
                s += 1
    return CompiledPolynomial(order, coeffs, slot_idx)
