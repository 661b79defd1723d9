"""Sparse multivariate polynomials and the MVSK objective builder.

A monomial is keyed by a canonical sparse exponent tuple
``((var, power), ...)`` sorted by variable, with no zero powers.  The
constant monomial is the empty tuple.

For fast evaluation each polynomial is lazily compiled into an index form:
every term becomes a row of ``degree`` variable indices padded with the
sentinel ``nvars`` (which evaluates to 1).  Values, gradients and Hessians
are then plain gathers and products over that table.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

Exponent = Tuple[Tuple[int, int], ...]

PRUNE_TOL = 1e-14


def _canonical(powers: Mapping[int, int]) -> Exponent:
    return tuple(sorted((int(v), int(p)) for v, p in powers.items() if p != 0))


def _mul_keys(a: Exponent, b: Exponent) -> Exponent:
    if not a:
        return b
    if not b:
        return a
    merged = dict(a)
    for v, p in b:
        merged[v] = merged.get(v, 0) + p
    return tuple(sorted(merged.items()))


def _degree(key: Exponent) -> int:
    return sum(p for _, p in key)


def _prune(terms: Dict[Exponent, float]) -> Dict[Exponent, float]:
    return {k: float(c) for k, c in terms.items() if abs(c) > PRUNE_TOL}


class SparsePolynomial:
    """Immutable polynomial in ``nvars`` real variables."""

    __slots__ = ("nvars", "_terms", "__dict__")

    def __init__(self, nvars: int, terms: Mapping[Exponent, float] | None = None,
                 *, prune: bool = True):
        if nvars < 0:
            raise ValueError("nvars must be nonnegative")
        self.nvars = int(nvars)
        raw = dict(terms or {})
        for key in raw:
            for v, p in key:
                if not 0 <= v < self.nvars or p <= 0:
                    raise ValueError(f"invalid exponent key {key} for nvars={nvars}")
        self._terms = _prune(raw) if prune else raw

    # -- constructors -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int) -> "SparsePolynomial":
        return cls(nvars)

    @classmethod
    def constant(cls, nvars: int, value: float) -> "SparsePolynomial":
        return cls(nvars, {(): float(value)})

    @classmethod
    def variable(cls, nvars: int, i: int) -> "SparsePolynomial":
        return cls(nvars, {((i, 1),): 1.0})

    @classmethod
    def monomial(cls, nvars: int, powers: Mapping[int, int],
                 coeff: float = 1.0) -> "SparsePolynomial":
        return cls(nvars, {_canonical(powers): float(coeff)})

    # -- basic protocol -----------------------------------------------
    @property
    def terms(self) -> Dict[Exponent, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    def __bool__(self) -> bool:
        return bool(self._terms)

    def coeff(self, powers: Mapping[int, int] | Exponent) -> float:
        key = powers if isinstance(powers, tuple) else _canonical(powers)
        return self._terms.get(key, 0.0)

    @property
    def degree(self) -> int:
        return max((_degree(k) for k in self._terms), default=0)

    def __repr__(self) -> str:
        return f"SparsePolynomial(nvars={self.nvars}, terms={len(self)}, degree={self.degree})"

    def __eq__(self, other) -> bool:
        if not isinstance(other, SparsePolynomial):
            return NotImplemented
        return self.nvars == other.nvars and self._terms == other._terms

    __hash__ = None  # type: ignore[assignment]

    def almost_equal(self, other: "SparsePolynomial", tol: float = 1e-12) -> bool:
        """Coefficient-wise comparison with absolute tolerance."""
        if self.nvars != other.nvars:
            return False
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coeff(k) - other.coeff(k)) <= tol for k in keys)

    # -- arithmetic ----------------------------------------------------
    def _check(self, other: "SparsePolynomial") -> None:
        if self.nvars != other.nvars:
            raise ValueError(f"dimension mismatch: {self.nvars} vs {other.nvars}")

    def _coerce(self, other) -> "SparsePolynomial":
        if isinstance(other, SparsePolynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return SparsePolynomial.constant(self.nvars, float(other))
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out = dict(self._terms)
        for k, c in other._terms.items():
            out[k] = out.get(k, 0.0) + c
        return SparsePolynomial(self.nvars, out)

    __radd__ = __add__

    def __neg__(self):
        return self.scale(-1.0)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + other.scale(-1.0)

    def __rsub__(self, other):
        return (-self) + other

    def scale(self, a: float) -> "SparsePolynomial":
        a = float(a)
        return SparsePolynomial(self.nvars, {k: a * c for k, c in self._terms.items()})

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return self.scale(other)
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        out: Dict[Exponent, float] = {}
        for ka, ca in self._terms.items():
            for kb, cb in other._terms.items():
                k = _mul_keys(ka, kb)
                out[k] = out.get(k, 0.0) + ca * cb
        return SparsePolynomial(self.nvars, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "SparsePolynomial":
        if k < 0 or int(k) != k:
            raise ValueError("only nonnegative integer powers are supported")
        result = SparsePolynomial.constant(self.nvars, 1.0)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # -- substitution ----------------------------------------------------
    def embed(self, nvars: int, mapping: Sequence[int]) -> "SparsePolynomial":
        """Rename local variable ``v`` to ``mapping[v]`` in a space of ``nvars``."""
        out: Dict[Exponent, float] = {}
        for k, c in self._terms.items():
            nk = _merge_mapped(k, mapping)
            out[nk] = out.get(nk, 0.0) + c
        return SparsePolynomial(nvars, out)

    # -- calculus --------------------------------------------------------
    def derivative(self, i: int) -> "SparsePolynomial":
        out: Dict[Exponent, float] = {}
        for k, c in self._terms.items():
            d = dict(k)
            p = d.get(i, 0)
            if p == 0:
                continue
            if p == 1:
                del d[i]
            else:
                d[i] = p - 1
            nk = tuple(sorted(d.items()))
            out[nk] = out.get(nk, 0.0) + c * p
        return SparsePolynomial(self.nvars, out)

    def grad_exact(self) -> list:
        return [self.derivative(i) for i in range(self.nvars)]

    # -- compiled evaluation ----------------------------------------------
    @cached_property
    def _compiled(self):
        deg = max(self.degree, 1)
        m = len(self._terms)
        idx = np.full((m, deg), self.nvars, dtype=np.intp)
        coeffs = np.empty(m)
        for row, (k, c) in enumerate(self._terms.items()):
            col = 0
            for v, p in k:
                idx[row, col:col + p] = v
                col += p
            coeffs[row] = c
        return idx, coeffs

    def _extended(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nvars,):
            raise ValueError(f"dimension mismatch: expected ({self.nvars},), got {x.shape}")
        xe = np.empty(self.nvars + 1)
        xe[:-1] = x
        xe[-1] = 1.0
        return xe

    def __call__(self, x) -> float:
        idx, coeffs = self._compiled
        xe = self._extended(x)
        if not len(coeffs):
            return 0.0
        return float(coeffs @ np.prod(xe[idx], axis=1))

    def gradient(self, x) -> np.ndarray:
        """Exact gradient at ``x`` via the product rule on the index table."""
        return self.value_and_gradient(x)[1]

    def value_and_gradient(self, x) -> Tuple[float, np.ndarray]:
        idx, coeffs = self._compiled
        xe = self._extended(x)
        n = self.nvars
        if not len(coeffs):
            return 0.0, np.zeros(n)
        vals = xe[idx]
        m, deg = vals.shape
        # prefix[:, p] = prod of columns < p, suffix[:, p] = prod of columns > p
        prefix = np.ones((m, deg + 1))
        np.cumprod(vals, axis=1, out=prefix[:, 1:])
        suffix = np.ones((m, deg + 1))
        np.cumprod(vals[:, ::-1], axis=1, out=suffix[:, 1:])
        suffix = suffix[:, ::-1]
        others = prefix[:, :deg] * suffix[:, 1:]
        g = np.bincount(idx.ravel(), weights=(others * coeffs[:, None]).ravel(), minlength=n + 1)
        return float(coeffs @ prefix[:, deg]), g[:n]

    def hessian(self, x) -> np.ndarray:
        """Exact Hessian at ``x``."""
        idx, coeffs = self._compiled
        xe = self._extended(x)
        n = self.nvars
        h = np.zeros((n + 1) * (n + 1))
        deg = idx.shape[1]
        if len(coeffs) and deg >= 2:
            vals = xe[idx]
            for p in range(deg):
                for q in range(deg):
                    if p == q:
                        continue
                    rest = np.delete(vals, [p, q], axis=1)
                    others = np.prod(rest, axis=1) if rest.shape[1] else np.ones(len(coeffs))
                    flat = idx[:, p] * (n + 1) + idx[:, q]
                    h += np.bincount(flat, weights=coeffs * others, minlength=(n + 1) ** 2)
        return h.reshape(n + 1, n + 1)[:n, :n]

    # -- output -----------------------------------------------------------
    def sorted_terms(self) -> list:
        """Terms in graded lexicographic order (degree, then x_1 > x_2 > ...)."""
        def key(item):
            k, _ = item
            dense = [0] * self.nvars
            for v, p in k:
                dense[v] = p
            return (_degree(k), [-p for p in dense])
        return sorted(self._terms.items(), key=key)

    def dense_exponent(self, key: Exponent) -> list:
        dense = [0] * self.nvars
        for v, p in key:
            dense[v] = p
        return dense

    def dump(self) -> str:
        lines = []
        for k, c in self.sorted_terms():
            lines.append(f"{c!r} {' '.join(map(str, self.dense_exponent(k)))}")
        return "\n".join(lines) + ("\n" if lines else "")


def _merge_mapped(key: Exponent, mapping: Sequence[int]) -> Exponent:
    merged: Dict[int, int] = {}
    for v, p in key:
        t = mapping[v]
        merged[t] = merged.get(t, 0) + p
    return tuple(sorted(merged.items()))


def parse_dump(text: str, nvars: int) -> SparsePolynomial:
    """Inverse of :meth:`SparsePolynomial.dump`."""
    terms: Dict[Exponent, float] = {}
    for line in text.splitlines():
        if not line.strip():
            continue
        parts = line.split()
        coeff = float(parts[0])
        exps = [int(p) for p in parts[1:]]
        if len(exps) != nvars:
            raise ValueError(f"expected {nvars} exponents, got {len(exps)}")
        terms[_canonical(dict(enumerate(exps)))] = coeff
    return SparsePolynomial(nvars, terms)


# -- functional API ------------------------------------------------------

def eval_poly(p: SparsePolynomial, x) -> float:
    return p(x)


def grad_exact(p: SparsePolynomial) -> list:
    return p.grad_exact()


def grad_numeric(p: SparsePolynomial, x, delta: float = 0.01) -> np.ndarray:
    """Central-difference gradient with step ``delta``."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    x = np.asarray(x, dtype=float)
    g = np.empty(p.nvars)
    for i in range(p.nvars):
        e = np.zeros(p.nvars)
        e[i] = delta
        g[i] = (p(x + e) - p(x - e)) / (2.0 * delta)
    return g


def add(p: SparsePolynomial, q: SparsePolynomial) -> SparsePolynomial:
    p._check(q)
    return p + q


def scale(p: SparsePolynomial, a: float) -> SparsePolynomial:
    return p.scale(a)


def mul(p: SparsePolynomial, q: SparsePolynomial) -> SparsePolynomial:
    p._check(q)
    return p * q


def sum_polys(nvars: int, pieces: Iterable[Tuple[float, SparsePolynomial]]) -> SparsePolynomial:
    """Linear combination ``sum(a * p)`` accumulated in a single pass."""
    acc: Dict[Exponent, float] = {}
    for a, p in pieces:
        if p.nvars != nvars:
            raise ValueError("dimension mismatch")
        for k, c in p.items():
            acc[k] = acc.get(k, 0.0) + a * c
    return SparsePolynomial(nvars, acc)


# -- objective -------------------------------------------------------------

@dataclass(frozen=True)
class Preference:
    """Investor weights on (-m1, m2, -m3, m4)."""

    c: Tuple[float, float, float, float]

    def __post_init__(self):
        c = tuple(float(v) for v in self.c)
        if len(c) != 4:
            raise ValueError("preference must have four components")
        if any(not math.isfinite(v) for v in c):
            raise ValueError("preference must be finite")
        if any(v < 0 for v in c):
            raise ValueError(f"preference weights must be nonnegative, got {c}")
        object.__setattr__(self, "c", c)

    @classmethod
    def of(cls, c) -> "Preference":
        return c if isinstance(c, Preference) else cls(tuple(c))

    def __iter__(self):
        return iter(self.c)

    def __getitem__(self, i):
        return self.c[i]


RISK_SEEKING = Preference((10.0, 1.0, 10.0, 1.0))
RISK_AVERSE = Preference((1.0, 10.0, 1.0, 10.0))
RISK_NEUTRAL = Preference((10.0, 10.0, 10.0, 10.0))
PROFILES = {"seeking": RISK_SEEKING, "averse": RISK_AVERSE, "neutral": RISK_NEUTRAL}


def moment_polynomial(tensors, order: int) -> SparsePolynomial:
    """Portfolio moment m_order as a polynomial (multiplicity-weighted sorted entries)."""
    from .moments import multiplicity

    n = tensors.n
    acc: Dict[Exponent, float] = {}
    if order == 1:
        for i, v in enumerate(tensors.mu):
            acc[((i, 1),)] = float(v)
    else:
        for key, v in tensors.entries(order):
            k = _canonical(_counts(key))
            acc[k] = acc.get(k, 0.0) + multiplicity(key) * v
    return SparsePolynomial(n, acc)


def _counts(key: Sequence[int]) -> Dict[int, int]:
    d: Dict[int, int] = {}
    for i in key:
        d[i] = d.get(i, 0) + 1
    return d


def build_objective(tensors, c) -> SparsePolynomial:
    """f = -c1 m1 + c2 m2 - c3 m3 + c4 m4 as one sparse polynomial."""
    c = Preference.of(c)
    signs = (-1.0, 1.0, -1.0, 1.0)
    pieces = [(s * w, moment_polynomial(tensors, k + 1))
              for k, (s, w) in enumerate(zip(signs, c)) if w != 0.0]
    return sum_polys(tensors.n, pieces)
