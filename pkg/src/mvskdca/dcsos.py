"""DC decompositions of the MVSK objective.

Two rival splittings f = g - h with convex g, h:

* the DC-SOS pair (G, H), assembled monomial by monomial from convex
  sums-of-squares pieces routed by the sign of each co-moment entry;
* the universal pair  G = (eta/2)|x|^2,  H = (eta/2)|x|^2 - f.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property, lru_cache
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .moments import portfolio_moment_hessians
from .poly import Exponent, Preference, SparsePolynomial, build_objective, moment_polynomial, sum_polys


class Domain(enum.Enum):
    ALL_SPACE = "all_space"
    NONNEG_ORTHANT = "nonneg_orthant"

    def __and__(self, other: "Domain") -> "Domain":
        if Domain.NONNEG_ORTHANT in (self, other):
            return Domain.NONNEG_ORTHANT
        return Domain.ALL_SPACE


class ConvexComponent:
    """A polynomial known to be convex on ``domain``."""

    def __init__(self, value: SparsePolynomial, domain: Domain = Domain.ALL_SPACE):
        self.value = value
        self.domain = domain

    @property
    def nvars(self) -> int:
        return self.value.nvars

    @cached_property
    def grad(self) -> List[SparsePolynomial]:
        return self.value.grad_exact()

    def __call__(self, x) -> float:
        return self.value(x)

    def gradient(self, x) -> np.ndarray:
        return self.value.gradient(x)

    def value_and_gradient(self, x):
        return self.value(x), self.value.gradient(x)

    def hessian(self, x) -> np.ndarray:
        return self.value.hessian(x)

    def __repr__(self) -> str:
        return f"ConvexComponent({self.value!r}, {self.domain.name})"


@dataclass(frozen=True)
class DcPair:
    """target = g - h with convex components."""

    g: ConvexComponent
    h: ConvexComponent
    target: SparsePolynomial

    @property
    def nvars(self) -> int:
        return self.target.nvars

    @property
    def domain(self) -> Domain:
        return self.g.domain & self.h.domain

    @classmethod
    def trivial(cls, t: SparsePolynomial, domain: Domain = Domain.ALL_SPACE) -> "DcPair":
        return cls(ConvexComponent(t, domain),
                   ConvexComponent(SparsePolynomial.zero(t.nvars), Domain.ALL_SPACE), t)

    def identity_residual(self, x) -> float:
        return self.g(x) - self.h(x) - self.target(x)


# ---------------------------------------------------------------------------
# elementary cases

def decompose_bilinear(nvars: int, i: int, j: int, variant: int = 5) -> DcPair:
    """x_i x_j as a difference of convex SOS quadratics.

    ``variant=5`` uses (x_i+x_j)^2/4 - (x_i-x_j)^2/4, ``variant=6`` uses
    (x_i+x_j)^2/2 - (x_i^2+x_j^2)/2.
    """
    if i == j:
        raise ValueError("i == j: use decompose_even_power for x_i^2")
    xi, xj = SparsePolynomial.variable(nvars, i), SparsePolynomial.variable(nvars, j)
    if variant == 5:
        g, h = ((xi + xj) ** 2).scale(0.25), ((xi - xj) ** 2).scale(0.25)
    elif variant == 6:
        g, h = ((xi + xj) ** 2).scale(0.5), (xi ** 2 + xj ** 2).scale(0.5)
    else:
        raise ValueError(f"unknown bilinear variant {variant}")
    return DcPair(ConvexComponent(g), ConvexComponent(h), xi * xj)


def decompose_even_power(nvars: int, i: int, k: int = 1) -> DcPair:
    """x_i^(2k) = x_i^(2k) - 0."""
    return DcPair.trivial(SparsePolynomial.monomial(nvars, {i: 2 * k}))


def decompose_product(p: DcPair, q: DcPair) -> DcPair:
    """DC-SOS pair of target(p) * target(q) from pairs of both factors."""
    if p.nvars != q.nvars:
        raise ValueError(f"dimension mismatch: {p.nvars} vs {q.nvars}")
    p1, p2, q1, q2 = p.g.value, p.h.value, q.g.value, q.h.value
    g = ((p1 + q1) ** 2 + (p2 + q2) ** 2).scale(0.5)
    h = ((p1 + q2) ** 2 + (p2 + q1) ** 2).scale(0.5)
    dom = p.domain & q.domain
    return DcPair(ConvexComponent(g, dom), ConvexComponent(h, dom), p.target * q.target)


# ---------------------------------------------------------------------------
# monomial pieces of m3 and m4, in local variables 0..arity-1

@dataclass(frozen=True)
class Piece:
    """One elementary split: value polynomial plus its printed gradient."""

    name: str
    arity: int
    monomial: Dict[int, int]
    g: SparsePolynomial
    h: SparsePolynomial
    grad_g: Tuple[SparsePolynomial, ...]
    grad_h: Tuple[SparsePolynomial, ...]


def _vars(k: int):
    return [SparsePolynomial.variable(k, v) for v in range(k)]


@lru_cache(maxsize=None)
def pieces() -> Dict[str, Piece]:
    out: Dict[str, Piece] = {}
    zero = lambda k: SparsePolynomial.zero(k)  # noqa: E731

    # x_i^3, convex on the nonnegative orthant only
    (a,) = _vars(1)
    out["cube"] = Piece("cube", 1, {0: 3}, a ** 3, zero(1), (3 * a ** 2,), (zero(1),))

    # x_i^2 x_k
    a, b = _vars(2)
    g = (((a ** 2 + (b + 1) ** 2) ** 2) + (b - 1) ** 4).scale(1 / 8)
    h = ((b + 1) ** 4 + (a ** 2 + (b - 1) ** 2) ** 2).scale(1 / 8)
    out["sq_lin"] = Piece(
        "sq_lin", 2, {0: 2, 1: 1}, g, h,
        (0.5 * a * (b ** 2 + 2 * b + a ** 2 + 1), 0.5 * (2 * b ** 3 + a ** 2 * b + 6 * b + a ** 2)),
        (0.5 * a * (b ** 2 - 2 * b + a ** 2 + 1), 0.5 * (2 * b ** 3 + a ** 2 * b + 6 * b - a ** 2)),
    )

    # x_i x_j x_k
    a, b, c = _vars(3)
    g = (((a + b) ** 2 + (c + 1) ** 2) ** 2 + ((a - b) ** 2 + (c - 1) ** 2) ** 2).scale(1 / 32)
    h = (((a + b) ** 2 + (c - 1) ** 2) ** 2 + ((a - b) ** 2 + (c + 1) ** 2) ** 2).scale(1 / 32)
    out["lin3"] = Piece(
        "lin3", 3, {0: 1, 1: 1, 2: 1}, g, h,
        (0.25 * (a * c ** 2 + 2 * b * c + 3 * a * b ** 2 + a ** 3 + a),
         0.25 * (b * c ** 2 + 2 * a * c + b ** 3 + 3 * a ** 2 * b + b),
         0.25 * (c ** 3 + b ** 2 * c + a ** 2 * c + 3 * c + 2 * a * b)),
        (0.25 * (a * c ** 2 - 2 * b * c + 3 * a * b ** 2 + a ** 3 + a),
         0.25 * (b * c ** 2 - 2 * a * c + b ** 3 + 3 * a ** 2 * b + b),
         0.25 * (c ** 3 + b ** 2 * c + a ** 2 * c + 3 * c - 2 * a * b)),
    )

    # x_i^4
    (a,) = _vars(1)
    out["quart"] = Piece("quart", 1, {0: 4}, a ** 4, zero(1), (4 * a ** 3,), (zero(1),))

    # x_i^2 x_k^2
    a, b = _vars(2)
    out["sq_sq"] = Piece(
        "sq_sq", 2, {0: 2, 1: 2},
        ((a ** 2 + b ** 2) ** 2).scale(0.5), (a ** 4 + b ** 4).scale(0.5),
        (2 * (b ** 2 + a ** 2) * a, 2 * (b ** 2 + a ** 2) * b),
        (2 * a ** 3, 2 * b ** 3),
    )

    # x_i^3 x_k
    a, b = _vars(2)
    g = ((a ** 2 + (a + b) ** 2) ** 2 + (a - b) ** 4).scale(1 / 8)
    h = ((a + b) ** 4 + (a ** 2 + (a - b) ** 2) ** 2).scale(1 / 8)
    out["cube_lin"] = Piece(
        "cube_lin", 2, {0: 3, 1: 1}, g, h,
        (0.5 * a * (7 * b ** 2 + 3 * a * b + 5 * a ** 2), 0.5 * (2 * b ** 3 + 7 * a ** 2 * b + a ** 3)),
        (0.5 * a * (7 * b ** 2 - 3 * a * b + 5 * a ** 2), 0.5 * (2 * b ** 3 + 7 * a ** 2 * b - a ** 3)),
    )

    # x_i^2 x_j x_k
    a, b, c = _vars(3)
    g = ((a ** 2 + (b + c) ** 2) ** 2 + (b - c) ** 4).scale(1 / 8)
    h = ((b + c) ** 4 + (a ** 2 + (b - c) ** 2) ** 2).scale(1 / 8)
    out["sq_lin_lin"] = Piece(
        "sq_lin_lin", 3, {0: 2, 1: 1, 2: 1}, g, h,
        (0.5 * a * (c ** 2 + 2 * b * c + b ** 2 + a ** 2),
         0.5 * (6 * b * c ** 2 + a ** 2 * c + 2 * b ** 3 + a ** 2 * b),
         0.5 * (2 * c ** 3 + 6 * b ** 2 * c + a ** 2 * c + a ** 2 * b)),
        (0.5 * a * (c ** 2 - 2 * b * c + b ** 2 + a ** 2),
         0.5 * (6 * b * c ** 2 - a ** 2 * c + 2 * b ** 3 + a ** 2 * b),
         0.5 * (2 * c ** 3 + 6 * b ** 2 * c + a ** 2 * c - a ** 2 * b)),
    )

    # x_i x_j x_k x_l
    a, b, c, d = _vars(4)
    g = (((a + b) ** 2 + (c + d) ** 2) ** 2 + ((a - b) ** 2 + (c - d) ** 2) ** 2).scale(1 / 32)
    h = (((a + b) ** 2 + (c - d) ** 2) ** 2 + ((a - b) ** 2 + (c + d) ** 2) ** 2).scale(1 / 32)
    out["lin4"] = Piece(
        "lin4", 4, {0: 1, 1: 1, 2: 1, 3: 1}, g, h,
        (0.25 * (a * d ** 2 + 2 * b * c * d + a * c ** 2 + 3 * a * b ** 2 + a ** 3),
         0.25 * (b * d ** 2 + 2 * a * c * d + b * c ** 2 + b ** 3 + 3 * a ** 2 * b),
         0.25 * (3 * c * d ** 2 + 2 * a * b * d + c ** 3 + b ** 2 * c + a ** 2 * c),
         0.25 * (d ** 3 + 3 * c ** 2 * d + b ** 2 * d + a ** 2 * d + 2 * a * b * c)),
        (0.25 * (a * d ** 2 - 2 * b * c * d + a * c ** 2 + 3 * a * b ** 2 + a ** 3),
         0.25 * (b * d ** 2 - 2 * a * c * d + b * c ** 2 + b ** 3 + 3 * a ** 2 * b),
         0.25 * (3 * c * d ** 2 - 2 * a * b * d + c ** 3 + b ** 2 * c + a ** 2 * c),
         0.25 * (d ** 3 + 3 * c ** 2 * d + b ** 2 * d + a ** 2 * d - 2 * a * b * c)),
    )
    return out


def classify(key: Sequence[int]) -> Tuple[str, Tuple[int, ...], int]:
    """Map a sorted co-moment index tuple to (piece name, variable mapping, weight).

    The weight is the permutation multiplicity (1, 3, 6 for order 3;
    1, 4, 6, 12, 24 for order 4).
    """
    counts: Dict[int, int] = {}
    for i in key:
        counts[i] = counts.get(i, 0) + 1
    pattern = sorted(counts.values(), reverse=True)
    by_count = lambda c: sorted(i for i, n in counts.items() if n == c)  # noqa: E731
    if len(key) == 3:
        if pattern == [3]:
            return "cube", (key[0],), 1
        if pattern == [2, 1]:
            return "sq_lin", (by_count(2)[0], by_count(1)[0]), 3
        return "lin3", tuple(key), 6
    if len(key) == 4:
        if pattern == [4]:
            return "quart", (key[0],), 1
        if pattern == [3, 1]:
            return "cube_lin", (by_count(3)[0], by_count(1)[0]), 4
        if pattern == [2, 2]:
            return "sq_sq", tuple(by_count(2)), 6
        if pattern == [2, 1, 1]:
            return "sq_lin_lin", (by_count(2)[0], *by_count(1)), 12
        return "lin4", tuple(key), 24
    raise ValueError(f"unsupported index tuple {key}")


@dataclass(frozen=True)
class IndexSets:
    """Sign-based routing of co-moment entries: piece name -> (positive, negative) keys."""

    positive: Dict[str, List[Tuple[int, ...]]]
    negative: Dict[str, List[Tuple[int, ...]]]

    def all_keys(self) -> List[Tuple[int, ...]]:
        out = []
        for d in (self.positive, self.negative):
            for keys in d.values():
                out.extend(keys)
        return out


def index_sets(tensors, order: int) -> IndexSets:
    names = ("cube", "sq_lin", "lin3") if order == 3 else ("quart", "cube_lin", "sq_sq", "sq_lin_lin", "lin4")
    pos: Dict[str, List] = {k: [] for k in names}
    neg: Dict[str, List] = {k: [] for k in names}
    for key, v in tensors.entries(order):
        name, mapping, _ = classify(key)
        if v > 0:
            pos[name].append(mapping)
        elif v < 0:
            neg[name].append(mapping)
    return IndexSets(pos, neg)


def _template(p: SparsePolynomial):
    return [(tuple(v for v, _ in k), tuple(e for _, e in k), c) for k, c in p.items()]


def _accumulate(acc: Dict[Exponent, float], template, mapping: Sequence[int], weight: float) -> None:
    for lv, pw, c in template:
        key = tuple(sorted(zip([mapping[v] for v in lv], pw)))
        acc[key] = acc.get(key, 0.0) + weight * c


def _build_pair(tensors, order: int) -> DcPair:
    n = tensors.n
    table = pieces()
    templates = {name: (_template(pc.g), _template(pc.h)) for name, pc in table.items()}
    g_acc: Dict[Exponent, float] = {}
    h_acc: Dict[Exponent, float] = {}
    for key, v in tensors.entries(order):
        if v == 0.0:
            continue
        name, mapping, mult = classify(key)
        tg, th = templates[name]
        w = mult * v
        if v > 0:
            # positive: g-part to g, h-part to h
            _accumulate(g_acc, tg, mapping, w)
            _accumulate(h_acc, th, mapping, w)
        else:
            # negative: roles swap, weights become |w|
            _accumulate(g_acc, th, mapping, -w)
            _accumulate(h_acc, tg, mapping, -w)
    g_dom = Domain.NONNEG_ORTHANT if order == 3 else Domain.ALL_SPACE
    return DcPair(ConvexComponent(SparsePolynomial(n, g_acc), g_dom),
                  ConvexComponent(SparsePolynomial(n, h_acc), g_dom),
                  moment_polynomial(tensors, order))


def build_m3_pair(tensors) -> DcPair:
    """m3 = g_m3 - h_m3, both convex on the nonnegative orthant."""
    return _build_pair(tensors, 3)


def build_m4_pair(tensors) -> DcPair:
    """m4 = g_m4 - h_m4, both convex on R^n."""
    return _build_pair(tensors, 4)


def assemble_G_H(tensors, c) -> DcPair:
    """G = -c1 m1 + c2 m2 + c3 h_m3 + c4 g_m4,  H = c3 g_m3 + c4 h_m4."""
    c = Preference.of(c)
    n = tensors.n
    c1, c2, c3, c4 = c
    zero = SparsePolynomial.zero(n)
    p3 = build_m3_pair(tensors) if c3 else None
    p4 = build_m4_pair(tensors) if c4 else None
    G = sum_polys(n, [
        (-c1, moment_polynomial(tensors, 1) if c1 else zero),
        (c2, moment_polynomial(tensors, 2) if c2 else zero),
        (c3, p3.h.value if p3 else zero),
        (c4, p4.g.value if p4 else zero),
    ])
    H = sum_polys(n, [(c3, p3.g.value if p3 else zero), (c4, p4.h.value if p4 else zero)])
    dom = Domain.NONNEG_ORTHANT if c3 else Domain.ALL_SPACE
    return DcPair(ConvexComponent(G, dom), ConvexComponent(H, dom), build_objective(tensors, c))


# ---------------------------------------------------------------------------
# universal decomposition

ETA_FLOOR = 1e-8


def _abs_row_sums(tensors, order: int) -> np.ndarray:
    """max-row ingredients: sum over all trailing indices of |T_{i,...}|, per i."""
    rows = np.zeros(tensors.n)
    from .moments import multiplicity
    for key, v in tensors.entries(order):
        if v == 0.0:
            continue
        seen = set()
        for pos, i in enumerate(key):
            if i in seen:
                continue
            seen.add(i)
            rest = key[:pos] + key[pos + 1:]
            rows[i] += multiplicity(rest) * abs(v)
    return rows


def compute_eta(tensors, c) -> float:
    """eta = 2 c2 |Sigma|_inf + 6 c3 max_i sum|S_i..| + 12 c4 max_i sum|K_i...|."""
    c = Preference.of(c)
    _, c2, c3, c4 = c
    eta = 0.0
    if c2:
        eta += 2.0 * c2 * float(np.max(np.abs(tensors.sigma_matrix()).sum(axis=1)))
    if c3:
        eta += 6.0 * c3 * float(np.max(_abs_row_sums(tensors, 3)))
    if c4:
        eta += 12.0 * c4 * float(np.max(_abs_row_sums(tensors, 4)))
    return eta


@dataclass(frozen=True)
class UniversalPair:
    """f = (eta/2)|x|^2 - ((eta/2)|x|^2 - f)."""

    eta: float
    f: SparsePolynomial
    tensors: object
    c: Preference

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        object.__setattr__(self, "c", Preference.of(self.c))

    @property
    def nvars(self) -> int:
        return self.f.nvars

    def G_bar(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * self.eta * float(x @ x)

    def H_bar(self, x) -> float:
        return self.G_bar(x) - self.f(x)

    def grad_H_bar(self, x) -> np.ndarray:
        return grad_H_bar(self, x)

    def hessian_H_bar(self, x) -> np.ndarray:
        return self.eta * np.eye(self.nvars) - self.f.hessian(x)

    def H_bar_polynomial(self) -> SparsePolynomial:
        n = self.nvars
        sq = sum_polys(n, [(0.5 * self.eta, SparsePolynomial.monomial(n, {i: 2}))
                           for i in range(n)])
        return sq - self.f


def universal_pair(tensors, c, f: SparsePolynomial | None = None) -> UniversalPair:
    """Universal pair with eta from :func:`compute_eta`, floored at ``ETA_FLOOR``."""
    c = Preference.of(c)
    f = build_objective(tensors, c) if f is None else f
    return UniversalPair(max(compute_eta(tensors, c), ETA_FLOOR), f, tensors, c)


def grad_H_bar(pair: UniversalPair, x) -> np.ndarray:
    """eta x + c1 mu - 2 c2 Sigma x + c3 grad m3(x) - c4 grad m4(x)."""
    x = np.asarray(x, dtype=float)
    t = pair.tensors
    if x.shape != (t.n,):
        raise ValueError(f"dimension mismatch: expected ({t.n},), got {x.shape}")
    c1, c2, c3, c4 = pair.c
    out = pair.eta * x + c1 * np.asarray(t.mu)
    if c2:
        out = out - 2.0 * c2 * (t.sigma_matrix() @ x)
    if c3 or c4:
        h3, h4 = portfolio_moment_hessians(t, x)
        out = out + c3 * (h3 @ x) / 2.0 - c4 * (h4 @ x) / 3.0
    return out
