"""Sample moments and co-moments of asset returns, and portfolio moments.

Co-moment tensors are fully symmetric, so only sorted index tuples are
stored.  Reads with any permutation of an index tuple resolve to the sorted
key; contractions weight each stored entry by its number of distinct
permutations.
"""

from __future__ import annotations

import csv
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Sequence, Tuple

import numpy as np

_CHUNK = 1 << 16


class MomentError(ValueError):
    """Invalid return data or moment query."""


@dataclass(frozen=True)
class ReturnMatrix:
    """Per-period return rates, one row per asset (n x T)."""

    values: np.ndarray
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2:
            raise MomentError("return matrix must be two-dimensional (assets x periods)")
        n, T = v.shape
        if n < 1:
            raise MomentError("need at least one asset")
        if T < 2:
            raise MomentError(f"need at least two periods for the covariance, got T={T}")
        if not np.all(np.isfinite(v)):
            raise MomentError("return matrix contains non-finite entries")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise MomentError(f"expected {n} labels, got {len(labels)}")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def T(self) -> int:
        return self.values.shape[1]

    @cached_property
    def centered(self) -> np.ndarray:
        return self.values - self.values.mean(axis=1, keepdims=True)


def read_returns_csv(path) -> ReturnMatrix:
    """Read a CSV with periods as rows and assets as columns.

    The first row is taken as a header of asset labels when any of its
    cells fails to parse as a number.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise MomentError(f"{path}: empty file")
    labels = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        labels = [c.strip() for c in rows[0]]
        rows = rows[1:]
    data = []
    for lineno, row in enumerate(rows, start=2 if labels else 1):
        try:
            data.append([float(c) for c in row])
        except ValueError as exc:
            raise MomentError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    if not data:
        raise MomentError(f"{path}: no data rows")
    width = len(data[0])
    if any(len(r) != width for r in data):
        raise MomentError(f"{path}: ragged rows")
    return ReturnMatrix(np.array(data).T, labels)


def write_returns_csv(R: ReturnMatrix, path_or_file) -> None:
    """Header of asset labels, then one row per period."""
    labels = R.labels or tuple(f"asset{i + 1}" for i in range(R.n))
    own = not hasattr(path_or_file, "write")
    fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(labels)
        for t in range(R.T):
            w.writerow([repr(float(v)) for v in R.values[:, t]])
    finally:
        if own:
            fh.close()


def multiplicity(key: Sequence[int]) -> int:
    """Number of distinct permutations of an index tuple."""
    out = math.factorial(len(key))
    for c in Counter(key).values():
        out //= math.factorial(c)
    return out


def sorted_keys(n: int, order: int) -> np.ndarray:
    """All sorted index tuples i1 <= ... <= i_order as an (m, order) array."""
    combos = list(itertools.combinations_with_replacement(range(n), order))
    return np.array(combos, dtype=np.intp).reshape(len(combos), order)


def _check_index(n: int, indices: Sequence[int]) -> Tuple[int, ...]:
    key = tuple(sorted(int(i) for i in indices))
    if not key or key[0] < 0 or key[-1] >= n:
        raise IndexError(f"index {tuple(indices)} out of range for n={n}")
    return key


def _centered_products(D: np.ndarray, keys: np.ndarray) -> np.ndarray:
    T = D.shape[1]
    out = np.empty(len(keys))
    for start in range(0, len(keys), _CHUNK):
        block = keys[start:start + _CHUNK]
        prod = D[block[:, 0]].copy()
        for col in range(1, block.shape[1]):
            prod *= D[block[:, col]]
        out[start:start + _CHUNK] = prod.sum(axis=1) / T
    return out


class SymmetricTensor:
    """Fully symmetric tensor stored by sorted index tuple."""

    def __init__(self, n: int, order: int, keys: np.ndarray, values: np.ndarray):
        self.n = n
        self.order = order
        self.keys = np.asarray(keys, dtype=np.intp).reshape(-1, order)
        self.values = np.asarray(values, dtype=float)
        self.keys.setflags(write=False)
        self.values.setflags(write=False)
        self._index = {tuple(k): i for i, k in enumerate(self.keys.tolist())}

    @classmethod
    def from_dense(cls, a: np.ndarray) -> "SymmetricTensor":
        a = np.asarray(a, dtype=float)
        n, order = a.shape[0], a.ndim
        keys = sorted_keys(n, order)
        return cls(n, order, keys, a[tuple(keys.T)] if len(keys) else np.empty(0))

    def __len__(self) -> int:
        return len(self.values)

    def __getitem__(self, indices) -> float:
        key = _check_index(self.n, indices)
        if len(key) != self.order:
            raise IndexError(f"expected {self.order} indices, got {len(key)}")
        return float(self.values[self._index[key]])

    def items(self) -> Iterator[Tuple[Tuple[int, ...], float]]:
        for k, v in zip(self.keys.tolist(), self.values.tolist()):
            yield tuple(k), v

    @cached_property
    def multiplicities(self) -> np.ndarray:
        return np.array([multiplicity(k) for k in self.keys.tolist()], dtype=float)

    @cached_property
    def _dense(self) -> np.ndarray:
        a = np.zeros((self.n,) * self.order)
        for perm in itertools.permutations(range(self.order)):
            a[tuple(self.keys[:, perm].T)] = self.values
        a.setflags(write=False)
        return a

    def dense(self) -> np.ndarray:
        return self._dense

    def contract(self, x: np.ndarray) -> float:
        """Full contraction sum_{i..} T_{i..} x_i ... (all permutations)."""
        if not len(self.values):
            return 0.0
        return float(np.sum(self.multiplicities * self.values * np.prod(x[self.keys], axis=1)))


def estimate_mean(R: ReturnMatrix) -> np.ndarray:
    return R.values.mean(axis=1)


def estimate_covariance(R: ReturnMatrix, mu: np.ndarray) -> np.ndarray:
    if R.T < 2:
        raise MomentError("covariance needs T >= 2")
    D = R.values - np.asarray(mu)[:, None]
    sigma = D @ D.T / (R.T - 1)
    return (sigma + sigma.T) / 2.0


def estimate_coskewness(R: ReturnMatrix, mu: np.ndarray) -> SymmetricTensor:
    D = R.values - np.asarray(mu)[:, None]
    keys = sorted_keys(R.n, 3)
    return SymmetricTensor(R.n, 3, keys, _centered_products(D, keys))


def estimate_cokurtosis(R: ReturnMatrix, mu: np.ndarray) -> SymmetricTensor:
    D = R.values - np.asarray(mu)[:, None]
    keys = sorted_keys(R.n, 4)
    return SymmetricTensor(R.n, 4, keys, _centered_products(D, keys))


@dataclass(frozen=True)
class MomentTensors:
    """Materialized mean, covariance, co-skewness and co-kurtosis."""

    mu: np.ndarray
    sigma: SymmetricTensor
    skew: SymmetricTensor
    kurt: SymmetricTensor
    jit: bool = field(default=False, init=False)

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        mu.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        if not (self.sigma.n == self.skew.n == self.kurt.n == len(mu)):
            raise MomentError("moment tensors disagree on the asset count")

    @classmethod
    def from_dense(cls, mu, sigma, skew, kurt) -> "MomentTensors":
        return cls(np.asarray(mu, dtype=float), SymmetricTensor.from_dense(sigma),
                   SymmetricTensor.from_dense(skew), SymmetricTensor.from_dense(kurt))

    @property
    def n(self) -> int:
        return len(self.mu)

    def tensor(self, order: int) -> SymmetricTensor:
        try:
            return {2: self.sigma, 3: self.skew, 4: self.kurt}[order]
        except KeyError:
            raise ValueError(f"no co-moment tensor of order {order}") from None

    def entries(self, order: int) -> Iterator[Tuple[Tuple[int, ...], float]]:
        return self.tensor(order).items()

    def entry(self, indices: Sequence[int]) -> float:
        if not 2 <= len(indices) <= 4:
            raise IndexError("tensor queries take 2 to 4 indices")
        return self.tensor(len(indices))[indices]

    def sigma_matrix(self) -> np.ndarray:
        return self.sigma.dense()

    def dense(self, order: int) -> np.ndarray:
        return self.tensor(order).dense()

    # portfolio moment kernels -------------------------------------------
    def _m(self, x):
        return (float(self.mu @ x), self.sigma.contract(x), self.skew.contract(x),
                self.kurt.contract(x))

    def _hess(self, x):
        S, K = self.skew.dense(), self.kurt.dense()
        return 6.0 * np.einsum("ijk,k->ij", S, x), 12.0 * np.einsum("ijkl,k,l->ij", K, x, x)


class JitSymmetricTensor:
    """Co-moment tensor whose entries are computed from data on each read."""

    def __init__(self, R: ReturnMatrix, order: int):
        self._D = R.centered
        self.n = R.n
        self.order = order

    def __len__(self) -> int:
        return math.comb(self.n + self.order - 1, self.order)

    def __getitem__(self, indices) -> float:
        key = _check_index(self.n, indices)
        if len(key) != self.order:
            raise IndexError(f"expected {self.order} indices, got {len(key)}")
        prod = np.ones(self._D.shape[1])
        for i in key:
            prod = prod * self._D[i]
        return float(prod.mean())

    def items(self) -> Iterator[Tuple[Tuple[int, ...], float]]:
        combos = itertools.combinations_with_replacement(range(self.n), self.order)
        while True:
            block = list(itertools.islice(combos, _CHUNK))
            if not block:
                return
            keys = np.array(block, dtype=np.intp)
            yield from zip(map(tuple, block), _centered_products(self._D, keys).tolist())

    def dense(self) -> np.ndarray:
        D, T = self._D, self._D.shape[1]
        spec = {2: "it,jt->ij", 3: "it,jt,kt->ijk", 4: "it,jt,kt,lt->ijkl"}[self.order]
        return np.einsum(spec, *([D] * self.order)) / T

    def contract(self, x: np.ndarray) -> float:
        return float(np.mean((x @ self._D) ** self.order))


class JitMomentTensors:
    """Same read contract as :class:`MomentTensors`, without storing S or K."""

    jit = True

    def __init__(self, R: ReturnMatrix):
        self._R = R
        self.mu = estimate_mean(R)
        self.mu.setflags(write=False)
        self.sigma = SymmetricTensor.from_dense(estimate_covariance(R, self.mu))
        self.skew = JitSymmetricTensor(R, 3)
        self.kurt = JitSymmetricTensor(R, 4)

    n = property(lambda self: self._R.n)
    tensor = MomentTensors.tensor
    entries = MomentTensors.entries
    entry = MomentTensors.entry
    sigma_matrix = MomentTensors.sigma_matrix
    dense = MomentTensors.dense

    def _m(self, x):
        return (float(self.mu @ x), self.sigma.contract(x), self.skew.contract(x),
                self.kurt.contract(x))

    def _hess(self, x):
        D, T = self._R.centered, self._R.T
        p = x @ D
        return 6.0 * (D * p) @ D.T / T, 12.0 * (D * p ** 2) @ D.T / T


def estimate_moments(R: ReturnMatrix, jit: bool = False):
    """Build moment tensors from returns; ``jit`` defers S and K entries to read time."""
    if jit:
        return JitMomentTensors(R)
    mu = estimate_mean(R)
    return MomentTensors(mu, SymmetricTensor.from_dense(estimate_covariance(R, mu)),
                         estimate_coskewness(R, mu), estimate_cokurtosis(R, mu))


def tensor_entry(tensors, indices: Sequence[int]) -> float:
    return tensors.entry(indices)


def _vec(tensors, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (tensors.n,):
        raise ValueError(f"dimension mismatch: expected ({tensors.n},), got {x.shape}")
    return x


def portfolio_moments(tensors, x) -> Tuple[float, float, float, float]:
    """(m1, m2, m3, m4) of the portfolio with weights ``x``."""
    return tensors._m(_vec(tensors, x))


def portfolio_moment_hessians(tensors, x) -> Tuple[np.ndarray, np.ndarray]:
    """Hessians of m3 and m4 at ``x``."""
    h3, h4 = tensors._hess(_vec(tensors, x))
    return (h3 + h3.T) / 2.0, (h4 + h4.T) / 2.0


def portfolio_moment_gradients(tensors, x) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of m1..m4, the last two through the Euler identities."""
    x = _vec(tensors, x)
    h3, h4 = portfolio_moment_hessians(tensors, x)
    return tensors.mu.copy(), 2.0 * tensors.sigma_matrix() @ x, h3 @ x / 2.0, h4 @ x / 3.0
