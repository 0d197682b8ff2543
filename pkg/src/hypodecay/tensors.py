"""Symmetric m-tensors over R^d stored by multi-index class.

A symmetric tensor is determined by one value per multi-index ``alpha`` with
``|alpha| = m``; the class of ``alpha`` has ``gamma_alpha = m!/alpha!`` flat
entries.  Multi-indices are kept in graded reverse-lexicographic order
(descending), e.g. for d=3, m=2::

    (2,0,0) (1,1,0) (0,2,0) (1,0,1) (0,1,1) (0,0,2)

Flat ``d**m`` arrays are only built by :func:`materialize` and friends, all
guarded by ``MAX_FLAT_ENTRIES``.
"""

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidInputError, ResourceError

MAX_FLAT_ENTRIES = 10**6
ORDER = "grevlex"


@lru_cache(maxsize=None)
def _multiindices(d, m):
    out = []
    for combo in itertools.combinations_with_replacement(range(d), m):
        alpha = [0] * d
        for i in combo:
            alpha[i] += 1
        out.append(tuple(alpha))
    out.sort(key=lambda a: a[::-1])
    return tuple(out)


def enumerate_multiindices(d, m):
    """All ``alpha`` in N_0^d with ``|alpha| = m``, in grevlex order."""
    if d < 1 or m < 0:
        raise InvalidInputError(f"need d >= 1 and m >= 0, got d={d}, m={m}")
    return list(_multiindices(d, m))


@lru_cache(maxsize=None)
def index_map(d, m):
    return {a: i for i, a in enumerate(_multiindices(d, m))}


def dimension(d, m):
    return math.comb(d + m - 1, m)


def alpha_factorial(alpha):
    return math.prod(math.factorial(a) for a in alpha)


def gamma(alpha):
    """Class size ``m!/alpha!`` (a multinomial coefficient)."""
    return math.factorial(sum(alpha)) // alpha_factorial(alpha)


@lru_cache(maxsize=None)
def gammas(d, m):
    return np.array([gamma(a) for a in _multiindices(d, m)], dtype=float)


def _check_flat(d, m):
    if d**m > MAX_FLAT_ENTRIES:
        raise ResourceError(f"flat tensor with d^m = {d}^{m} entries exceeds {MAX_FLAT_ENTRIES}")


@lru_cache(maxsize=32)
def _flat_positions(d, m):
    # position in the grevlex list of the class of every flat index I
    _check_flat(d, m)
    if m == 0:
        return np.zeros(1, dtype=int)
    grid = np.indices((d,) * m).reshape(m, -1)
    counts = np.stack([(grid == k).sum(axis=0) for k in range(d)], axis=1)
    lookup = index_map(d, m)
    return np.array([lookup[tuple(c)] for c in counts.tolist()], dtype=int)


@dataclass(frozen=True)
class SymTensor:
    d: int
    m: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).reshape(-1)
        if vals.size != dimension(self.d, self.m):
            raise InvalidInputError(
                f"expected {dimension(self.d, self.m)} class values for d={self.d}, m={self.m}, got {vals.size}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, d, m):
        return cls(d, m, np.zeros(dimension(d, m)))

    @property
    def indices(self):
        return _multiindices(self.d, self.m)

    def __getitem__(self, alpha):
        return self.values[index_map(self.d, self.m)[tuple(alpha)]]

    def __add__(self, other):
        _same_shape(self, other)
        return SymTensor(self.d, self.m, self.values + other.values)

    def __sub__(self, other):
        _same_shape(self, other)
        return SymTensor(self.d, self.m, self.values - other.values)

    def __mul__(self, scalar):
        return SymTensor(self.d, self.m, scalar * self.values)

    __rmul__ = __mul__

    def norm(self):
        return math.sqrt(frobenius_inner(self, self))

    def materialize(self):
        return materialize(self)

    def to_dict(self):
        return {"d": self.d, "m": self.m, "order": ORDER, "values": [float(v) for v in self.values]}

    @classmethod
    def from_dict(cls, data):
        if data.get("order", ORDER) != ORDER:
            raise InvalidInputError(f"unsupported multi-index order {data.get('order')!r}")
        return cls(int(data["d"]), int(data["m"]), np.asarray(data["values"], dtype=float))


def _same_shape(A, B):
    if (A.d, A.m) != (B.d, B.m):
        raise InvalidInputError(f"shape mismatch: (d={A.d}, m={A.m}) vs (d={B.d}, m={B.m})")


def frobenius_inner(A, B):
    """Frobenius inner product, summed class-wise with weights ``gamma_alpha``."""
    _same_shape(A, B)
    return float(np.dot(gammas(A.d, A.m) * A.values, B.values))


def outer_power(v, m):
    """``v^{(x) m}`` as a SymTensor: class value ``prod_i v_i^alpha_i``."""
    v = np.asarray(v, dtype=float).reshape(-1)
    idx = np.array(_multiindices(v.size, m), dtype=int).reshape(-1, v.size)
    return SymTensor(v.size, m, np.prod(v[None, :] ** idx, axis=1))


def materialize(A):
    """Flat ``(d,)*m`` array of a SymTensor (guarded)."""
    pos = _flat_positions(A.d, A.m)
    return A.values[pos].reshape((A.d,) * A.m)


def outer(*vectors):
    """Flat outer product ``v_1 (x) ... (x) v_m``."""
    vectors = [np.asarray(v, dtype=float).reshape(-1) for v in vectors]
    _check_flat(vectors[0].size, len(vectors))
    out = np.array(1.0)
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def flat_inner(A, B):
    return float(np.sum(np.asarray(A) * np.asarray(B)))


def symmetrize(A):
    """Symmetric part of a flat m-tensor: class values are class averages."""
    A = np.asarray(A, dtype=float)
    m = A.ndim
    if m == 0:
        return SymTensor(1, 0, A.reshape(1))
    d = A.shape[0]
    if any(s != d for s in A.shape):
        raise InvalidInputError(f"symmetrize: all modes must have size d, got {A.shape}")
    pos = _flat_positions(d, m)
    sums = np.bincount(pos, weights=A.reshape(-1), minlength=dimension(d, m))
    return SymTensor(d, m, sums / gammas(d, m))


def symmetric_power_matrix(B, m):
    """Matrix of ``A -> B (.)^m A`` on class values.

    Entry ``[alpha, beta]`` is the coefficient of ``x^beta`` in
    ``prod_i ((B x)_i)^alpha_i``, which equals the sum of ``prod_k B[i_k, j_k]``
    over all ``J`` in the class of ``beta`` for any fixed ``I`` in the class
    of ``alpha``.
    """
    B = np.asarray(B, dtype=float)
    d = B.shape[0]
    idx = _multiindices(d, m)
    lookup = index_map(d, m)
    P = np.zeros((len(idx), len(idx)))
    rows = [{tuple(e): B[i, j] for j, e in enumerate(np.eye(d, dtype=int))} for i in range(d)]
    for r, alpha in enumerate(idx):
        poly = {(0,) * d: 1.0}
        for i, a in enumerate(alpha):
            for _ in range(a):
                nxt = {}
                for mono, c in poly.items():
                    for e, b in rows[i].items():
                        if b == 0.0:
                            continue
                        key = tuple(x + y for x, y in zip(mono, e))
                        nxt[key] = nxt.get(key, 0.0) + c * b
                poly = nxt
        for mono, c in poly.items():
            P[r, lookup[mono]] += c
    return P


def multilinear_mult(B, A, k=None):
    """``B (.)^k A``: contract ``B`` into the first ``k`` slots of ``A``.

    For a SymTensor and ``k = m`` (the default) the result is again a SymTensor,
    computed on class values without materializing.  For ``k < m`` the result
    is generally not symmetric and is returned as a flat array.
    """
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise InvalidInputError(f"B must be square, got shape {B.shape}")
    if isinstance(A, SymTensor):
        m = A.m
        k = m if k is None else k
        if not 1 <= k <= m:
            raise InvalidInputError(f"need 1 <= k <= m, got k={k}, m={m}")
        if B.shape[0] != A.d:
            raise InvalidInputError(f"B is {B.shape} but tensor has d={A.d}")
        if k == m:
            return SymTensor(A.d, m, symmetric_power_matrix(B, m) @ A.values)
        A = materialize(A)
    A = np.asarray(A, dtype=float)
    m = A.ndim
    k = m if k is None else k
    if not 1 <= k <= m:
        raise InvalidInputError(f"need 1 <= k <= m, got k={k}, m={m}")
    out = A
    for slot in range(k):
        out = np.moveaxis(np.tensordot(B, out, axes=([1], [slot])), 0, slot)
    return out


@dataclass(frozen=True)
class Rank1Sum:
    """``sum_k lambda_k v_k^{(x) m}`` kept as coefficients and vectors."""

    coefficients: np.ndarray
    vectors: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.coefficients, dtype=float).reshape(-1)
        vec = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if lam.size < 1 or vec.shape[0] != lam.size:
            raise InvalidInputError("need one vector per coefficient and at least one term")
        object.__setattr__(self, "coefficients", lam)
        object.__setattr__(self, "vectors", vec)

    @property
    def d(self):
        return self.vectors.shape[1]

    def tensor(self, m):
        out = SymTensor.zeros(self.d, m)
        for lam, v in zip(self.coefficients, self.vectors):
            out = out + lam * outer_power(v, m)
        return out

    def transformed(self, B):
        """Apply ``v_k -> B v_k`` to every term."""
        return Rank1Sum(self.coefficients, self.vectors @ np.asarray(B, dtype=float).T)

    def combine(self, other, a=1.0, b=1.0):
        """The formal sum ``a*self + b*other``."""
        return Rank1Sum(np.concatenate([a * self.coefficients, b * other.coefficients]),
                        np.vstack([self.vectors, other.vectors]))
