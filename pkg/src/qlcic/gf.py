"""Exact arithmetic and linear algebra over a prime field F_q.

Field elements are stored as ``int64`` numpy arrays with entries in ``[0, q)``.
Vectors are 1-D arrays, matrices 2-D arrays in row-major order; the owning
:class:`PrimeField` is passed explicitly to every operation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MAX_Q = 251


class FieldError(ValueError):
    """Raised on invalid field parameters or mismatched operands."""


def is_prime(q: int) -> bool:
    if q < 2:
        return False
    return all(q % d for d in range(2, int(q**0.5) + 1))


def make_rng(seed) -> np.random.Generator:
    """Seeded generator. ``seed`` may be an int, a sequence of ints, or a SeedSequence."""
    if seed is None:
        raise FieldError("a seed is required; unseeded randomness is not allowed")
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class PrimeField:
    q: int

    def __post_init__(self):
        if not isinstance(self.q, (int, np.integer)) or not 2 <= self.q <= MAX_Q:
            raise FieldError(f"q must be an integer in [2, {MAX_Q}], got {self.q!r}")
        if not is_prime(int(self.q)):
            raise FieldError(f"q={self.q} is not prime")

    @property
    def log2q(self) -> float:
        return float(np.log2(self.q))

    def elements(self) -> np.ndarray:
        return np.arange(self.q, dtype=np.int64)

    def array(self, values, ndim: int | None = None) -> np.ndarray:
        """Validate ``values`` as field elements and return them as an int64 array."""
        arr = np.asarray(values, dtype=np.int64)
        if ndim is not None and arr.ndim != ndim:
            raise FieldError(f"expected a {ndim}-d array, got shape {arr.shape}")
        if arr.size and (arr.min() < 0 or arr.max() >= self.q):
            raise FieldError(f"entries must lie in [0, {self.q - 1}]")
        return arr

    def inv(self, a: int) -> int:
        a = int(a) % self.q
        if a == 0:
            raise ZeroDivisionError("0 has no inverse")
        return pow(a, -1, self.q)

    def scale(self, alpha: int, x: np.ndarray) -> np.ndarray:
        return (int(alpha) * np.asarray(x, dtype=np.int64)) % self.q

    def add(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.int64) + np.asarray(y, dtype=np.int64)) % self.q

    def sub(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.int64) - np.asarray(y, dtype=np.int64)) % self.q

    def lin_comb(self, alpha: int, x: np.ndarray, beta: int, y: np.ndarray) -> np.ndarray:
        return (int(alpha) * np.asarray(x, dtype=np.int64) + int(beta) * np.asarray(y, dtype=np.int64)) % self.q


def encode_linear(u, G, b, field: PrimeField) -> np.ndarray:
    """Compute ``uG + b`` over F_q.

    ``u`` may be a single message of length k or a (N, k) batch; the result
    has the matching shape (n,) or (N, n).
    """
    G = field.array(G, ndim=2)
    u = field.array(u)
    b = field.array(b, ndim=1)
    k, n = G.shape
    if u.shape[-1] != k or u.ndim not in (1, 2):
        raise FieldError(f"message length {u.shape[-1] if u.ndim else 0} does not match k={k}")
    if b.shape != (n,):
        raise FieldError(f"dither length {b.shape[0]} does not match n={n}")
    return (u @ G + b) % field.q


def rref(G, field: PrimeField) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over F_q with first-nonzero pivoting."""
    A = field.array(G, ndim=2).copy()
    rows, cols = A.shape
    q = field.q
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        nz = np.nonzero(A[r:, c])[0]
        if nz.size == 0:
            continue
        p = r + int(nz[0])
        if p != r:
            A[[r, p]] = A[[p, r]]
        A[r] = (A[r] * field.inv(A[r, c])) % q
        others = np.nonzero(A[:, c])[0]
        for i in others:
            if i != r:
                A[i] = (A[i] - A[i, c] * A[r]) % q
        pivots.append(c)
        r += 1
    return A, pivots


def matrix_rank(G, field: PrimeField) -> int:
    return len(rref(G, field)[1])


def nullspace(G, field: PrimeField) -> np.ndarray:
    """Basis (as rows) of the right kernel ``{x : G x = 0}``.

    With ``G`` a generator matrix this returns a parity-check matrix ``H``
    satisfying ``G H^T = 0``. Shape is ``(n - rank, n)``.
    """
    R, pivots = rref(G, field)
    n = R.shape[1]
    free = [c for c in range(n) if c not in pivots]
    basis = np.zeros((len(free), n), dtype=np.int64)
    for j, f in enumerate(free):
        basis[j, f] = 1
        for i, p in enumerate(pivots):
            basis[j, p] = (-R[i, f]) % field.q
    return basis


def stack(blocks: Sequence[np.ndarray]) -> np.ndarray:
    return np.vstack([np.atleast_2d(np.asarray(b, dtype=np.int64)) for b in blocks if np.size(b)])


def random_matrix(k: int, n: int, field: PrimeField, seed) -> np.ndarray:
    if k < 1 or n < 1:
        raise FieldError("k and n must be >= 1")
    return make_rng(seed).integers(0, field.q, size=(k, n), dtype=np.int64)


def random_vec(n: int, field: PrimeField, seed) -> np.ndarray:
    if n < 1:
        raise FieldError("n must be >= 1")
    return make_rng(seed).integers(0, field.q, size=n, dtype=np.int64)


def row_keys(rows: np.ndarray, q: int) -> np.ndarray:
    """Map each row of a (N, n) field array to a hashable scalar key.

    Uses base-q integers when they fit in 63 bits, raw bytes otherwise.
    Equal keys iff equal rows.
    """
    rows = np.asarray(rows)
    n = rows.shape[1]
    if n * np.log2(q) < 63:
        weights = q ** np.arange(n - 1, -1, -1, dtype=np.int64)
        return rows.astype(np.int64) @ weights
    packed = np.ascontiguousarray(rows.astype(np.uint8))
    return packed.view(np.dtype((np.void, n))).ravel()


def unique_rows(rows: np.ndarray, q: int) -> np.ndarray:
    """Distinct rows in lexicographic order."""
    rows = np.asarray(rows, dtype=np.int64)
    if rows.shape[0] == 0:
        return rows
    return np.unique(rows, axis=0)
