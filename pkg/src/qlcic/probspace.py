"""Pmfs on F_q, entropies, field-convolution calculus, typical sets and type classes.

All logarithms are base 2, so ``log q`` means ``log2(q)`` throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Iterable, Sequence

import numpy as np

from .gf import FieldError, PrimeField

NORM_TOL = 1e-9
LITERAL_TOL = 1e-6
DEFAULT_CAP = 2**24
JOINT_CELL_CAP = 2**22


class CapacityError(RuntimeError):
    """An enumeration would exceed the configured cap."""


def _entropy_of(probs: np.ndarray) -> float:
    p = np.asarray(probs, dtype=float).ravel()
    p = p[p > 0]
    return float(-(p * np.log2(p)).sum())


@dataclass(frozen=True, eq=False)
class Pmf:
    field: PrimeField
    probs: np.ndarray

    def __post_init__(self):
        p = np.array(self.probs, dtype=float)
        if p.shape != (self.field.q,):
            raise FieldError(f"pmf needs {self.field.q} entries, got shape {p.shape}")
        if (p < -NORM_TOL).any() or (p > 1 + NORM_TOL).any():
            raise ValueError(f"pmf entries must lie in [0, 1]: {p}")
        if abs(p.sum() - 1.0) > NORM_TOL:
            raise ValueError(f"pmf sums to {p.sum()!r}, not 1")
        p = np.clip(p, 0.0, 1.0)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)

    @classmethod
    def from_literal(cls, field: PrimeField, values: Sequence[float]) -> "Pmf":
        """Config-file literal: validated to sum to 1 within 1e-6, then renormalized."""
        p = np.asarray(values, dtype=float)
        if p.shape != (field.q,):
            raise ValueError(f"pmf literal needs {field.q} entries, got {len(p)}")
        if (p < 0).any():
            raise ValueError("pmf literal has negative entries")
        if abs(p.sum() - 1.0) > LITERAL_TOL:
            raise ValueError(f"pmf literal sums to {p.sum():.6g}, expected 1")
        return cls(field, p / p.sum())

    @classmethod
    def uniform(cls, field: PrimeField) -> "Pmf":
        return cls(field, np.full(field.q, 1.0 / field.q))

    @classmethod
    def point_mass(cls, field: PrimeField, at: int = 0) -> "Pmf":
        p = np.zeros(field.q)
        p[at] = 1.0
        return cls(field, p)

    @property
    def q(self) -> int:
        return self.field.q

    def __getitem__(self, a: int) -> float:
        return float(self.probs[a])

    def __eq__(self, other):
        return isinstance(other, Pmf) and self.field == other.field and np.array_equal(self.probs, other.probs)

    def __hash__(self):
        return hash((self.field, self.probs.tobytes()))

    def allclose(self, other: "Pmf", atol: float = 1e-12) -> bool:
        return self.field == other.field and np.allclose(self.probs, other.probs, rtol=0, atol=atol)

    def tolist(self) -> list[float]:
        return [float(x) for x in self.probs]

    def __repr__(self):
        return f"Pmf(q={self.q}, probs={np.array2string(self.probs, precision=6)})"


def entropy(p: Pmf) -> float:
    return _entropy_of(p.probs)


def lin_comb_pmf(alpha: int, p: Pmf, beta: int, r: Pmf) -> Pmf:
    """Distribution of ``alpha*U + beta*U'`` for independent ``U ~ p``, ``U' ~ r``."""
    if p.field != r.field:
        raise FieldError("pmfs live on different fields")
    q = p.q
    a = np.arange(q)
    target = (int(alpha) * a[:, None] + int(beta) * a[None, :]) % q
    out = np.bincount(target.ravel(), weights=np.outer(p.probs, r.probs).ravel(), minlength=q)
    return Pmf(p.field, out / out.sum())


def convolve(p: Pmf, r: Pmf) -> Pmf:
    return lin_comb_pmf(1, p, 1, r)


def scale_pmf(alpha: int, p: Pmf) -> Pmf:
    return lin_comb_pmf(alpha, p, 0, p)


def l_fold(p: Pmf, l: int) -> Pmf:
    """Distribution of the F_q-sum of ``l`` i.i.d. copies; ``l = 0`` gives the point mass at 0."""
    if l < 0:
        raise ValueError("l must be >= 0")
    out = Pmf.point_mass(p.field)
    for _ in range(l):
        out = convolve(out, p)
    return out


def sample(p: Pmf, size, rng: np.random.Generator) -> np.ndarray:
    """Draw i.i.d. field symbols from ``p`` (inverse-CDF, deterministic per generator state)."""
    cdf = np.cumsum(p.probs)
    cdf[-1] = 1.0
    u = rng.random(size)
    return np.searchsorted(cdf, u, side="right").astype(np.int64)


# --- types and typical sets -------------------------------------------------


@dataclass(frozen=True)
class TypeVector:
    n: int
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts) or sum(counts) != self.n:
            raise ValueError(f"counts {counts} must be nonnegative and sum to n={self.n}")
        object.__setattr__(self, "counts", counts)

    @property
    def q(self) -> int:
        return len(self.counts)

    def size(self) -> int:
        return multinomial(self.counts)

    def frequencies(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float) / self.n


def multinomial(counts: Sequence[int]) -> int:
    out, total = 1, 0
    for c in counts:
        total += c
        out *= math.comb(total, c)
    return out


def compositions(n: int, q: int, lo: Sequence[int] | None = None, hi: Sequence[int] | None = None):
    """All count vectors of length ``q`` summing to ``n`` with ``lo <= counts <= hi``."""
    lo = [0] * q if lo is None else list(lo)
    hi = [n] * q if hi is None else list(hi)

    def rec(i, remaining):
        if i == q - 1:
            if lo[i] <= remaining <= hi[i]:
                yield (remaining,)
            return
        rest_lo = sum(lo[i + 1:])
        rest_hi = sum(hi[i + 1:])
        for c in range(max(lo[i], remaining - rest_hi), min(hi[i], remaining - rest_lo) + 1):
            for tail in rec(i + 1, remaining - c):
                yield (c,) + tail

    if sum(lo) > n or sum(hi) < n:
        return
    yield from rec(0, n)


def is_typical_type(counts: Sequence[int], p: Pmf, eps: float) -> bool:
    """Robust frequency typicality of a count vector: ``|c_a - n p_a| <= eps n p_a`` and ``c_a = 0`` where ``p_a = 0``."""
    n = sum(counts)
    for c, pa in zip(counts, p.probs):
        if pa == 0.0:
            if c:
                return False
        elif abs(c - n * pa) > eps * n * pa + 1e-9:
            return False
    return True


def _enumerate_type(counts: Sequence[int]) -> np.ndarray:
    """All sequences with the given symbol counts, in lexicographic order."""
    counts = list(counts)
    n = sum(counts)
    if n == 0:
        return np.zeros((1, 0), dtype=np.int64)
    blocks = []
    for a, c in enumerate(counts):
        if c == 0:
            continue
        counts[a] -= 1
        tail = _enumerate_type(counts)
        counts[a] += 1
        head = np.full((tail.shape[0], 1), a, dtype=np.int64)
        blocks.append(np.hstack([head, tail]))
    return np.vstack(blocks)


class TypeClass:
    """The set of length-n sequences with an exact symbol-count vector."""

    def __init__(self, t: TypeVector, cap: int = DEFAULT_CAP):
        self.type = t
        self.cap = cap

    @property
    def n(self) -> int:
        return self.type.n

    def size(self) -> int:
        return self.type.size()

    def contains(self, x) -> bool:
        x = np.asarray(x)
        if x.shape != (self.n,):
            return False
        return tuple(np.bincount(x, minlength=self.type.q)[: self.type.q]) == self.type.counts and x.max(initial=0) < self.type.q

    def enumerate(self) -> np.ndarray:
        if self.size() > self.cap:
            raise CapacityError(f"type class of size {self.size()} exceeds cap {self.cap}")
        return _enumerate_type(self.type.counts)


def type_class(t: TypeVector, cap: int = DEFAULT_CAP) -> TypeClass:
    return TypeClass(t, cap)


class TypicalSet:
    """Robust frequency-typical set A_eps^n of a pmf.

    Size is computed exactly by summing multinomial coefficients over the
    qualifying types; enumeration is lexicographic.
    """

    def __init__(self, p: Pmf, n: int, eps: float, cap: int = DEFAULT_CAP):
        if n < 1:
            raise ValueError("n must be >= 1")
        if eps <= 0:
            raise ValueError("eps must be > 0")
        self.pmf = p
        self.n = n
        self.eps = eps
        self.cap = cap
        self._types: list[TypeVector] | None = None

    def types(self) -> list[TypeVector]:
        if self._types is None:
            n, q = self.n, self.pmf.q
            lo, hi = [], []
            for pa in self.pmf.probs:
                if pa == 0.0:
                    lo.append(0)
                    hi.append(0)
                else:
                    lo.append(max(0, math.ceil(n * pa * (1 - self.eps) - 1e-9)))
                    hi.append(min(n, math.floor(n * pa * (1 + self.eps) + 1e-9)))
            self._types = [
                TypeVector(n, c) for c in compositions(n, q, lo, hi) if is_typical_type(c, self.pmf, self.eps)
            ]
        return self._types

    def size(self) -> int:
        return sum(t.size() for t in self.types())

    def contains(self, x) -> bool:
        x = np.asarray(x)
        if x.shape != (self.n,) or (x.size and (x.min() < 0 or x.max() >= self.pmf.q)):
            return False
        return is_typical_type(np.bincount(x, minlength=self.pmf.q), self.pmf, self.eps)

    def enumerate(self) -> np.ndarray:
        size = self.size()
        if size > self.cap:
            raise CapacityError(f"typical set of size {size} exceeds cap {self.cap}")
        if size == 0:
            return np.zeros((0, self.n), dtype=np.int64)
        rows = np.vstack([_enumerate_type(t.counts) for t in self.types()])
        order = np.lexsort(rows.T[::-1])
        return rows[order]


def typical_set(p: Pmf, n: int, eps: float, cap: int = DEFAULT_CAP) -> TypicalSet:
    return TypicalSet(p, n, eps, cap)


def all_types(n: int, q: int) -> Iterable[TypeVector]:
    for c in compositions(n, q):
        yield TypeVector(n, c)


# --- joint distributions ----------------------------------------------------


@dataclass(frozen=True, eq=False)
class JointPmf:
    """Dense joint pmf over named finite variables."""

    names: tuple[str, ...]
    table: np.ndarray = dc_field(repr=False)

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        names = tuple(self.names)
        if t.ndim != len(names) or len(set(names)) != len(names):
            raise ValueError("one distinct name per table axis required")
        if t.size > JOINT_CELL_CAP:
            raise CapacityError(f"joint table with {t.size} cells exceeds cap {JOINT_CELL_CAP}")
        if (t < -NORM_TOL).any() or abs(t.sum() - 1.0) > NORM_TOL:
            raise ValueError("joint table must be nonnegative and sum to 1")
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "table", np.clip(t, 0.0, None))

    @classmethod
    def independent(cls, **marginals: Pmf | np.ndarray) -> "JointPmf":
        names = tuple(marginals)
        table = np.ones(())
        for v in marginals.values():
            probs = v.probs if isinstance(v, Pmf) else np.asarray(v, dtype=float)
            table = np.multiply.outer(table, probs)
        return cls(names, table)

    @classmethod
    def product(cls, *parts: "JointPmf") -> "JointPmf":
        names: tuple[str, ...] = ()
        table = np.ones(())
        for part in parts:
            names += part.names
            table = np.multiply.outer(table, part.table)
        return cls(names, table)

    @property
    def sizes(self) -> dict[str, int]:
        return dict(zip(self.names, self.table.shape))

    def _axes(self, group: Iterable[str]) -> list[int]:
        group = [group] if isinstance(group, str) else list(group)
        unknown = [g for g in group if g not in self.names]
        if unknown:
            raise KeyError(f"unknown variable(s) {unknown}; have {self.names}")
        return [self.names.index(g) for g in group]

    def marginal(self, group: Iterable[str]) -> np.ndarray:
        axes = self._axes(group)
        drop = tuple(i for i in range(len(self.names)) if i not in axes)
        m = self.table.sum(axis=drop)
        # restore requested order
        kept = [i for i in range(len(self.names)) if i in axes]
        return np.transpose(m, [kept.index(a) for a in axes])

    def entropy(self, group: Iterable[str]) -> float:
        group = [group] if isinstance(group, str) else list(group)
        if not group:
            return 0.0
        return _entropy_of(self.marginal(group))

    def conditional_entropy(self, target: Iterable[str], given: Iterable[str] = ()) -> float:
        target = [target] if isinstance(target, str) else list(target)
        given = [given] if isinstance(given, str) else list(given)
        if set(target) & set(given):
            raise ValueError("target and conditioning groups overlap")
        return self.entropy(target + given) - self.entropy(given)

    def mutual_information(self, a: Iterable[str], b: Iterable[str], given: Iterable[str] = ()) -> float:
        a = [a] if isinstance(a, str) else list(a)
        b = [b] if isinstance(b, str) else list(b)
        given = [given] if isinstance(given, str) else list(given)
        if set(a) & set(b) or set(a + b) & set(given):
            raise ValueError("variable groups must be disjoint")
        h = self.entropy
        return h(a + given) + h(b + given) - h(a + b + given) - h(given)

    def derive(self, name: str, fn: Callable[..., np.ndarray], inputs: Sequence[str], size: int) -> "JointPmf":
        """Append a variable that is a deterministic function of existing ones."""
        if name in self.names:
            raise ValueError(f"variable {name!r} already present")
        axes = self._axes(inputs)
        grids = np.indices(self.table.shape)
        values = np.asarray(fn(*[grids[a] for a in axes]), dtype=np.int64)
        if values.min() < 0 or values.max() >= size:
            raise ValueError("derived values fall outside the declared alphabet")
        new = np.zeros(self.table.shape + (size,))
        np.put_along_axis(new, values[..., None], self.table[..., None], axis=-1)
        return JointPmf(self.names + (name,), new)

    def add_channel(self, name: str, kernel: np.ndarray, inputs: Sequence[str]) -> "JointPmf":
        """Append an output variable with ``P(name | inputs) = kernel[inputs..., name]``."""
        axes = self._axes(inputs)
        kernel = np.asarray(kernel, dtype=float)
        perm_table = self.table
        # broadcast kernel onto full table shape
        shape = [1] * len(self.names) + [kernel.shape[-1]]
        for k_ax, a in enumerate(axes):
            shape[a] = kernel.shape[k_ax]
        order = np.argsort(axes)
        k = np.transpose(kernel, list(order) + [len(axes)]).reshape(shape)
        return JointPmf(self.names + (name,), perm_table[..., None] * k)


def mutual_information(joint: JointPmf, group_a, group_b) -> float:
    return joint.mutual_information(group_a, group_b)


def conditional_entropy(joint: JointPmf, target, given) -> float:
    return joint.conditional_entropy(target, given)


def all_vectors(q: int, n: int) -> np.ndarray:
    """Every vector of F_q^n in lexicographic order (small n only)."""
    return np.array(list(itertools.product(range(q), repeat=n)), dtype=np.int64).reshape(-1, n)
