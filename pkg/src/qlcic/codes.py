"""Coset codes, nested linear code pairs, quasi-linear codes and their sumsets.

Every code here is enumerated exactly. Enumeration and pair-walk sizes are
bounded by ``cap`` (default 2**24) and raise :class:`CapacityError` beyond it,
so rate measurements are never silently truncated.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .gf import PrimeField, encode_linear, make_rng, matrix_rank, random_matrix, random_vec, row_keys, stack
from .probspace import DEFAULT_CAP, CapacityError, Pmf, TypicalSet, TypeClass

DEFAULT_EPS = 0.2


class ConstructionError(ValueError):
    pass


class Codebook:
    """An enumerated list of codewords, optionally with the message behind each row.

    ``words`` may contain repeated rows (non-injective encoders); ``distinct``
    is the codeword set in lexicographic order.
    """

    def __init__(self, field: PrimeField, words: np.ndarray, messages: np.ndarray | None = None):
        self.field = field
        self.words = np.asarray(words, dtype=np.int64)
        self.messages = None if messages is None else np.asarray(messages, dtype=np.int64)
        self._distinct: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.words.shape[1]

    def __len__(self) -> int:
        return self.words.shape[0]

    @property
    def distinct(self) -> np.ndarray:
        if self._distinct is None:
            keys = row_keys(self.words, self.field.q)
            _, first = np.unique(keys, return_index=True)
            rows = self.words[first]
            self._distinct = rows[np.lexsort(rows.T[::-1])] if len(rows) else rows
        return self._distinct

    @property
    def size(self) -> int:
        return self.distinct.shape[0]

    @property
    def rate(self) -> float:
        return math.log2(self.size) / self.n if self.size else float("-inf")

    @property
    def injective(self) -> bool:
        return self.size == len(self)

    def as_set(self) -> set[tuple[int, ...]]:
        return {tuple(int(v) for v in row) for row in self.distinct}

    def to_csv(self, path) -> None:
        """Rows: 1-based index, message digits, codeword digits."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["index", "message", "codeword"])
            for i, word in enumerate(self.words):
                msg = "" if self.messages is None else "".join(map(str, self.messages[i]))
                w.writerow([i + 1, msg, "".join(map(str, word))])


class CosetCode(Codebook):
    """``{uG + b : u in F_q^k}``."""

    def __init__(self, field: PrimeField, G, b, cap: int = DEFAULT_CAP):
        self.G = field.array(G, ndim=2)
        self.b = field.array(b, ndim=1)
        if self.G.shape[1] != self.b.shape[0]:
            raise ConstructionError("G and b disagree on n")
        k = self.G.shape[0]
        if field.q**k > cap:
            raise CapacityError(f"q^k = {field.q}^{k} exceeds cap {cap}")
        msgs = _all_messages(field.q, k)
        super().__init__(field, encode_linear(msgs, self.G, self.b, field), msgs)

    @property
    def k(self) -> int:
        return self.G.shape[0]

    @property
    def rank(self) -> int:
        return matrix_rank(self.G, self.field)

    @property
    def design_rate(self) -> float:
        return self.k / self.n * self.field.log2q


def _all_messages(q: int, k: int) -> np.ndarray:
    if k == 0:
        return np.zeros((1, 0), dtype=np.int64)
    grids = np.indices((q,) * k).reshape(k, -1).T
    return grids.astype(np.int64)


def build_coset_code(G, b, field: PrimeField, cap: int = DEFAULT_CAP) -> CosetCode:
    return CosetCode(field, G, b, cap)


def enumerate_code(code: Codebook) -> set[tuple[int, ...]]:
    return code.as_set()


@dataclass(frozen=True)
class BlockSpec:
    """Message distribution of one generator block: ``u_i in A_eps^{k_i}(pmf)``."""

    k: int
    pmf: Pmf
    eps: float = DEFAULT_EPS


class QuasiLinearCode(Codebook):
    """``{sum_i u_i G_i + b : u_i in A_eps^{k_i}(U_i)}`` with lexicographic message order."""

    def __init__(self, field: PrimeField, blocks: Sequence[np.ndarray], b, specs: Sequence[BlockSpec],
                 cap: int = DEFAULT_CAP):
        if len(blocks) != len(specs) or not blocks:
            raise ConstructionError("need one BlockSpec per generator block")
        self.blocks = [field.array(G, ndim=2) for G in blocks]
        self.b = field.array(b, ndim=1)
        self.specs = list(specs)
        n = self.b.shape[0]
        for G, s in zip(self.blocks, self.specs):
            if G.shape != (s.k, n):
                raise ConstructionError(f"block shape {G.shape} does not match (k={s.k}, n={n})")
            if s.pmf.field != field:
                raise ConstructionError("block pmf on wrong field")
        sets = [TypicalSet(s.pmf, s.k, s.eps, cap) for s in self.specs]
        sizes = [ts.size() for ts in sets]
        if any(sz == 0 for sz in sizes):
            bad = [i for i, sz in enumerate(sizes) if sz == 0]
            raise ConstructionError(f"empty typical set for block(s) {bad}; increase eps")
        if math.prod(sizes) > cap:
            raise CapacityError(f"message set of size {math.prod(sizes)} exceeds cap {cap}")
        self.message_sets = [ts.enumerate() for ts in sets]
        msgs = self.message_sets[0]
        words = self.message_sets[0] @ self.blocks[0]
        for U, G in zip(self.message_sets[1:], self.blocks[1:]):
            part = U @ G
            words = (words[:, None, :] + part[None, :, :]).reshape(-1, n)
            msgs = np.hstack([np.repeat(msgs, len(U), axis=0), np.tile(U, (len(msgs), 1))])
        super().__init__(field, (words + self.b) % field.q, msgs)

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def message_count(self) -> int:
        return len(self)

    def target_rate(self) -> float:
        """``sum_i (k_i / n) H(U_i)``, the rate an injective map approaches."""
        from .probspace import entropy

        return sum(s.k / self.n * entropy(s.pmf) for s in self.specs)


def build_qlc(field: PrimeField, blocks, b, specs: Sequence[BlockSpec], cap: int = DEFAULT_CAP) -> QuasiLinearCode:
    return QuasiLinearCode(field, blocks, b, specs, cap)


@dataclass(frozen=True)
class QlcSpec:
    """Seeded, JSON-serializable description of a quasi-linear code."""

    q: int
    n: int
    blocks: tuple[BlockSpec, ...]
    seed: int

    def build(self, cap: int = DEFAULT_CAP) -> QuasiLinearCode:
        field = PrimeField(self.q)
        Gs = [random_matrix(s.k, self.n, field, seed=[self.seed, i]) for i, s in enumerate(self.blocks)]
        b = random_vec(self.n, field, seed=[self.seed, len(self.blocks), 1])
        return QuasiLinearCode(field, Gs, b, self.blocks, cap)

    def to_dict(self) -> dict:
        return {
            "q": self.q,
            "n": self.n,
            "seed": self.seed,
            "blocks": [{"k": s.k, "pmf": s.pmf.tolist(), "eps": s.eps} for s in self.blocks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QlcSpec":
        field = PrimeField(int(d["q"]))
        blocks = tuple(
            BlockSpec(int(b["k"]), Pmf.from_literal(field, b["pmf"]), float(b.get("eps", DEFAULT_EPS)))
            for b in d["blocks"]
        )
        return cls(int(d["q"]), int(d["n"]), blocks, int(d["seed"]))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "QlcSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class NestedLinearPair:
    """Outer codes generated by ``[G; dG]`` and ``[G; dG2]`` sharing the inner code of ``G``."""

    field: PrimeField
    G: np.ndarray
    dG: np.ndarray
    dG2: np.ndarray
    b: np.ndarray | None = None
    b2: np.ndarray | None = None

    def __post_init__(self):
        f = self.field
        self.G, self.dG, self.dG2 = (f.array(x, ndim=2) for x in (self.G, self.dG, self.dG2))
        n = self.G.shape[1]
        if self.dG.shape[1] != n or self.dG2.shape[1] != n:
            raise ConstructionError("blocks disagree on n")
        self.b = np.zeros(n, dtype=np.int64) if self.b is None else f.array(self.b, ndim=1)
        self.b2 = np.zeros(n, dtype=np.int64) if self.b2 is None else f.array(self.b2, ndim=1)

    @classmethod
    def random(cls, field: PrimeField, n: int, k_i: int, k_o: int, k_o2: int, seed, dithers: bool = True):
        if not (k_i < k_o and k_i < k_o2):
            raise ConstructionError("need k_i < k_o and k_i < k'_o")
        rng = make_rng(seed)
        G = rng.integers(0, field.q, (k_i, n))
        dG = rng.integers(0, field.q, (k_o - k_i, n))
        dG2 = rng.integers(0, field.q, (k_o2 - k_i, n))
        b = rng.integers(0, field.q, n) if dithers else None
        b2 = rng.integers(0, field.q, n) if dithers else None
        return cls(field, G, dG, dG2, b, b2)

    @property
    def n(self) -> int:
        return self.G.shape[1]

    @property
    def k_i(self) -> int:
        return self.G.shape[0]

    @property
    def k_o(self) -> int:
        return self.k_i + self.dG.shape[0]

    @property
    def k_o2(self) -> int:
        return self.k_i + self.dG2.shape[0]

    @property
    def rates(self) -> tuple[float, float, float]:
        """``(r_o, r'_o, r_i)`` as dimension ratios ``k / n``."""
        return self.k_o / self.n, self.k_o2 / self.n, self.k_i / self.n

    def outer_codes(self, cap: int = DEFAULT_CAP) -> tuple[CosetCode, CosetCode]:
        C = CosetCode(self.field, stack([self.G, self.dG]), self.b, cap)
        C2 = CosetCode(self.field, stack([self.G, self.dG2]), self.b2, cap)
        return C, C2

    def stacked_rank(self) -> int:
        return matrix_rank(stack([self.G, self.dG, self.dG2]), self.field)


@dataclass
class NqlcPair:
    """Two quasi-linear codes sharing generator blocks, with distinct dithers and message laws."""

    field: PrimeField
    blocks: list[np.ndarray]
    b: np.ndarray
    b2: np.ndarray
    specs: list[BlockSpec]
    specs2: list[BlockSpec]

    def __post_init__(self):
        if not (len(self.blocks) == len(self.specs) == len(self.specs2)):
            raise ConstructionError("both components need one BlockSpec per shared block")
        for s, s2 in zip(self.specs, self.specs2):
            if s.k != s2.k:
                raise ConstructionError("components must agree on block dimensions")

    @classmethod
    def random(cls, field: PrimeField, n: int, specs: Sequence[BlockSpec], specs2: Sequence[BlockSpec], seed):
        rng = make_rng(seed)
        blocks = [rng.integers(0, field.q, (s.k, n)) for s in specs]
        b = rng.integers(0, field.q, n)
        b2 = rng.integers(0, field.q, n)
        return cls(field, blocks, b, b2, list(specs), list(specs2))

    @property
    def m(self) -> int:
        return len(self.blocks)

    @property
    def n(self) -> int:
        return self.b.shape[0]

    def components(self, cap: int = DEFAULT_CAP) -> tuple[QuasiLinearCode, QuasiLinearCode]:
        return (
            QuasiLinearCode(self.field, self.blocks, self.b, self.specs, cap),
            QuasiLinearCode(self.field, self.blocks, self.b2, self.specs2, cap),
        )

    def predicted_rate(self, alpha: int, beta: int) -> float:
        """``sum_i (k_i / n) H(alpha U_i + beta U'_i)``."""
        from .probspace import entropy, lin_comb_pmf

        return sum(
            s.k / self.n * entropy(lin_comb_pmf(alpha, s.pmf, beta, s2.pmf)) for s, s2 in zip(self.specs, self.specs2)
        )

    def stacked_rank(self) -> int:
        return matrix_rank(stack(self.blocks), self.field)


def full_space_eps(q: int) -> float:
    """Smallest relative eps for which the uniform typical set is all of F_q^k."""
    return float(q - 1)


def nlc_as_nqlc(pair: NestedLinearPair) -> NqlcPair:
    f = pair.field
    uni = Pmf.uniform(f)
    const = Pmf.point_mass(f, 0)
    eps = full_space_eps(f.q)
    ki, d1, d2 = pair.k_i, pair.dG.shape[0], pair.dG2.shape[0]
    specs = [BlockSpec(ki, uni, eps), BlockSpec(d1, uni, eps), BlockSpec(d2, const, eps)]
    specs2 = [BlockSpec(ki, uni, eps), BlockSpec(d1, const, eps), BlockSpec(d2, uni, eps)]
    return NqlcPair(f, [pair.G, pair.dG, pair.dG2], pair.b, pair.b2, specs, specs2)


# --- sumsets ----------------------------------------------------------------

PAIR_CHUNK = 2**22


def _words(obj) -> np.ndarray:
    if isinstance(obj, Codebook):
        return obj.distinct
    if isinstance(obj, (TypeClass, TypicalSet)):
        return obj.enumerate()
    return np.atleast_2d(np.asarray(obj, dtype=np.int64))


def _sumset_rows(A: np.ndarray, B: np.ndarray, alpha: int, beta: int, q: int) -> np.ndarray:
    """Distinct rows of ``{alpha a + beta b}`` (one representative per value)."""
    n = A.shape[1]
    A = (int(alpha) * A) % q
    B = (int(beta) * B) % q
    # scaling by 0 collapses a factor; dedupe first to keep the walk small
    if alpha % q == 0:
        A = A[:1]
    if beta % q == 0:
        B = B[:1]
    chunk = max(1, PAIR_CHUNK // max(1, len(B) * n))
    keys_all, rows_all = [], []
    for start in range(0, len(A), chunk):
        S = ((A[start:start + chunk, None, :] + B[None, :, :]) % q).reshape(-1, n)
        keys = row_keys(S, q)
        _, first = np.unique(keys, return_index=True)
        keys_all.append(keys[first])
        rows_all.append(S[first])
    keys = np.concatenate(keys_all)
    rows = np.vstack(rows_all)
    _, first = np.unique(keys, return_index=True)
    rows = rows[first]
    return rows[np.lexsort(rows.T[::-1])]


class SumsetCode(Codebook):
    """Exact set ``alpha C1 + beta C2``."""


def combine_codes(alpha: int, C1, beta: int, C2, cap: int = DEFAULT_CAP) -> SumsetCode:
    A, B = _words(C1), _words(C2)
    if A.shape[1] != B.shape[1]:
        raise ConstructionError("codes have different lengths")
    field = getattr(C1, "field", None) or getattr(C2, "field")
    if isinstance(C2, Codebook) and C2.field != field:
        raise ConstructionError("codes live on different fields")
    walk = (1 if alpha % field.q == 0 else len(A)) * (1 if beta % field.q == 0 else len(B))
    if walk > cap:
        raise CapacityError(f"pair walk of {walk} exceeds cap {cap}")
    return SumsetCode(field, _sumset_rows(A, B, alpha, beta, field.q))


def sumset_with_set(codes: Sequence, S, field: PrimeField, cap: int = DEFAULT_CAP) -> int:
    """Exact ``|C_1 + ... + C_j + S|``."""
    current = _words(S)
    walked = 0
    for c in codes:
        W = _words(c)
        walked += len(current) * len(W)
        if walked > cap:
            raise CapacityError(f"pair walk of {walked} exceeds cap {cap}")
        current = _sumset_rows(current, W, 1, 1, field.q)
    return int(current.shape[0])


def appendix_alpha(C1, C2, C3, S, field: PrimeField, cap: int = DEFAULT_CAP) -> dict:
    """Empirical slack in the sumset lower bound
    ``(1/n) log|C1+C2+C3+S| >= (1/n) log(|C1+C2+S| |C3|) - alpha``.
    """
    n = _words(C1).shape[1]
    with_three = sumset_with_set([C1, C2, C3], S, field, cap)
    with_two = sumset_with_set([C1, C2], S, field, cap)
    size3 = _words(C3).shape[0]
    alpha = (math.log2(with_two * size3) - math.log2(with_three)) / n
    return {"n": n, "sum_123S": with_three, "sum_12S": with_two, "size_C3": size3, "alpha": alpha}


def alignment_deficiency(C1, C2, alpha: int = 1, beta: int = 1, cap: int = DEFAULT_CAP) -> float:
    """``rate(C1) + rate(C2) - rate(alpha C1 + beta C2)``; zero means no alignment."""
    s = combine_codes(alpha, C1, beta, C2, cap)
    return C1.rate + C2.rate - s.rate


class SubCodebook(Codebook):
    """Codewords drawn without replacement from a parent; ``parent_index[i]`` locates row i."""

    def __init__(self, field, words, messages, parent_index):
        super().__init__(field, words, messages)
        self.parent_index = np.asarray(parent_index, dtype=np.int64)


def subsample_codebook(code: Codebook, count: int, seed) -> SubCodebook:
    """``count`` distinct codewords chosen uniformly without replacement.

    Draws from the distinct codeword set; when the parent carries messages the
    first message mapping to each drawn codeword is kept.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    keys = row_keys(code.words, code.field.q)
    _, first = np.unique(keys, return_index=True)
    first = np.sort(first)
    if count > len(first):
        raise CapacityError(f"requested {count} codewords from a code with {len(first)}")
    pick = np.sort(make_rng(seed).choice(len(first), size=count, replace=False))
    idx = first[pick]
    msgs = None if code.messages is None else code.messages[idx]
    return SubCodebook(code.field, code.words[idx], msgs, idx)


def realized_rates(codes: Iterable[Codebook]) -> list[float]:
    return [c.rate for c in codes]
