"""Achievable-region evaluation for the three-user additive interference channel
with nested quasi-linear codes.

For fixed auxiliary distributions every constraint is linear in the real
parameters ``(k_i/n, K, L, T)`` and the rates, so membership and optimization
reduce to a linear program. The search samples distributions from Dirichlet
laws and solves one LP per sample and objective.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dc_field
from typing import Sequence

import numpy as np
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, QhullError

from .channels import AdditiveIcChannel, make_example2
from .gf import PrimeField, make_rng
from .probspace import JointPmf, Pmf, convolve, entropy, lin_comb_pmf

EQ_TOL = 1e-9
INEQ_TOL = 1e-9
KAPPA_MAX = 50.0

EXAMPLE2_COEFFS = np.array([[1, 0, 0], [1, 1, 0], [2, 1, 1]])


@dataclass(frozen=True)
class RatePoint:
    R1: float
    R2: float
    R3: float

    def __post_init__(self):
        if min(self.R1, self.R2, self.R3) < -EQ_TOL:
            raise ValueError(f"rates must be nonnegative: {self}")

    def as_array(self) -> np.ndarray:
        return np.array([self.R1, self.R2, self.R3])

    def scaled(self, gamma: float) -> "RatePoint":
        return RatePoint(gamma * self.R1, gamma * self.R2, gamma * self.R3)

    def dominates(self, other: "RatePoint", tol: float = 1e-9) -> bool:
        return bool(np.all(self.as_array() >= other.as_array() - tol))

    def to_dict(self) -> dict:
        return {"R1": self.R1, "R2": self.R2, "R3": self.R3}


# --- parameters ----------------------------------------------------------------

SPLIT_NAMES = ("K1", "K2", "K3", "L1", "L2", "L3", "T1", "T2")


def _as_joint(table, q: int) -> np.ndarray:
    t = np.asarray(table, dtype=float)
    if t.shape != (q, q):
        raise ValueError(f"joint (U, X) table must have shape ({q}, {q})")
    if (t < -1e-12).any() or abs(t.sum() - 1) > 1e-9:
        raise ValueError("joint (U, X) table must be a pmf")
    return np.clip(t, 0, None) / t.sum()


@dataclass(frozen=True, eq=False)
class RegionParams:
    """A full parameter choice: distributions, decoding coefficients, splits, and NQLC blocks.

    ``jointU1X1[u, x] = P(U1 = u, X1 = x)``; ``kappa[i] = k_i / n``.
    """

    q: int
    jointU1X1: np.ndarray
    jointU2X2: np.ndarray
    pmfX3: Pmf
    coeffs: tuple[int, int, int, int]
    splits: dict
    kappa: tuple[float, ...]
    vpairs: tuple[tuple[Pmf, Pmf], ...]

    def __post_init__(self):
        q = self.q
        PrimeField(q)
        object.__setattr__(self, "jointU1X1", _as_joint(self.jointU1X1, q))
        object.__setattr__(self, "jointU2X2", _as_joint(self.jointU2X2, q))
        a2, b2, a3, b3 = (int(c) % q for c in self.coeffs)
        if (a2, b2) == (0, 0) or (a3, b3) == (0, 0):
            raise ValueError("coefficient pairs must not both be zero")
        object.__setattr__(self, "coeffs", (a2, b2, a3, b3))
        splits = {k: float(self.splits.get(k, 0.0)) for k in SPLIT_NAMES}
        if min(splits.values()) < -EQ_TOL:
            raise ValueError("K, L, T parameters must be nonnegative")
        object.__setattr__(self, "splits", splits)
        if len(self.kappa) != len(self.vpairs):
            raise ValueError("one k_i/n per V pair required")
        if any(k < -EQ_TOL for k in self.kappa):
            raise ValueError("k_i/n must be nonnegative")
        object.__setattr__(self, "kappa", tuple(float(k) for k in self.kappa))
        object.__setattr__(self, "vpairs", tuple((a, b) for a, b in self.vpairs))

    @classmethod
    def from_integers(cls, q, jointU1X1, jointU2X2, pmfX3, coeffs, splits, n: int, ks: Sequence[int], vpairs):
        return cls(q, jointU1X1, jointU2X2, pmfX3, coeffs, splits, tuple(k / n for k in ks), vpairs)

    @property
    def m(self) -> int:
        return len(self.kappa)

    def to_dict(self) -> dict:
        return {
            "q": self.q, "jointU1X1": self.jointU1X1.tolist(), "jointU2X2": self.jointU2X2.tolist(),
            "pmfX3": self.pmfX3.tolist(), "coeffs": list(self.coeffs), "splits": dict(self.splits),
            "kappa": list(self.kappa), "vpairs": [[a.tolist(), b.tolist()] for a, b in self.vpairs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegionParams":
        f = PrimeField(int(d["q"]))
        vp = tuple((Pmf.from_literal(f, a), Pmf.from_literal(f, b)) for a, b in d["vpairs"])
        return cls(int(d["q"]), np.asarray(d["jointU1X1"]), np.asarray(d["jointU2X2"]),
                   Pmf.from_literal(f, d["pmfX3"]), tuple(d["coeffs"]), d["splits"], tuple(d["kappa"]), vp)


def block_entropies(vpairs, alpha: int, beta: int) -> np.ndarray:
    return np.array([entropy(lin_comb_pmf(alpha, a, beta, b)) for a, b in vpairs])


def r_alpha_beta(params: RegionParams, alpha: int, beta: int) -> float:
    """``sum_i (k_i/n) H(alpha V_1i + beta V_2i)``."""
    if not params.vpairs:
        return 0.0
    return float(np.dot(params.kappa, block_entropies(params.vpairs, alpha, beta)))


# --- information terms ---------------------------------------------------------


def _output_kernel(channel: AdditiveIcChannel, j: int) -> np.ndarray:
    q = channel.q
    x1, x2, x3, y = np.indices((q, q, q, q))
    A = channel.coeffs
    return channel.noise[j].probs[(y - A[j, 0] * x1 - A[j, 1] * x2 - A[j, 2] * x3) % q]


@dataclass(frozen=True)
class InfoTerms:
    """Constants on the right-hand sides of the region's inequalities for fixed distributions."""

    logq: float
    H_U1: float
    H_U2: float
    pack1: float  # log q + H(X1) - H(X1, U1)
    pack2: float
    dec1_S: float  # log q - H(U1 | X1, Y1)
    dec1_M: float  # log q + H(X1) - H(U1, X1 | Y1)
    dec1_F: float  # I(X1; U1, Y1)
    dec2_S: float  # log q - H(W2 | X2, Y2)
    dec2_M: float  # log q + H(X2) - H(W2, X2 | Y2)
    dec2_F: float  # I(X2; U2, Y2)
    dec3_S: float  # log q + H(X3) - H(W3, X3 | Y3)
    dec3_F: float  # I(X3; Y3, W3)
    outer_factor: float  # I(U2; W2) / H(U2)


def info_terms(channel: AdditiveIcChannel, jointU1X1, jointU2X2, pmfX3: Pmf, coeffs,
               printed_rate_factor: bool = False) -> InfoTerms:
    """Evaluate every information quantity under ``P(U1,X1) P(U2,X2) P(X3) P(Y|X)``.

    ``printed_rate_factor`` evaluates the outer-code factor as
    ``I(U2; a2 U1 + a2 U2)`` instead of ``I(U2; a2 U1 + b2 U2)``.
    """
    q = channel.q
    a2, b2, a3, b3 = coeffs
    u1x1 = JointPmf(("U1", "X1"), np.asarray(jointU1X1, dtype=float))
    u2x2 = JointPmf(("U2", "X2"), np.asarray(jointU2X2, dtype=float))
    base = JointPmf.product(u1x1, u2x2, JointPmf(("X3",), pmfX3.probs))
    ins = ("X1", "X2", "X3")
    J1 = base.add_channel("Y1", _output_kernel(channel, 0), ins)
    J2 = base.add_channel("Y2", _output_kernel(channel, 1), ins)
    J2 = J2.derive("W2", lambda u1, u2: (a2 * u1 + b2 * u2) % q, ("U1", "U2"), q)
    J3 = base.add_channel("Y3", _output_kernel(channel, 2), ins)
    J3 = J3.derive("W3", lambda u1, u2: (a3 * u1 + b3 * u2) % q, ("U1", "U2"), q)
    logq = math.log2(q)

    H_U1 = base.entropy("U1")
    H_U2 = base.entropy("U2")
    if H_U2 > 1e-12:
        if printed_rate_factor:
            Jf = base.derive("Wp", lambda u1, u2: (a2 * u1 + a2 * u2) % q, ("U1", "U2"), q)
            factor = Jf.mutual_information("U2", "Wp") / H_U2
        else:
            factor = J2.mutual_information("U2", "W2") / H_U2
    else:
        factor = 1.0
    return InfoTerms(
        logq=logq, H_U1=H_U1, H_U2=H_U2,
        pack1=logq + base.entropy("X1") - base.entropy(["X1", "U1"]),
        pack2=logq + base.entropy("X2") - base.entropy(["X2", "U2"]),
        dec1_S=logq - J1.conditional_entropy("U1", ["X1", "Y1"]),
        dec1_M=logq + J1.entropy("X1") - J1.conditional_entropy(["U1", "X1"], "Y1"),
        dec1_F=J1.mutual_information("X1", ["U1", "Y1"]),
        dec2_S=logq - J2.conditional_entropy("W2", ["X2", "Y2"]),
        dec2_M=logq + J2.entropy("X2") - J2.conditional_entropy(["W2", "X2"], "Y2"),
        dec2_F=J2.mutual_information("X2", ["U2", "Y2"]),
        dec3_S=logq + J3.entropy("X3") - J3.conditional_entropy(["W3", "X3"], "Y3"),
        dec3_F=J3.mutual_information("X3", ["Y3", "W3"]),
        outer_factor=min(max(factor, 0.0), 1.0),
    )


# --- membership ----------------------------------------------------------------


@dataclass
class Verdict:
    feasible: bool
    margins: dict
    terms: InfoTerms

    @property
    def violated(self) -> list[str]:
        return [k for k, v in self.margins.items() if not self.ok(k, v)]

    @staticmethod
    def ok(label: str, margin: float) -> bool:
        if label.startswith("rate"):
            return abs(margin) <= EQ_TOL
        return margin >= -INEQ_TOL

    def to_dict(self) -> dict:
        return {"feasible": self.feasible, "margins": self.margins, "violated": self.violated}


def _r_values(params: RegionParams) -> dict:
    a2, b2, a3, b3 = params.coeffs
    return {
        "r10": r_alpha_beta(params, 1, 0),
        "r01": r_alpha_beta(params, 0, 1),
        "r2": r_alpha_beta(params, a2, b2),
        "r3": r_alpha_beta(params, a3, b3),
    }


def constraint_margins(t: InfoTerms, r: dict, s: dict, point: RatePoint, decoder1_rate: str = "r10") -> dict:
    """Signed margins (``rhs - lhs``; equalities as ``lhs - rhs``) keyed by constraint label."""
    rd1 = r[decoder1_rate]
    return {
        "rate1": point.R1 - (s["L1"] + s["T1"]),
        "rate2": point.R2 - (s["L2"] + t.outer_factor * s["T2"]),
        "pack1_S": (r["r10"] - s["T1"]) - (t.logq - t.H_U1),
        "pack2_S": (r["r01"] - s["T2"]) - (t.logq - t.H_U2),
        "pack1_F": (s["K1"] + r["r10"] - s["T1"]) - t.pack1,
        "pack2_F": (s["K2"] + r["r01"] - s["T2"]) - t.pack2,
        "dec1_S": t.dec1_S - rd1,
        "dec1_M": t.dec1_M - (rd1 + s["L1"] + s["K1"]),
        "dec1_F": t.dec1_F - (s["L1"] + s["K1"]),
        "dec2_S": t.dec2_S - r["r2"],
        "dec2_M": t.dec2_M - (r["r2"] + s["L2"] + s["K2"]),
        "dec2_F": t.dec2_F - (s["L2"] + s["K2"]),
        "dec3_S": t.dec3_S - (r["r3"] + s["L3"] + s["K3"]),
        "dec3_F": t.dec3_F - point.R3,
    }


def feasible(channel: AdditiveIcChannel, params: RegionParams, point: RatePoint,
             printed_rate_factor: bool = False, decoder1_rate: str = "r10") -> Verdict:
    """Check every region inequality for ``point`` under ``params``.

    ``decoder1_rate="r01"`` evaluates the decoder-1 bounds with the printed
    index pair instead of the rate of the code decoder 1 actually decodes.
    """
    if channel.q != params.q:
        raise ValueError(f"alphabet mismatch: channel q={channel.q}, params q={params.q}")
    t = info_terms(channel, params.jointU1X1, params.jointU2X2, params.pmfX3, params.coeffs, printed_rate_factor)
    margins = constraint_margins(t, _r_values(params), params.splits, point, decoder1_rate)
    return Verdict(all(Verdict.ok(k, v) for k, v in margins.items()), margins, t)


# --- closed-form rates and converse constants -------------------------------


@dataclass
class Lemma5Result:
    point: RatePoint
    baseline: float
    margin: float
    v3_target_entropy: float
    feasible_parameterization: bool
    detail: dict = dc_field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"point": self.point.to_dict(), "baseline": self.baseline, "margin": self.margin,
                "v3_target_entropy": self.v3_target_entropy,
                "feasible_parameterization": self.feasible_parameterization, **self.detail}


def lemma5_rates(q: int, N1: Pmf, N2: Pmf, N3: Pmf, V1: Pmf, V2: Pmf) -> Lemma5Result:
    """Rates of the quasi-linear scheme on the ``2X1 + X2 + X3`` channel.

    ``R1 = log q - H(N1+N2+N3)``, ``R2 = (H(V1+V2)/H(V1) - 1) R1`` and
    ``R3 = log q - H(N3) - H(2V1+V2)/H(V1) R1``. Negative ``R2`` or ``R3``
    is reported through ``feasible_parameterization`` (the point is clipped at 0).
    """
    if q < 3:
        raise ValueError("needs q >= 3")
    hV1 = entropy(V1)
    if hV1 <= 0:
        raise ValueError("H(V1) must be positive")
    logq = math.log2(q)
    h123 = entropy(convolve(N1, convolve(N2, N3)))
    h3 = entropy(N3)
    hs = entropy(lin_comb_pmf(1, V1, 1, V2))
    hs2 = entropy(lin_comb_pmf(2, V1, 1, V2))
    R1 = logq - h123
    R2 = (hs / hV1 - 1.0) * R1
    R3 = logq - h3 - hs2 / hV1 * R1
    ok = R1 >= 0 and R2 >= 0 and R3 >= 0
    point = RatePoint(max(R1, 0.0), max(R2, 0.0), max(R3, 0.0))
    return Lemma5Result(
        point, baseline=h123 - h3, margin=(hs - hs2) / hV1 * R1, v3_target_entropy=logq - hs2 / hV1 * R1,
        feasible_parameterization=ok,
        detail={"raw": [R1, R2, R3], "k1_over_n": R1 / hV1, "H_V1": hV1, "H_V1+V2": hs, "H_2V1+V2": hs2},
    )


def converse_bounds(kind: str, N1: Pmf, N2: Pmf, N3: Pmf) -> dict:
    """Outer-bound constants for the ``2X1 + X2 + X3`` channel.

    ``B_12`` bounds ``R1 + R2``; ``B_12_alt`` is the weaker-noise constant a
    proof step arrives at. ``B_23_nlc`` bounds ``R2 + R3`` for nested linear
    codes at ``R1`` equal to either ``R1_*`` variant.
    """
    if kind != "example2":
        raise ValueError(f"converse bounds are only defined for the example2 channel shape, got {kind!r}")
    q = N1.q
    logq = math.log2(q)
    n23 = convolve(N2, N3)
    n123 = convolve(N1, n23)
    return {
        "B_12": logq - entropy(n23),
        "B_12_alt": logq - entropy(N2),
        "B_23_nlc": entropy(n123) - entropy(N3),
        "R1_star_text": logq - entropy(n123),
        "R1_star_statement": logq - entropy(N1),
    }


def converse_bounds_for(channel: AdditiveIcChannel, N1: Pmf, N2: Pmf, N3: Pmf) -> dict:
    if not np.array_equal(channel.coeffs, EXAMPLE2_COEFFS):
        raise ValueError("channel does not have the example2 shape")
    return converse_bounds("example2", N1, N2, N3)


# --- linear program --------------------------------------------------------------

# variable layout: kappa_1..kappa_m, K1 K2 K3 L1 L2 L3 T1 T2, R1 R2 R3
_S = {name: i for i, name in enumerate(SPLIT_NAMES)}


@dataclass(frozen=True, eq=False)
class Candidate:
    """Distributions, coefficients and V-pair library; the LP picks everything else."""

    jointU1X1: np.ndarray
    jointU2X2: np.ndarray
    pmfX3: Pmf
    coeffs: tuple[int, int, int, int]
    vpairs: tuple[tuple[Pmf, Pmf], ...]
    tag: str = ""


def solve_lp(channel: AdditiveIcChannel, cand: Candidate, weights=(1.0, 1.0, 1.0), fix: dict | None = None,
             lower: RatePoint | None = None, terms: InfoTerms | None = None,
             decoder1_rate: str = "r10") -> tuple[RatePoint, RegionParams] | None:
    """Maximize ``weights . R`` over the splits and ``k_i/n`` for one candidate.

    ``fix`` pins rates (e.g. ``{"R1": 0.5}``); ``lower`` imposes ``R >= lower``.
    Returns ``None`` when infeasible. The returned rates are recomputed from
    the splits so the equalities hold exactly.
    """
    q = channel.q
    t = terms or info_terms(channel, cand.jointU1X1, cand.jointU2X2, cand.pmfX3, cand.coeffs)
    a2, b2, a3, b3 = cand.coeffs
    m = len(cand.vpairs)
    nv = m + len(SPLIT_NAMES) + 3
    iS = lambda name: m + _S[name]
    iR = lambda j: m + len(SPLIT_NAMES) + j
    h = {key: block_entropies(cand.vpairs, a, b) if m else np.zeros(0)
         for key, (a, b) in {"r10": (1, 0), "r01": (0, 1), "r2": (a2, b2), "r3": (a3, b3)}.items()}

    A, b = [], []

    def le(coefs: dict, rhs: float, r_terms: dict | None = None):
        row = np.zeros(nv)
        for k, v in (r_terms or {}).items():
            row[:m] += v * h[k]
        for idx, v in coefs.items():
            row[idx] += v
        A.append(row)
        b.append(rhs)

    rd1 = decoder1_rate
    le({iS("T1"): 1}, -(t.logq - t.H_U1), {"r10": -1})
    le({iS("T2"): 1}, -(t.logq - t.H_U2), {"r01": -1})
    le({iS("K1"): -1, iS("T1"): 1}, -t.pack1, {"r10": -1})
    le({iS("K2"): -1, iS("T2"): 1}, -t.pack2, {"r01": -1})
    le({}, t.dec1_S, {rd1: 1})
    le({iS("L1"): 1, iS("K1"): 1}, t.dec1_M, {rd1: 1})
    le({iS("L1"): 1, iS("K1"): 1}, t.dec1_F)
    le({}, t.dec2_S, {"r2": 1})
    le({iS("L2"): 1, iS("K2"): 1}, t.dec2_M, {"r2": 1})
    le({iS("L2"): 1, iS("K2"): 1}, t.dec2_F)
    le({iS("L3"): 1, iS("K3"): 1}, t.dec3_S, {"r3": 1})
    le({iR(2): 1}, t.dec3_F)

    Aeq, beq = [], []
    row = np.zeros(nv); row[iR(0)] = 1; row[iS("L1")] = -1; row[iS("T1")] = -1
    Aeq.append(row); beq.append(0.0)
    row = np.zeros(nv); row[iR(1)] = 1; row[iS("L2")] = -1; row[iS("T2")] = -t.outer_factor
    Aeq.append(row); beq.append(0.0)
    bounds = [(0, KAPPA_MAX)] * m + [(0, None)] * (len(SPLIT_NAMES) + 3)
    for j, name in enumerate(("R1", "R2", "R3")):
        if fix and name in fix:
            bounds[iR(j)] = (fix[name], fix[name])
        elif lower is not None:
            bounds[iR(j)] = (lower.as_array()[j], None)

    c = np.zeros(nv)
    c[iR(0):iR(2) + 1] = -np.asarray(weights, dtype=float)
    c[:m + len(SPLIT_NAMES)] += 1e-9  # prefer small parameters among optimal solutions
    res = linprog(c, A_ub=np.array(A), b_ub=np.array(b), A_eq=np.array(Aeq), b_eq=np.array(beq), bounds=bounds,
                  method="highs", options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10})
    if res.status != 0:
        return None
    x = np.clip(res.x, 0.0, None)
    kappa = tuple(x[:m])
    splits = {name: float(x[iS(name)]) for name in SPLIT_NAMES}
    R1 = splits["L1"] + splits["T1"]
    R2 = splits["L2"] + t.outer_factor * splits["T2"]
    R3 = min(float(x[iR(2)]), t.dec3_F)
    if fix:
        R1 = fix.get("R1", R1) if abs(fix.get("R1", R1) - R1) <= EQ_TOL else R1
        R2 = fix.get("R2", R2) if abs(fix.get("R2", R2) - R2) <= EQ_TOL else R2
    params = RegionParams(q, cand.jointU1X1, cand.jointU2X2, cand.pmfX3, cand.coeffs, splits, kappa, cand.vpairs)
    return RatePoint(max(R1, 0.0), max(R2, 0.0), max(R3, 0.0)), params


# --- candidates ------------------------------------------------------------------


def nlc_blocks(field: PrimeField) -> tuple[tuple[Pmf, Pmf], ...]:
    """The three V-pair blocks realizing a nested linear pair: (uni, uni), (uni, 0), (0, uni)."""
    uni, zero = Pmf.uniform(field), Pmf.point_mass(field)
    return ((uni, uni), (uni, zero), (zero, uni))


def _dirichlet_joint(rng, q: int, conc: float) -> np.ndarray:
    p = rng.dirichlet(np.full(q * q, conc))
    return p.reshape(q, q)


def _dirichlet_pmf(rng, field: PrimeField, conc: float) -> Pmf:
    p = rng.dirichlet(np.full(field.q, conc))
    p = np.where(p < 1e-15, 0.0, p)
    return Pmf(field, p / p.sum())


def _nonzero_pair(rng, q: int) -> tuple[int, int]:
    while True:
        a, b = (int(v) for v in rng.integers(0, q, 2))
        if (a, b) != (0, 0):
            return a, b


def _structured_joint(rng, q: int, conc: float) -> np.ndarray:
    """``X = U`` with a Dirichlet-sampled ``U`` law, or ``X`` a noisy copy of ``U``."""
    pu = rng.dirichlet(np.full(q, conc))
    if rng.random() < 0.5:
        return np.diag(pu)
    flip = rng.dirichlet(np.full(q, conc))
    return np.array([[pu[u] * flip[(x - u) % q] for x in range(q)] for u in range(q)])


@dataclass(frozen=True)
class SearchSpec:
    budget: int = 1000
    weights: tuple[tuple[float, float, float], ...] = ((1.0, 1.0, 1.0),)
    fix_R1: float | None = None
    extra_pairs: int = 3
    concentration: float = 0.6
    nlc: bool = True

    def to_dict(self) -> dict:
        return {"budget": self.budget, "weights": [list(w) for w in self.weights], "fix_R1": self.fix_R1,
                "extra_pairs": self.extra_pairs, "concentration": self.concentration, "nlc": self.nlc}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpec":
        known = {"budget", "weights", "fix_R1", "extra_pairs", "concentration", "nlc"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown search keys: {sorted(unknown)}")
        w = tuple(tuple(float(x) for x in v) for v in d.get("weights", [[1, 1, 1]]))
        return cls(int(d.get("budget", 1000)), w, d.get("fix_R1"), int(d.get("extra_pairs", 3)),
                   float(d.get("concentration", 0.6)), bool(d.get("nlc", True)))


def sample_candidate(field: PrimeField, seed, spec: SearchSpec) -> Candidate:
    rng = make_rng(seed)
    q, conc = field.q, spec.concentration
    j1 = _structured_joint(rng, q, conc) if rng.random() < 0.5 else _dirichlet_joint(rng, q, conc)
    j2 = _structured_joint(rng, q, conc) if rng.random() < 0.5 else _dirichlet_joint(rng, q, conc)
    x3 = _dirichlet_pmf(rng, field, conc)
    coeffs = _nonzero_pair(rng, q) + _nonzero_pair(rng, q)
    extra = tuple((_dirichlet_pmf(rng, field, conc), _dirichlet_pmf(rng, field, conc))
                  for _ in range(spec.extra_pairs))
    return Candidate(j1, j2, x3, coeffs, nlc_blocks(field) + extra, tag="sampled")


def nlc_candidate(cand: Candidate, field: PrimeField) -> Candidate:
    """Restriction to nested linear codes with decoder 2 decoding ``U2`` alone."""
    return Candidate(cand.jointU1X1, cand.jointU2X2, cand.pmfX3, (0, 1, cand.coeffs[2], cand.coeffs[3]),
                     nlc_blocks(field), tag=cand.tag + "/nlc")


# --- search -----------------------------------------------------------------------


@dataclass
class FoundPoint:
    point: RatePoint
    params: RegionParams
    family: str  # "nqlc" or "nlc"
    candidate: int
    witness_id: str = ""

    def to_dict(self) -> dict:
        return {"point": self.point.to_dict(), "family": self.family, "candidate": self.candidate,
                "witness_id": self.witness_id, "params": self.params.to_dict()}


def pareto(points: list[FoundPoint], tol: float = 1e-12) -> list[FoundPoint]:
    """Non-dominated subset after a canonical sort (order-independent)."""
    pts = sorted(points, key=lambda p: (-p.point.R1, -p.point.R2, -p.point.R3, p.family, p.candidate, p.witness_id))
    keep: list[FoundPoint] = []
    arr = np.empty((0, 3))
    for p in pts:
        v = p.point.as_array()
        if len(arr) and np.any(np.all(arr >= v - tol, axis=1)):
            continue
        keep.append(p)
        arr = np.vstack([arr, v])
    return keep


def convex_hull_points(points: list[RatePoint]) -> list[RatePoint]:
    """Vertices of the convex hull of the points together with their coordinate projections."""
    if not points:
        return []
    P = np.array([p.as_array() for p in points])
    corners = [P * np.array(mask) for mask in np.ndindex(2, 2, 2)]
    Q = np.unique(np.round(np.vstack(corners), 12), axis=0)
    try:
        hull = ConvexHull(Q)
        V = Q[hull.vertices]
    except (QhullError, ValueError):
        V = P
    V = V[np.lexsort(V.T[::-1])]
    return [RatePoint(*map(float, v)) for v in V if v.sum() > 0] or [RatePoint(0.0, 0.0, 0.0)]


def _evaluate(args) -> list[FoundPoint]:
    channel, cand, idx, spec = args
    field = channel.field
    out: list[FoundPoint] = []
    fix = None if spec.fix_R1 is None else {"R1": spec.fix_R1}
    families = [("nqlc", cand)]
    if spec.nlc:
        families.append(("nlc", nlc_candidate(cand, field)))
    for fam, c in families:
        terms = info_terms(channel, c.jointU1X1, c.jointU2X2, c.pmfX3, c.coeffs)
        for w_i, w in enumerate(spec.weights):
            sol = solve_lp(channel, c, w, fix=fix, terms=terms)
            if sol is None:
                continue
            pt, params = sol
            if not feasible(channel, params, pt).feasible:
                continue
            out.append(FoundPoint(pt, params, fam, idx, f"{fam}-{idx}-w{w_i}"))
    return out


@dataclass
class SearchResult:
    spec: SearchSpec
    seed: int
    evaluated: int
    points: list[FoundPoint]
    nlc_points: list[FoundPoint]
    partial: bool = False

    @property
    def hull(self) -> list[RatePoint]:
        return convex_hull_points([p.point for p in self.points])

    def best(self, weights=(1.0, 1.0, 1.0)) -> FoundPoint | None:
        if not self.points:
            return None
        w = np.asarray(weights)
        return max(self.points, key=lambda p: (float(w @ p.point.as_array()), -p.candidate))

    def best_value(self, weights=(1.0, 1.0, 1.0), family: str = "all") -> float:
        pts = self.points if family == "all" else self.nlc_points
        if not pts:
            return float("-inf")
        w = np.asarray(weights)
        return max(float(w @ p.point.as_array()) for p in pts)

    def to_dict(self) -> dict:
        return {"spec": self.spec.to_dict(), "seed": self.seed, "evaluated": self.evaluated, "partial": self.partial,
                "points": [p.to_dict() for p in self.points], "nlc_points": [p.to_dict() for p in self.nlc_points],
                "hull": [p.to_dict() for p in self.hull]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["series", "R1", "R2", "R3", "witness_id"])
        for p in self.points:
            w.writerow(["full", *(f"{v:.9g}" for v in p.point.as_array()), p.witness_id])
        for p in self.nlc_points:
            w.writerow(["nlc", *(f"{v:.9g}" for v in p.point.as_array()), p.witness_id])
        for i, p in enumerate(self.hull):
            w.writerow(["hull", *(f"{v:.9g}" for v in p.as_array()), f"hull-{i}"])
        return buf.getvalue()


def search_region(channel: AdditiveIcChannel, spec: SearchSpec, seed: int,
                  seeds: Sequence[Candidate] = (), workers: int = 1, max_seconds: float | None = None) -> SearchResult:
    """Sample ``spec.budget`` candidates and return the Pareto sets of feasible rate points.

    Candidate ``i`` is drawn from the stream ``(seed, i)`` so a larger budget
    extends a smaller one. Seed candidates are evaluated first. The NQLC series
    includes the nested-linear restriction of every candidate, which is a
    sub-family of its parameter space. ``max_seconds`` stops early and flags
    the result as partial.
    """
    import time

    if channel.q > 5:
        raise ValueError("search is limited to q <= 5")
    field = channel.field
    cands = list(seeds) + [sample_candidate(field, [seed, i], spec) for i in range(spec.budget)]
    jobs = [(channel, c, i, spec) for i, c in enumerate(cands)]
    start = time.monotonic()
    found: list[FoundPoint] = []
    evaluated = 0
    partial = False
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            for res in ex.map(_evaluate, jobs, chunksize=max(1, len(jobs) // (8 * workers))):
                found.extend(res)
                evaluated += 1
    else:
        for job in jobs:
            if max_seconds is not None and time.monotonic() - start > max_seconds:
                partial = True
                break
            found.extend(_evaluate(job))
            evaluated += 1
    nlc = pareto([p for p in found if p.family == "nlc"])
    full = pareto(found)
    return SearchResult(spec, seed, evaluated, full, nlc, partial)


def find_witness(channel: AdditiveIcChannel, point: RatePoint, candidates: Sequence[Candidate]):
    """First candidate admitting parameters that place ``point`` in the region, or ``None``.

    Returns ``(index, params, verdict)``.
    """
    fix = point.to_dict()
    for i, cand in enumerate(candidates):
        sol = solve_lp(channel, cand, (0.0, 0.0, 0.0), fix=fix)
        if sol is None:
            continue
        pt, params = sol
        v = feasible(channel, params, point)
        if v.feasible:
            return i, params, v
    return None


def lemma5_candidate(q: int, N1: Pmf, N2: Pmf, N3: Pmf, V1: Pmf, V2: Pmf, gamma: float = 1.0) -> Candidate:
    """The distributions of the quasi-linear scheme: ``X_i = U_i`` uniform, ``X3 ~ V3``, decoders 2 and 3
    decoding ``U1 + U2`` and ``2U1 + U2``."""
    from .simulate import pmf_with_sum_entropy

    field = PrimeField(q)
    res = lemma5_rates(q, N1, N2, N3, V1, V2)
    target = entropy(N3) + gamma * res.point.R3
    X3 = pmf_with_sum_entropy(N3, target)
    diag = np.eye(q) / q
    return Candidate(diag, diag, X3, (1, 1, 2, 1), ((V1, V2),) + nlc_blocks(field), tag="lemma5")


def example2_channel(q: int, N1: Pmf, N2: Pmf, N3: Pmf) -> AdditiveIcChannel:
    return make_example2(q, N1, N2, N3)
