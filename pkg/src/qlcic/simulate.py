"""Monte Carlo realization of the quasi-linear transmission scheme on the
``2X1 + X2 + X3`` channel and of the aligned coset scheme on the symmetric channel.

Decoding is maximum likelihood over enumerated codebooks (lowest index wins
ties), standing in for typicality decoding at short block lengths. All rates
are backed off by ``gamma`` so the finite-n experiments sit strictly inside
the boundary equalities of the asymptotic scheme.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np
from scipy.optimize import brentq
from statsmodels.stats.proportion import proportion_confint

from .channels import AdditiveIcChannel, make_example1, make_example2
from .codes import BlockSpec, Codebook, CosetCode, NqlcPair, subsample_codebook
from .gf import PrimeField, make_rng, matrix_rank, nullspace, random_matrix, random_vec, row_keys, stack
from .probspace import DEFAULT_CAP, Pmf, convolve, entropy, lin_comb_pmf, sample

SCORE_DECIMALS = 9
TABLE_STATE_CAP = 2**22


class SchemeError(RuntimeError):
    """The requested scheme cannot be built (violated condition or infeasible rates)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# --- configuration and condition report --------------------------------------


def _pmf_list(p: Pmf) -> list[float]:
    return p.tolist()


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    q: int
    n: int
    V1: Pmf
    V2: Pmf
    N1: Pmf
    N2: Pmf
    N3: Pmf
    gamma: float = 0.9
    eps: float = 0.5
    trials: int = 2000
    seed: int = 0
    V3: Pmf | None = None

    def __post_init__(self):
        if self.q < 3:
            raise ValueError("the scheme needs q >= 3")
        if not 0 < self.gamma:
            raise ValueError("gamma must be positive")
        if self.n < 1 or self.trials < 0:
            raise ValueError("n must be >= 1 and trials >= 0")

    @property
    def field(self) -> PrimeField:
        return PrimeField(self.q)

    def channel(self) -> AdditiveIcChannel:
        return make_example2(self.q, self.N1, self.N2, self.N3)

    def replace(self, **changes) -> "SchemeConfig":
        d = {k: getattr(self, k) for k in ("q", "n", "V1", "V2", "N1", "N2", "N3", "gamma", "eps", "trials", "seed", "V3")}
        d.update(changes)
        return SchemeConfig(**d)

    def to_dict(self) -> dict:
        return {
            "q": self.q, "n": self.n,
            "V1": _pmf_list(self.V1), "V2": _pmf_list(self.V2),
            "N1": _pmf_list(self.N1), "N2": _pmf_list(self.N2), "N3": _pmf_list(self.N3),
            "gamma": self.gamma, "eps": self.eps, "trials": self.trials, "seed": self.seed,
            "V3": None if self.V3 is None else _pmf_list(self.V3),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchemeConfig":
        f = PrimeField(int(d["q"]))
        pm = {k: Pmf.from_literal(f, d[k]) for k in ("V1", "V2", "N1", "N2", "N3")}
        if d.get("V3") is not None:
            pm["V3"] = Pmf.from_literal(f, d["V3"])
        return cls(q=int(d["q"]), n=int(d["n"]), gamma=float(d.get("gamma", 0.9)), eps=float(d.get("eps", 0.5)),
                   trials=int(d.get("trials", 2000)), seed=int(d.get("seed", 0)), **pm)


@dataclass(frozen=True)
class Condition:
    name: str
    lhs: float
    rhs: float
    strict: bool
    gating: bool = True

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def satisfied(self) -> bool:
        return self.margin > 0 if self.strict else self.margin >= -1e-12

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(margin=self.margin, satisfied=self.satisfied)
        return d


@dataclass
class ConditionReport:
    conditions: list[Condition]
    quantities: dict

    @property
    def ok(self) -> bool:
        return all(c.satisfied for c in self.conditions if c.gating)

    def strictly_ok(self) -> bool:
        return all(c.margin > 0 for c in self.conditions if c.gating)

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"ok": self.ok, "conditions": [c.to_dict() for c in self.conditions], "quantities": self.quantities}


def pmf_with_sum_entropy(noise: Pmf, target: float) -> Pmf:
    """A pmf ``X = (1-t) delta_0 + t uniform`` with ``H(X + noise) = target``.

    ``H(X + noise)`` increases monotonically in ``t`` from ``H(noise)`` to ``log q``.
    """
    f = noise.field
    lo, hi = entropy(noise), f.log2q
    if not lo - 1e-12 <= target <= hi + 1e-12:
        raise SchemeError(f"target entropy {target:.6g} outside [{lo:.6g}, {hi:.6g}]")
    uni = np.full(f.q, 1.0 / f.q)

    def mix(t):
        p = (1 - t) * Pmf.point_mass(f).probs + t * uni
        return Pmf(f, p / p.sum())

    if target <= lo + 1e-12:
        return mix(0.0)
    if target >= hi - 1e-12:
        return mix(1.0)
    t = brentq(lambda t: entropy(convolve(mix(t), noise)) - target, 0.0, 1.0, xtol=1e-14)
    return mix(t)


def _k1_fraction(cfg: SchemeConfig) -> float:
    R1 = cfg.field.log2q - entropy(cfg.channel().noise[0])
    return R1 / entropy(cfg.V1)


def realized_k1(cfg: SchemeConfig) -> int:
    return max(1, int(round(cfg.n * _k1_fraction(cfg))))


def check_appendixB_conditions(cfg: SchemeConfig, k1_over_n: float | None = None) -> ConditionReport:
    """Evaluate every decoding condition of the scheme with numeric margins.

    ``k1_over_n`` defaults to the exact real value; pass ``realized_k1(cfg)/n``
    to re-check after rounding.
    """
    from .region import lemma5_rates

    f = cfg.field
    logq = f.log2q
    ch = cfg.channel()
    n123, n23, n3 = ch.noise
    rates = lemma5_rates(cfg.q, cfg.N1, cfg.N2, cfg.N3, cfg.V1, cfg.V2)
    R1, R2, R3 = rates.point.R1, rates.point.R2, rates.point.R3
    g = cfg.gamma
    kn = _k1_fraction(cfg) if k1_over_n is None else k1_over_n
    hV1 = entropy(cfg.V1)
    hsum = entropy(lin_comb_pmf(1, cfg.V1, 1, cfg.V2))
    hsum2 = entropy(lin_comb_pmf(2, cfg.V1, 1, cfg.V2))
    if cfg.V3 is None:
        # V3 sits between the operating rate g*R3 and the unscaled R3
        theta = 0.5 * (1.0 + min(g, 1.0)) * max(R3, 0.0)
        h_v3n3 = entropy(n3) + theta
    else:
        h_v3n3 = entropy(convolve(cfg.V3, n3))

    conds = [
        Condition("rates_nonnegative", 0.0, min(R2, R3), strict=False),
        Condition("decoder1", min(g * R1, kn * hV1), logq - entropy(n123), strict=False),
        Condition("decoder1_qlc_rate", kn * hV1, logq - entropy(n123), strict=False, gating=False),
        Condition("decoder2_stage1", kn * hsum, logq - entropy(n23), strict=True),
        Condition("decoder2_stage1_printed", kn * hsum, logq - entropy(convolve(cfg.N1, cfg.N3)), strict=True,
                  gating=False),
        Condition("decoder2_mac", g * (R1 + R2), kn * hsum, strict=False),
        Condition("decoder3_stage1", kn * hsum2, logq - h_v3n3, strict=True),
        Condition("decoder3_stage2", g * R3, h_v3n3 - entropy(n3), strict=False),
    ]
    quantities = {
        "k1_over_n": kn, "R1": R1, "R2": R2, "R3": R3, "gamma": g,
        "H_V1": hV1, "H_V1+V2": hsum, "H_2V1+V2": hsum2, "H_V3+N3": h_v3n3,
        "stage1_threshold_receiver2": logq - entropy(n23),
        "stage1_threshold_printed": logq - entropy(convolve(cfg.N1, cfg.N3)),
    }
    return ConditionReport(conds, quantities)


# --- built scheme ------------------------------------------------------------


def _loglik_tables(p: Pmf) -> tuple[np.ndarray, np.ndarray]:
    with np.errstate(divide="ignore"):
        ll = np.log(p.probs)
    impossible = (p.probs == 0).astype(float)
    return np.where(np.isfinite(ll), ll, 0.0), impossible


def ml_decode(words: np.ndarray, noise: Pmf, Y: np.ndarray) -> np.ndarray:
    """Row index maximizing ``prod_j P(y_j - c_j)`` for each received row of ``Y``.

    Zero-likelihood candidates score ``-inf``; ties go to the lowest index.
    """
    Y = np.atleast_2d(Y)
    q = noise.q
    ll, imp = _loglik_tables(noise)
    M = words.shape[0]
    scores = np.zeros((Y.shape[0], M))
    bad = np.zeros((Y.shape[0], M))
    for a in range(q):
        onehot = (words == a).astype(float)  # (M, n)
        diff = (Y - a) % q  # (T, n)
        scores += ll[diff] @ onehot.T
        bad += imp[diff] @ onehot.T
    scores = np.round(scores, SCORE_DECIMALS)
    scores[bad > 0] = -np.inf
    return np.argmax(scores, axis=1)


@dataclass(eq=False)
class SumCodebook:
    """Distinct values of ``a*v1 + b*v2`` over the codebook pairs, with pair multiplicities."""

    words: np.ndarray  # codewords (S, n)
    pair_count: np.ndarray  # (S,)
    first_pair: np.ndarray  # (S, 2) lowest (i, j) pair producing each value
    pair_to_sum: np.ndarray  # (Phi1, Phi2) -> sum index


def _build_sum_codebook(field, msg1, msg2, G, dither, a, b) -> SumCodebook:
    q = field.q
    P1, P2 = len(msg1), len(msg2)
    sums = ((a * msg1[:, None, :] + b * msg2[None, :, :]) % q).reshape(P1 * P2, -1)
    keys = row_keys(sums, q)
    uniq, first, inverse, counts = np.unique(keys, return_index=True, return_inverse=True, return_counts=True)
    msgs = sums[first]
    words = (msgs @ G + dither) % q
    pairs = np.stack(np.divmod(first, P2), axis=1)
    return SumCodebook(words, counts, pairs, inverse.reshape(P1, P2))


@dataclass(eq=False)
class BuiltScheme:
    config: SchemeConfig
    channel: AdditiveIcChannel
    k1: int
    G1: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    C1: Codebook
    C2: Codebook
    C3: Codebook
    V3: Pmf
    phi: tuple[int, int, int]
    rates: dict
    report: ConditionReport
    qlc_sizes: tuple[int, int]
    sum2: SumCodebook = dc_field(repr=False)
    sum3: SumCodebook = dc_field(repr=False)
    noise3_stage1: Pmf = dc_field(repr=False)

    def codebook_digest(self) -> str:
        import hashlib

        h = hashlib.sha256()
        for arr in (self.G1, self.b1, self.b2, self.C1.words, self.C2.words, self.C3.words):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()


def build_scheme(cfg: SchemeConfig, cap: int = DEFAULT_CAP, force: bool = False) -> BuiltScheme:
    """Construct codebooks for ``cfg``.

    Refuses (``SchemeError`` carrying the report) when a gating condition fails,
    before or after rounding ``k1``. ``force`` builds anyway for converse-side
    experiments; requested list sizes beyond a quasi-linear code are then
    clipped to the largest power of two it holds, and recorded in ``rates``.
    """
    field = cfg.field
    q = cfg.q
    analytic = check_appendixB_conditions(cfg)
    if not analytic.ok and not force:
        raise SchemeError("scheme conditions violated", analytic)
    k1 = realized_k1(cfg)
    report = check_appendixB_conditions(cfg, k1 / cfg.n)
    if not report.ok and not force:
        raise SchemeError(f"conditions violated after rounding k1 to {k1}", report)

    R1, R2, R3 = (report.quantities[k] for k in ("R1", "R2", "R3"))
    g = cfg.gamma
    phi = [2 ** int(math.floor(cfg.n * g * max(R, 0.0) + 1e-9)) for R in (R1, R2, R3)]
    V3 = cfg.V3 if cfg.V3 is not None else pmf_with_sum_entropy(cfg.N3, report.quantities["H_V3+N3"])

    pair = NqlcPair.random(field, cfg.n, [BlockSpec(k1, cfg.V1, cfg.eps)], [BlockSpec(k1, cfg.V2, cfg.eps)],
                           seed=[cfg.seed, 0])
    Q1, Q2 = pair.components(cap)
    clipped = []
    if force:
        for i, Q in enumerate((Q1, Q2)):
            avail = 2 ** int(math.floor(math.log2(Q.size)))
            if phi[i] > avail:
                clipped.append(i + 1)
                phi[i] = avail
    phi = tuple(phi)
    C1 = subsample_codebook(Q1, phi[0], seed=[cfg.seed, 1])
    C2 = subsample_codebook(Q2, phi[1], seed=[cfg.seed, 2])
    words3 = sample(V3, (phi[2], cfg.n), make_rng([cfg.seed, 3]))
    C3 = Codebook(field, words3, np.arange(phi[2])[:, None])

    G1 = pair.blocks[0]
    if phi[0] * phi[1] > cap:
        raise SchemeError(f"pair walk {phi[0] * phi[1]} exceeds cap {cap}")
    sum2 = _build_sum_codebook(field, C1.messages, C2.messages, G1, (pair.b + pair.b2) % q, 1, 1)
    sum3 = _build_sum_codebook(field, C1.messages, C2.messages, G1, (2 * pair.b + pair.b2) % q, 2, 1)

    rates = {
        "R1": R1, "R2": R2, "R3": R3,
        "operating": [math.log2(p) / cfg.n for p in phi],
        "qlc_rates": [Q1.rate, Q2.rate],
        "clipped_users": clipped,
    }
    return BuiltScheme(cfg, cfg.channel(), k1, G1, pair.b, pair.b2, C1, C2, C3, V3, phi, rates, report,
                       (len(Q1), len(Q2)), sum2, sum3, convolve(V3, cfg.N3))


# --- decoders ----------------------------------------------------------------

AMBIGUOUS = "ambiguous"
NO_CANDIDATE = "no_candidate"


@dataclass(frozen=True)
class Decoded2:
    messages: tuple[int, int] | None
    failure: str | None
    sum_index: int


@dataclass(frozen=True)
class Decoded3:
    message: int
    stage1_index: int
    failure: str | None = None


def decode1(scheme: BuiltScheme, y1) -> int:
    return int(ml_decode(scheme.C1.words, scheme.channel.noise[0], np.asarray(y1))[0])


def _resolve_pairs(sc: SumCodebook, idx: np.ndarray):
    counts = sc.pair_count[idx]
    return sc.first_pair[idx], counts


def decode2(scheme: BuiltScheme, y2) -> Decoded2:
    s = int(ml_decode(scheme.sum2.words, scheme.channel.noise[1], np.asarray(y2))[0])
    count = int(scheme.sum2.pair_count[s])
    if count == 0:
        return Decoded2(None, NO_CANDIDATE, s)
    if count > 1:
        return Decoded2(None, AMBIGUOUS, s)
    i, j = scheme.sum2.first_pair[s]
    return Decoded2((int(i), int(j)), None, s)


def decode3(scheme: BuiltScheme, y3) -> Decoded3:
    y3 = np.atleast_2d(y3)
    t = ml_decode(scheme.sum3.words, scheme.noise3_stage1, y3)
    residual = (y3 - scheme.sum3.words[t]) % scheme.config.q
    m3 = ml_decode(scheme.C3.words, scheme.channel.noise[2], residual)
    return Decoded3(int(m3[0]), int(t[0]))


# --- trials --------------------------------------------------------------------

DECODER_STAGES = (
    ("decoder1", "total"),
    ("decoder2", "total"),
    ("decoder2", "stage1"),
    ("decoder2", "stage2_ambiguous"),
    ("decoder2", "stage2_no_candidate"),
    ("decoder3", "total"),
    ("decoder3", "stage1"),
    ("decoder3", "stage2"),
    ("any", "total"),
)


def wilson_interval(errors: int, trials: int) -> tuple[float, float]:
    if trials == 0:
        return (0.0, 1.0)
    lo, hi = proportion_confint(errors, trials, alpha=0.05, method="wilson")
    return float(lo), float(hi)


@dataclass
class TrialReport:
    n: int
    trials: int
    counts: dict
    seed: int
    label: str = "appendixB"
    extras: dict = dc_field(default_factory=dict)

    def rate(self, decoder: str, stage: str = "total") -> float:
        return self.counts[f"{decoder}/{stage}"] / self.trials if self.trials else 0.0

    def interval(self, decoder: str, stage: str = "total") -> tuple[float, float]:
        return wilson_interval(self.counts[f"{decoder}/{stage}"], self.trials)

    def merge(self, other: "TrialReport") -> "TrialReport":
        counts = {k: self.counts.get(k, 0) + other.counts.get(k, 0) for k in set(self.counts) | set(other.counts)}
        return TrialReport(self.n, self.trials + other.trials, counts, self.seed, self.label, dict(self.extras))

    def rows(self) -> list[dict]:
        out = []
        for key in sorted(self.counts):
            decoder, stage = key.split("/")
            lo, hi = self.interval(decoder, stage)
            out.append({"label": self.label, "n": self.n, "decoder": decoder, "stage": stage,
                        "errors": self.counts[key], "trials": self.trials,
                        "rate": self.rate(decoder, stage), "wilson_lo": lo, "wilson_hi": hi})
        return out

    def to_dict(self) -> dict:
        return {"label": self.label, "n": self.n, "trials": self.trials, "seed": self.seed,
                "counts": dict(sorted(self.counts.items())), "extras": self.extras, "rows": self.rows()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        rows = self.rows()
        w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["label"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
        return buf.getvalue()


def _trial_draws(scheme: BuiltScheme, trial_ids: np.ndarray):
    cfg = scheme.config
    P1, P2, P3 = scheme.phi
    ms = np.empty((len(trial_ids), 3), dtype=np.int64)
    noise = np.empty((3, len(trial_ids), cfg.n), dtype=np.int64)
    for r, t in enumerate(trial_ids):
        rng = make_rng([cfg.seed, 7, int(t)])
        ms[r] = rng.integers(0, P1), rng.integers(0, P2), rng.integers(0, P3)
        for j in range(3):
            noise[j, r] = sample(scheme.channel.noise[j], cfg.n, rng)
    return ms, noise


BATCH = 64


def _run_chunk(scheme: BuiltScheme, trial_ids: np.ndarray) -> dict:
    q = scheme.config.q
    counts = {f"{d}/{s}": 0 for d, s in DECODER_STAGES}
    for start in range(0, len(trial_ids), BATCH):
        ids = trial_ids[start:start + BATCH]
        ms, noise = _trial_draws(scheme, ids)
        x1 = scheme.C1.words[ms[:, 0]]
        x2 = scheme.C2.words[ms[:, 1]]
        x3 = scheme.C3.words[ms[:, 2]]
        ch = scheme.channel
        y = [(ch.clean_output(j, x1, x2, x3) + noise[j]) % q for j in range(3)]

        m1_hat = ml_decode(scheme.C1.words, ch.noise[0], y[0])
        e1 = m1_hat != ms[:, 0]

        true2 = scheme.sum2.pair_to_sum[ms[:, 0], ms[:, 1]]
        s_hat = ml_decode(scheme.sum2.words, ch.noise[1], y[1])
        s1_err = s_hat != true2
        cnt = scheme.sum2.pair_count[s_hat]
        pairs = scheme.sum2.first_pair[s_hat]
        ok_pair = (cnt == 1) & (pairs[:, 0] == ms[:, 0]) & (pairs[:, 1] == ms[:, 1])
        e2 = ~ok_pair
        amb = (~s1_err) & (cnt > 1)
        nocand = (~s1_err) & (cnt == 0)

        true3 = scheme.sum3.pair_to_sum[ms[:, 0], ms[:, 1]]
        t_hat = ml_decode(scheme.sum3.words, scheme.noise3_stage1, y[2])
        s31_err = t_hat != true3
        residual = (y[2] - scheme.sum3.words[t_hat]) % q
        m3_hat = ml_decode(scheme.C3.words, ch.noise[2], residual)
        e3 = m3_hat != ms[:, 2]

        counts["decoder1/total"] += int(e1.sum())
        counts["decoder2/total"] += int(e2.sum())
        counts["decoder2/stage1"] += int(s1_err.sum())
        counts["decoder2/stage2_ambiguous"] += int(amb.sum())
        counts["decoder2/stage2_no_candidate"] += int(nocand.sum())
        counts["decoder3/total"] += int(e3.sum())
        counts["decoder3/stage1"] += int(s31_err.sum())
        counts["decoder3/stage2"] += int(((~s31_err) & e3).sum())
        counts["any/total"] += int((e1 | e2 | e3).sum())
    return counts


def _fan_out(fn, scheme, trials: int, workers: int) -> dict:
    ids = np.arange(trials)
    if workers <= 1 or trials < 2 * BATCH:
        return fn(scheme, ids)
    chunks = np.array_split(ids, workers)
    total: dict = {}
    with ProcessPoolExecutor(max_workers=workers) as ex:
        for counts in ex.map(fn, [scheme] * len(chunks), chunks):
            for k, v in counts.items():
                total[k] = total.get(k, 0) + v
    return total


def run_trials(cfg: SchemeConfig, workers: int = 1, scheme: BuiltScheme | None = None,
               force: bool = False) -> TrialReport:
    scheme = build_scheme(cfg, force=force) if scheme is None else scheme
    counts = _fan_out(_run_chunk, scheme, cfg.trials, workers)
    extras = {
        "k1": scheme.k1, "phi": list(scheme.phi), "qlc_sizes": list(scheme.qlc_sizes),
        "operating_rates": scheme.rates["operating"], "V3": scheme.V3.tolist(),
        "sum2_size": int(len(scheme.sum2.words)), "sum3_size": int(len(scheme.sum3.words)),
        "clipped_users": scheme.rates["clipped_users"],
    }
    return TrialReport(cfg.n, cfg.trials, counts, cfg.seed, "appendixB", extras)


# --- symmetric channel: aligned coset codes -----------------------------------------


class CosetMlDecoder:
    """ML decoder for a coset code ``{uG + b}`` under i.i.d. additive noise.

    Small codes are decoded by enumeration. Larger ones use a table of
    maximum-likelihood coset leaders indexed by syndrome, built once with a
    Viterbi pass over the syndrome trellis; the leader choice does not depend
    on the received word, so decoding is a syndrome lookup.
    """

    def __init__(self, field: PrimeField, G: np.ndarray, b: np.ndarray, noise: Pmf, enum_limit: int = 4096):
        self.field = field
        self.G = G
        self.b = b
        self.noise = noise
        q = field.q
        self.rank = matrix_rank(G, field)
        self.size = q**self.rank
        if self.size <= enum_limit:
            self.code = CosetCode(field, G, b)
            self.words = self.code.distinct
            self.H = None
        else:
            self.words = None
            self.H = nullspace(G, field)
            r = self.H.shape[0]
            if q**r > TABLE_STATE_CAP:
                raise SchemeError(f"syndrome table with {q}^{r} states exceeds cap")
            self.leaders = self._leader_table()

    def _syndrome_index(self, E: np.ndarray) -> np.ndarray:
        q = self.field.q
        s = (E @ self.H.T) % q
        r = self.H.shape[0]
        return s @ (q ** np.arange(r - 1, -1, -1, dtype=np.int64)) if r else np.zeros(len(E), dtype=np.int64)

    def _leader_table(self) -> np.ndarray:
        q = self.field.q
        H = self.H
        r, n = H.shape
        S = q**r
        weights = q ** np.arange(r - 1, -1, -1, dtype=np.int64)
        with np.errstate(divide="ignore"):
            ll = np.log(self.noise.probs)
        states = np.arange(S)
        digits = (states[:, None] // weights[None, :]) % q  # (S, r)
        best = np.full(S, -np.inf)
        best[0] = 0.0
        choice = np.zeros((n, S), dtype=np.int8)
        for j in range(n):
            new = np.full(S, -np.inf)
            arg = np.zeros(S, dtype=np.int8)
            for a in range(q):
                if not np.isfinite(ll[a]):
                    continue
                # predecessor of state s under symbol a is s - a*h_j
                pred = ((digits - a * H[:, j]) % q) @ weights
                cand = best[pred] + ll[a]
                better = cand > new
                new = np.where(better, cand, new)
                arg = np.where(better, a, arg)
            best, choice[j] = new, arg
        leaders = np.zeros((S, n), dtype=np.int64)
        cur = states.copy()
        for j in range(n - 1, -1, -1):
            a = choice[j, cur].astype(np.int64)
            leaders[:, j] = a
            cur = ((((cur[:, None] // weights) % q) - a[:, None] * H[:, j]) % q) @ weights
        self.leader_loglik = best
        return leaders

    def decode(self, Y: np.ndarray) -> np.ndarray:
        """Decoded codewords, one row per received row."""
        Y = np.atleast_2d(Y)
        if self.words is not None:
            return self.words[ml_decode(self.words, self.noise, Y)]
        syn = self._syndrome_index((Y - self.b) % self.field.q)
        return (Y - self.leaders[syn]) % self.field.q


@dataclass(frozen=True, eq=False)
class Example1Config:
    q: int
    N1: Pmf
    N3: Pmf
    gamma: float = 0.8
    n: int = 18
    trials: int = 2000
    seed: int = 0
    x3_gap: float = 0.05

    def to_dict(self) -> dict:
        return {"q": self.q, "N1": self.N1.tolist(), "N3": self.N3.tolist(), "gamma": self.gamma, "n": self.n,
                "trials": self.trials, "seed": self.seed, "x3_gap": self.x3_gap}

    @classmethod
    def from_dict(cls, d: dict) -> "Example1Config":
        f = PrimeField(int(d["q"]))
        return cls(int(d["q"]), Pmf.from_literal(f, d["N1"]), Pmf.from_literal(f, d["N3"]),
                   float(d.get("gamma", 0.8)), int(d.get("n", 18)), int(d.get("trials", 2000)),
                   int(d.get("seed", 0)), float(d.get("x3_gap", 0.05)))


@dataclass(eq=False)
class Example1Scheme:
    config: Example1Config
    mode: str
    channel: AdditiveIcChannel
    k: int
    G1: np.ndarray
    b1: np.ndarray
    G2: np.ndarray
    b2: np.ndarray
    X3: Pmf
    C3: np.ndarray
    rates: tuple[float, float, float]
    dec1: CosetMlDecoder
    dec2: CosetMlDecoder
    dec3_sum: CosetMlDecoder

    @property
    def sum_code_size(self) -> int:
        return self.dec3_sum.size

    @property
    def single_code_size(self) -> int:
        return self.dec1.size


def build_example1(cfg: Example1Config, mode: str = "aligned") -> Example1Scheme:
    if mode not in ("aligned", "control"):
        raise ValueError("mode must be 'aligned' or 'control'")
    field = PrimeField(cfg.q)
    ch = make_example1(cfg.q, cfg.N1, cfg.N3)
    n13, _, n3 = ch.noise
    cap12 = field.log2q - entropy(n13)
    k = int(math.floor(cfg.n * cfg.gamma * cap12 / field.log2q + 1e-9))
    if k < 1:
        raise SchemeError("backed-off rate leaves no coset-code dimension")
    X3 = pmf_with_sum_entropy(cfg.N3, entropy(n13) - cfg.x3_gap)
    r3 = cfg.gamma * (entropy(convolve(X3, cfg.N3)) - entropy(n3))
    if r3 <= 0:
        raise SchemeError("user-3 rate is not positive after back-off")
    phi3 = 2 ** int(math.floor(cfg.n * r3 + 1e-9))

    G1 = random_matrix(k, cfg.n, field, seed=[cfg.seed, 11])
    b1 = random_vec(cfg.n, field, seed=[cfg.seed, 12])
    if mode == "aligned":
        G2, b2 = G1, b1
    else:
        G2 = random_matrix(k, cfg.n, field, seed=[cfg.seed, 21])
        b2 = random_vec(cfg.n, field, seed=[cfg.seed, 22])
    C3 = sample(X3, (phi3, cfg.n), make_rng([cfg.seed, 13]))

    dec1 = CosetMlDecoder(field, G1, b1, n13)
    dec2 = dec1 if mode == "aligned" else CosetMlDecoder(field, G2, b2, n13)
    Gsum = G1 if mode == "aligned" else stack([G1, G2])
    dec3_sum = CosetMlDecoder(field, Gsum, (b1 + b2) % cfg.q, convolve(X3, cfg.N3))
    rate12 = k / cfg.n * field.log2q
    return Example1Scheme(cfg, mode, ch, k, G1, b1, G2, b2, X3, C3, (rate12, rate12, math.log2(phi3) / cfg.n),
                          dec1, dec2, dec3_sum)


def _example1_chunk(scheme: Example1Scheme, trial_ids: np.ndarray) -> dict:
    cfg = scheme.config
    q = cfg.q
    k = scheme.k
    counts = {f"{d}/{s}": 0 for d, s in (("decoder1", "total"), ("decoder2", "total"), ("decoder3", "total"),
                                         ("decoder3", "stage1"), ("decoder3", "stage2"), ("any", "total"))}
    ch = scheme.channel
    for start in range(0, len(trial_ids), BATCH):
        ids = trial_ids[start:start + BATCH]
        T = len(ids)
        u1 = np.empty((T, k), dtype=np.int64)
        u2 = np.empty((T, k), dtype=np.int64)
        m3 = np.empty(T, dtype=np.int64)
        noise = np.empty((3, T, cfg.n), dtype=np.int64)
        for r, t in enumerate(ids):
            rng = make_rng([cfg.seed, 17, int(t)])
            u1[r] = rng.integers(0, q, k)
            u2[r] = rng.integers(0, q, k)
            m3[r] = rng.integers(0, len(scheme.C3))
            for j in range(3):
                noise[j, r] = sample(ch.noise[j], cfg.n, rng)
        x1 = (u1 @ scheme.G1 + scheme.b1) % q
        x2 = (u2 @ scheme.G2 + scheme.b2) % q
        x3 = scheme.C3[m3]
        y = [(ch.clean_output(j, x1, x2, x3) + noise[j]) % q for j in range(3)]
        e1 = (scheme.dec1.decode(y[0]) != x1).any(axis=1)
        e2 = (scheme.dec2.decode(y[1]) != x2).any(axis=1)
        s_hat = scheme.dec3_sum.decode(y[2])
        s_err = (s_hat != (x1 + x2) % q).any(axis=1)
        m3_hat = ml_decode(scheme.C3, ch.noise[2], (y[2] - s_hat) % q)
        e3 = m3_hat != m3
        counts["decoder1/total"] += int(e1.sum())
        counts["decoder2/total"] += int(e2.sum())
        counts["decoder3/total"] += int(e3.sum())
        counts["decoder3/stage1"] += int(s_err.sum())
        counts["decoder3/stage2"] += int(((~s_err) & e3).sum())
        counts["any/total"] += int((e1 | e2 | e3).sum())
    return counts


def example1_aligned_scheme(q: int, N1: Pmf, N3: Pmf, gamma: float, n: int, seed: int, trials: int = 2000,
                            mode: str = "aligned", workers: int = 1) -> TrialReport:
    cfg = Example1Config(q, N1, N3, gamma, n, trials, seed)
    return run_example1(cfg, mode, workers)


def run_example1(cfg: Example1Config, mode: str = "aligned", workers: int = 1) -> TrialReport:
    scheme = build_example1(cfg, mode)
    counts = _fan_out(_example1_chunk, scheme, cfg.trials, workers)
    extras = {
        "mode": mode, "k": scheme.k, "rates": list(scheme.rates), "X3": scheme.X3.tolist(),
        "single_code_size": scheme.single_code_size, "sum_code_size": scheme.sum_code_size,
        "codebook3_size": int(len(scheme.C3)),
    }
    return TrialReport(cfg.n, cfg.trials, counts, cfg.seed, f"example1_{mode}", extras)
