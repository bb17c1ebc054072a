"""Acceptance gate: every criterion at its stated tolerance, one pass/fail line each."""

from __future__ import annotations

import itertools
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qlcic.codes import BlockSpec, CosetCode, NestedLinearPair, NqlcPair, appendix_alpha, combine_codes
from qlcic.gf import PrimeField, random_matrix, random_vec
from qlcic.probspace import Pmf, TypeVector, entropy, type_class, typical_set
from qlcic.region import (
    RatePoint, SearchSpec, converse_bounds, example2_channel, feasible, find_witness, lemma5_candidate, lemma5_rates,
    sample_candidate, search_region,
)
from qlcic.simulate import SchemeConfig, check_appendixB_conditions, example1_aligned_scheme, run_trials

MASTER_SEED = 2024


def report(number: int, ok: bool, detail: str):
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}")
    print(ACCEPTANCE_LINES[-1])


# independent oracle: plain-python pmf arithmetic
def _lin(alpha, p, beta, r, q):
    out = [0.0] * q
    for a in range(q):
        for b in range(q):
            out[(alpha * a + beta * b) % q] += p[a] * r[b]
    return out


def _H(p):
    return -sum(x * math.log2(x) for x in p if x > 0)


def test_criterion_1_lemma4_rates(f3):
    t0 = time.monotonic()
    V1 = Pmf.from_literal(f3, [0.6, 0.4, 0.0])
    V2 = Pmf.from_literal(f3, [0.6, 0.0, 0.4])
    n, ks, eps = 18, (4, 5), 0.5
    specs = [BlockSpec(k, V1, eps) for k in ks]
    specs2 = [BlockSpec(k, V2, eps) for k in ks]
    within = total = 0
    worst = 0.0
    for s in range(50):
        C1, C2 = NqlcPair.random(f3, n, specs, specs2, seed=[MASTER_SEED, 1, s]).components()
        for a, b in itertools.product((1, 2), repeat=2):
            predicted = sum(k / n * _H(_lin(a, V1.probs, b, V2.probs, 3)) for k in ks)
            realized = combine_codes(a, C1, b, C2).rate
            d = abs(realized - predicted)
            worst = max(worst, d)
            within += d <= 0.15
            total += 1
    elapsed = time.monotonic() - t0
    frac = within / total
    ok = frac >= 0.95 and elapsed < 120
    report(1, ok, f"{within}/{total} draws within 0.15 bits (fraction {frac:.3f}, worst {worst:.4f}), {elapsed:.1f}s")
    assert ok


def test_criterion_2_nlc_identity(f3):
    t0 = time.monotonic()
    n, ki, ko, ko2 = 6, 1, 2, 3
    target = (ko + ko2 - ki) / n * math.log2(3)
    rank_failures = mismatches = 0
    for s in range(100):
        pair = NestedLinearPair.random(f3, n, ki, ko, ko2, seed=[MASTER_SEED, 2, s])
        C, C2 = pair.outer_codes()
        if pair.stacked_rank() < ko + ko2 - ki:
            rank_failures += 1
            continue
        for a, b in itertools.product((1, 2), repeat=2):
            size = combine_codes(a, C, b, C2).size
            if size != 3 ** (ko + ko2 - ki) or abs(math.log2(size) / n - target) > 1e-12:
                mismatches += 1
    elapsed = time.monotonic() - t0
    ok = mismatches == 0 and rank_failures <= 10 and elapsed < 30
    report(2, ok, f"exact-rate mismatches {mismatches}, full-rank failures {rank_failures}/100, {elapsed:.1f}s")
    assert ok


def test_criterion_3_lemma5_improvement(ex2):
    res = lemma5_rates(3, ex2["N1"], ex2["N2"], ex2["N3"], ex2["V1"], ex2["V2"])
    p = res.point
    improvement = p.R2 + p.R3 - res.baseline
    # independent oracle for the margin
    n23 = _lin(1, ex2["N2"].probs, 1, ex2["N3"].probs, 3)
    n123 = _lin(1, ex2["N1"].probs, 1, n23, 3)
    R1 = math.log2(3) - _H(n123)
    hV1 = _H(ex2["V1"].probs)
    oracle = (_H(_lin(1, ex2["V1"].probs, 1, ex2["V2"].probs, 3)) - _H(_lin(2, ex2["V1"].probs, 1, ex2["V2"].probs, 3))) / hV1 * R1
    cfg = SchemeConfig(3, 18, ex2["V1"], ex2["V2"], ex2["N1"], ex2["N2"], ex2["N3"], gamma=0.95)
    cond = check_appendixB_conditions(cfg)
    gating = [c for c in cond.conditions if c.gating]
    ok = (improvement > 0 and abs(improvement - res.margin) <= 1e-9 and abs(res.margin - oracle) <= 1e-12
          and abs(improvement - 0.0098) < 5e-5 and all(c.margin > 0 for c in gating))
    report(3, ok, f"R2+R3-baseline={improvement:.6f}, margin formula={res.margin:.6f}, "
                  f"identity gap {abs(improvement - res.margin):.1e}, min condition margin at gamma=0.95 "
                  f"{min(c.margin for c in gating):.4f}")
    assert ok


def test_criterion_4_monte_carlo_trend(ex2):
    t0 = time.monotonic()
    rates = {}
    for n in (9, 12, 15, 18):
        cfg = SchemeConfig(3, n, ex2["V1"], ex2["V2"], ex2["N1"], ex2["N2"], ex2["N3"], gamma=0.9, eps=0.5,
                           trials=2000, seed=MASTER_SEED)
        rep = run_trials(cfg)
        rates[n] = {d: rep.rate(d) for d in ("decoder1", "decoder2", "decoder3", "any")}
    elapsed = time.monotonic() - t0
    ns = sorted(rates)
    monotone = {d: all(rates[a][d] >= rates[b][d] for a, b in zip(ns, ns[1:])) for d in ("decoder1", "decoder2", "decoder3")}
    at18 = {d: rates[18][d] for d in ("decoder1", "decoder2", "decoder3")}
    ok = all(monotone.values()) and max(at18.values()) <= 0.3 and elapsed < 600
    table = "; ".join(f"{d}: " + ",".join(f"{rates[n][d]:.3f}" for n in ns) for d in ("decoder1", "decoder2", "decoder3", "any"))
    report(4, ok, f"error rates at n={ns}: {table}; non-increasing {monotone}; {elapsed:.0f}s")
    assert ok


def test_criterion_5_alignment_gain(f3):
    N = Pmf.from_literal(f3, [0.9, 0.1, 0.0])
    aligned = example1_aligned_scheme(3, N, N, 0.8, 18, seed=MASTER_SEED, trials=2000, mode="aligned")
    control = example1_aligned_scheme(3, N, N, 0.8, 18, seed=MASTER_SEED, trials=2000, mode="control")
    ea, ec = aligned.rate("decoder3"), control.rate("decoder3")
    same_rates = aligned.extras["rates"] == control.extras["rates"]
    card = aligned.extras["sum_code_size"] == aligned.extras["single_code_size"]
    ok = ea < ec and same_rates and card
    report(5, ok, f"decoder-3 error aligned {ea:.4f} vs control {ec:.4f}; |C+C|={aligned.extras['sum_code_size']} "
                  f"|C|={aligned.extras['single_code_size']}; rates {aligned.extras['rates']}")
    assert ok


@pytest.fixture(scope="module")
def region_setup(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    cb = converse_bounds("example2", ex2["N1"], ex2["N2"], ex2["N3"])
    l5 = lemma5_rates(3, ex2["N1"], ex2["N2"], ex2["N3"], ex2["V1"], ex2["V2"])
    seed_cand = lemma5_candidate(3, ex2["N1"], ex2["N2"], ex2["N3"], ex2["V1"], ex2["V2"], 0.9)
    return ch, cb, l5, seed_cand


def test_criterion_6_region_consistency(region_setup):
    t0 = time.monotonic()
    ch, cb, l5, seed_cand = region_setup
    spec = SearchSpec(budget=10_000, weights=((1.0, 1.0, 0.0), (0.0, 1.0, 1.0), (1.0, 1.0, 1.0)))
    res = search_region(ch, spec, seed=MASTER_SEED, seeds=[seed_cand])

    # (a) every nested-linear point is dominated by a point of the full search
    a_ok = all(any(fp.point.dominates(p.point) for fp in res.points) for p in res.nlc_points)

    # (b) the scaled quasi-linear scheme triple is a member, witnessed by some parameter choice
    target = l5.point.scaled(0.9)
    natural = find_witness(ch, target, [seed_cand])
    cands = [seed_cand] + [sample_candidate(ch.field, [MASTER_SEED, i], spec) for i in range(spec.budget)]
    wit = find_witness(ch, target, cands)
    b_ok = wit is not None and feasible(ch, wit[1], target).feasible

    # (c) no feasible point beats the R1 + R2 converse
    max12 = max(p.point.R1 + p.point.R2 for p in res.points + res.nlc_points)
    c_ok = max12 <= cb["B_12"] + 1e-6 and all(feasible(ch, p.params, p.point).feasible for p in res.points)

    # (d) improvement over the nested-linear sum-rate bound at 0.9 R1*
    r1 = 0.9 * cb["R1_star_text"]
    res_d = search_region(ch, SearchSpec(budget=2000, weights=((0.0, 1.0, 1.0),), fix_R1=r1), seed=MASTER_SEED,
                          seeds=[seed_cand])
    best_d = res_d.best_value((0.0, 1.0, 1.0))
    d_ok = best_d >= cb["B_23_nlc"] + 0.005
    elapsed = time.monotonic() - t0
    ok = a_ok and b_ok and c_ok and d_ok and elapsed < 900
    report(6, ok, f"(a) dominance {a_ok} over {len(res.nlc_points)} nlc points; (b) witness "
                  f"{'candidate ' + str(wit[0]) if wit else 'none'} (natural scheme parameters "
                  f"{'feasible' if natural else 'infeasible'}); (c) max R1+R2={max12:.5f} <= B_12={cb['B_12']:.5f}; "
                  f"(d) best R2+R3={best_d:.4f} vs {cb['B_23_nlc'] + 0.005:.4f}; {elapsed:.0f}s")
    assert ok


def _grid_pmfs(q: int, steps: int = 10):
    for parts in itertools.product(range(steps + 1), repeat=q - 1):
        if sum(parts) <= steps:
            yield [Fraction(x, steps) for x in parts] + [Fraction(steps - sum(parts), steps)]


def test_criterion_7_typical_set_sizes():
    checked = mismatches = 0
    for q in (2, 3):
        field = PrimeField(q)
        for n in range(1, 9):
            seqs = np.array(list(itertools.product(range(q), repeat=n)))
            counts = np.stack([(seqs == a).sum(axis=1) for a in range(q)], axis=1)
            for probs in _grid_pmfs(q):
                pmf = Pmf(field, np.array([float(x) for x in probs]))
                for eps in (Fraction(1, 10), Fraction(3, 10), Fraction(1, 2)):
                    ok_rows = np.ones(len(seqs), dtype=bool)
                    for a in range(q):
                        c = counts[:, a]
                        if probs[a] == 0:
                            ok_rows &= c == 0
                        else:
                            # exact rational test |c - n p| <= eps n p
                            lhs = np.abs(c * probs[a].denominator - n * probs[a].numerator)
                            rhs = eps * n * probs[a].numerator
                            ok_rows &= np.array([Fraction(int(v)) <= rhs for v in lhs])
                    brute = int(ok_rows.sum())
                    exact = typical_set(pmf, n, float(eps)).size()
                    checked += 1
                    mismatches += brute != exact
    ok = mismatches == 0
    report(7, ok, f"{checked} (pmf, n, eps) cases on F_2 and F_3, n <= 8; mismatches {mismatches}")
    assert ok


def test_criterion_8_sumset_diagnostic(f3):
    n, k = 6, 1
    P_t = type_class(TypeVector(n, [4, 1, 1]))
    equal = True
    for s in range(10):
        C = CosetCode(f3, random_matrix(3, n, f3, seed=[MASTER_SEED, 8, s]), random_vec(n, f3, seed=[MASTER_SEED, 9, s]))
        one = combine_codes(1, C, 1, P_t).size
        two = combine_codes(1, combine_codes(1, C, 1, C), 1, P_t).size
        equal &= one == two
    alphas = []
    for s in range(10):
        Cs = [CosetCode(f3, random_matrix(k, n, f3, seed=[MASTER_SEED, 10, s, i]),
                        random_vec(n, f3, seed=[MASTER_SEED, 11, s, i])) for i in range(3)]
        alphas.append(appendix_alpha(*Cs, P_t, f3)["alpha"])
    finite = all(math.isfinite(a) for a in alphas)
    ok = equal and finite
    report(8, ok, f"identical-code sumsets equal: {equal}; independent-code alpha_(n,eps) values "
                  f"{[round(a, 4) for a in alphas]}")
    assert ok
