from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qlcic.gf import PrimeField, make_rng
from qlcic.probspace import Pmf, convolve, entropy, lin_comb_pmf
from qlcic.region import (
    Candidate, FoundPoint, RatePoint, RegionParams, SearchSpec, converse_bounds, converse_bounds_for,
    convex_hull_points, example2_channel, feasible, find_witness, info_terms, lemma5_candidate, lemma5_rates,
    nlc_blocks, pareto, r_alpha_beta, sample_candidate, search_region, solve_lp,
)

F3 = PrimeField(3)
LOG3 = math.log2(3)
UNI, ZERO = Pmf.uniform(F3), Pmf.point_mass(F3)
DIAG = np.eye(3) / 3


def params_with(vpairs, kappa, coeffs=(1, 1, 2, 1)):
    return RegionParams(3, DIAG, DIAG, UNI, coeffs, {}, kappa, vpairs)


def random_pmf(rng, q=3):
    return Pmf(PrimeField(q), rng.dirichlet(np.ones(q)))


def test_r_alpha_beta_known_values():
    p = params_with(nlc_blocks(F3), (0.5, 0.25, 0.25))
    assert r_alpha_beta(p, 1, 0) == pytest.approx(0.75 * LOG3)
    assert r_alpha_beta(p, 0, 1) == pytest.approx(0.75 * LOG3)
    # the shared block collapses under the sum, the private blocks do not
    assert r_alpha_beta(p, 1, 1) == pytest.approx(LOG3)
    assert r_alpha_beta(params_with((), ()), 1, 1) == 0.0


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), alpha=st.integers(1, 2), beta=st.integers(1, 2), c=st.integers(1, 2))
def test_r_alpha_beta_properties(seed, alpha, beta, c):
    rng = make_rng(seed)
    pairs = tuple((random_pmf(rng), random_pmf(rng)) for _ in range(3))
    p = params_with(pairs, tuple(rng.random(3)))
    r = r_alpha_beta(p, alpha, beta)
    assert r == pytest.approx(r_alpha_beta(p, c * alpha, c * beta), abs=1e-12)
    assert r <= r_alpha_beta(p, 1, 0) + r_alpha_beta(p, 0, 1) + 1e-12
    assert r >= max(r_alpha_beta(p, 1, 0), r_alpha_beta(p, 0, 1)) - 1e-12


def test_lemma5_identity_random_draws():
    rng = make_rng(2024)
    for _ in range(100):
        N1, N2, N3, V1, V2 = (random_pmf(rng) for _ in range(5))
        res = lemma5_rates(3, N1, N2, N3, V1, V2)
        R1, R2, R3 = res.detail["raw"]
        n123 = convolve(N1, convolve(N2, N3))
        assert R1 == pytest.approx(LOG3 - entropy(n123))
        assert R2 + R3 == pytest.approx(res.baseline + res.margin, abs=1e-12)
        assert res.baseline == pytest.approx(entropy(n123) - entropy(N3))
        hs, hs2 = entropy(lin_comb_pmf(1, V1, 1, V2)), entropy(lin_comb_pmf(2, V1, 1, V2))
        assert res.margin == pytest.approx((hs - hs2) / entropy(V1) * R1, abs=1e-12)


def test_lemma5_reference_point(ex2):
    res = lemma5_rates(3, ex2["N1"], ex2["N2"], ex2["N3"], ex2["V1"], ex2["V2"])
    assert res.feasible_parameterization
    assert (res.point.R1, res.point.R2, res.point.R3) == pytest.approx((0.5613, 0.2936, 0.6591), abs=1e-4)
    assert res.margin == pytest.approx(0.0098, abs=1e-4)
    with pytest.raises(ValueError):
        lemma5_rates(3, *(ex2[k] for k in ("N1", "N2", "N3")), ZERO, ex2["V2"])


def test_converse_values(ex2):
    b = converse_bounds("example2", ex2["N1"], ex2["N2"], ex2["N3"])
    assert b["B_12"] == pytest.approx(1.4432, abs=1e-4)
    assert b["B_12_alt"] == pytest.approx(1.5042, abs=1e-4)
    assert b["B_23_nlc"] == pytest.approx(0.9428, abs=1e-4)
    assert b["R1_star_text"] <= b["R1_star_statement"]
    with pytest.raises(ValueError):
        converse_bounds("example1", ex2["N1"], ex2["N2"], ex2["N3"])
    wrong = example2_channel(3, ZERO, ZERO, ZERO)
    object.__setattr__(wrong, "coeffs", np.eye(3, dtype=np.int64))
    with pytest.raises(ValueError):
        converse_bounds_for(wrong, ex2["N1"], ex2["N2"], ex2["N3"])


def test_outer_factor_is_one_when_decoder2_sees_u2_alone(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    t = info_terms(ch, DIAG, DIAG, UNI, (0, 1, 2, 1))
    assert t.outer_factor == pytest.approx(1.0)
    # with uniform U1 the sum carries nothing about U2
    assert info_terms(ch, DIAG, DIAG, UNI, (1, 1, 2, 1)).outer_factor == pytest.approx(0.0, abs=1e-12)


def test_alphabet_mismatch():
    ch5 = example2_channel(5, *(Pmf.point_mass(PrimeField(5)),) * 3)
    with pytest.raises(ValueError, match="alphabet"):
        feasible(ch5, params_with(nlc_blocks(F3), (0.1, 0.1, 0.1)), RatePoint(0, 0, 0))


def test_noiseless_reaches_two_log_q():
    ch = example2_channel(3, ZERO, ZERO, ZERO)
    j1 = np.zeros((3, 3))
    j1[:, 0] = 1 / 3  # X1 silent, U1 independent of it
    cand = Candidate(j1, DIAG, UNI, (0, 1, 0, 1), nlc_blocks(F3))
    pt, params = solve_lp(ch, cand, (0, 1, 1))
    assert pt.R2 + pt.R3 == pytest.approx(2 * LOG3, abs=1e-8)
    assert feasible(ch, params, pt).feasible


def test_lp_solutions_are_feasible_and_tight(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    hits = 0
    for i in range(30):
        cand = sample_candidate(F3, [7, i], SearchSpec())
        sol = solve_lp(ch, cand, (1, 1, 1))
        if sol is None:
            continue
        pt, params = sol
        v = feasible(ch, params, pt)
        assert v.feasible, v.violated
        # rates are pinned to the splits, so raising one breaks an equality
        assert not feasible(ch, params, RatePoint(pt.R1 + 1e-3, pt.R2, pt.R3)).feasible
        hits += 1
    assert hits > 5


def test_rate_point_rules():
    with pytest.raises(ValueError):
        RatePoint(-0.1, 0, 0)
    a, b = RatePoint(1, 1, 1), RatePoint(1, 0.5, 1)
    assert a.dominates(b) and not b.dominates(a)
    assert a.scaled(0.5) == RatePoint(0.5, 0.5, 0.5)


def test_region_params_round_trip():
    p = params_with(nlc_blocks(F3), (0.5, 0.25, 0.25))
    again = RegionParams.from_dict(p.to_dict())
    assert again.to_dict() == p.to_dict()
    with pytest.raises(ValueError):
        params_with(nlc_blocks(F3), (0.5, 0.25))
    with pytest.raises(ValueError):
        params_with(nlc_blocks(F3), (0.1,) * 3, coeffs=(0, 0, 1, 1))


def _fp(*r, i=0):
    return FoundPoint(RatePoint(*r), params_with((), ()), "nqlc", i)


def test_pareto_and_hull():
    pts = [_fp(1, 0, 0, i=0), _fp(0.5, 0.5, 0, i=1), _fp(0.4, 0.4, 0, i=2), _fp(0, 0, 1, i=3)]
    kept = pareto(pts)
    assert {p.candidate for p in kept} == {0, 1, 3}
    assert pareto(list(reversed(pts)))[0].candidate == kept[0].candidate
    hull = convex_hull_points([p.point for p in pts])
    assert RatePoint(0.4, 0.4, 0) not in hull
    assert {(h.R1, h.R2, h.R3) for h in hull} >= {(1, 0, 0), (0.5, 0.5, 0), (0, 0, 1)}


def test_search_is_deterministic_and_monotone(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    spec = SearchSpec(budget=12, weights=((1, 1, 1),))
    a, b = search_region(ch, spec, seed=3), search_region(ch, spec, seed=3)
    assert a.to_json() == b.to_json()
    bigger = search_region(ch, SearchSpec(budget=24, weights=((1, 1, 1),)), seed=3)
    assert bigger.best_value() >= a.best_value() - 1e-12
    # nested-linear points are a subfamily of the full search
    assert a.best_value(family="nlc") <= a.best_value() + 1e-12
    assert a.to_csv().splitlines()[0] == "series,R1,R2,R3,witness_id"
    with pytest.raises(ValueError):
        search_region(example2_channel(7, *(Pmf.point_mass(PrimeField(7)),) * 3), spec, seed=0)


def test_search_respects_sum_rate_bound(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    B12 = converse_bounds("example2", ex2["N1"], ex2["N2"], ex2["N3"])["B_12"]
    res = search_region(ch, SearchSpec(budget=40, weights=((1, 1, 0),)), seed=11)
    assert res.best_value((1, 1, 0)) <= B12 + 1e-6


def test_witness_for_scaled_lemma5_point(ex2):
    ch = example2_channel(3, ex2["N1"], ex2["N2"], ex2["N3"])
    args = (3, ex2["N1"], ex2["N2"], ex2["N3"], ex2["V1"], ex2["V2"])
    cand = lemma5_candidate(*args)
    assert cand.coeffs == (1, 1, 2, 1)
    point = lemma5_rates(*args).point.scaled(0.0)
    hit = find_witness(ch, point, [cand] + [sample_candidate(F3, [1, i], SearchSpec()) for i in range(20)])
    assert hit is not None and hit[2].feasible
    assert find_witness(ch, RatePoint(5, 5, 5), [cand]) is None


def test_search_spec_rejects_unknown_keys():
    with pytest.raises(ValueError, match="unknown"):
        SearchSpec.from_dict({"budget": 3, "bogus": 1})
    assert SearchSpec.from_dict(SearchSpec(budget=3).to_dict()) == SearchSpec(budget=3)
