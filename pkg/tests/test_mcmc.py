import math
import warnings

import numpy as np
import pytest
from scipy import stats

from pgreg.flags import PRESETS
from pgreg.genotype_space import GenotypeSet, enumerate_genotype_sets
from pgreg.mcmc import (GridSpec, McmcConfig, chain_seed, deconvolve, exhaustive_posterior,
                        metropolis_accept, propose_genotype, reflect, start_templates,
                        symmetry_guard)
from pgreg.profile_model import EvidenceProfile, ReferenceProfile
from pgreg.simulate import simulate_profile, synthetic_kit

from conftest import locus_from

ORACLE_FLAGS = PRESETS["v2.9-like"].with_overrides(varying_variances=False,
                                                   locus_amp_variance=False)


def test_metropolis_branches():
    rng = np.random.default_rng(0)
    assert all(metropolis_accept(0.0, 5.0, rng) for _ in range(1000))
    assert all(metropolis_accept(-3.0, -3.0, rng) for _ in range(1000))
    assert metropolis_accept(-1.0, -math.inf, rng) is False
    with pytest.raises(FloatingPointError):
        metropolis_accept(0.0, float("nan"), rng)
    with pytest.raises(FloatingPointError):
        metropolis_accept(-math.inf, 0.0, rng)


def test_metropolis_minus_one_rate():
    rng = np.random.default_rng(2024)
    acc = metropolis_accept(np.zeros(100_000), np.full(100_000, -1.0), rng)
    assert acc.mean() == pytest.approx(math.exp(-1), abs=0.01)


def test_symmetry_guard_examples():
    assert symmetry_guard((900, 100), (850, 120))
    assert not symmetry_guard((510, 490), (480, 500))
    assert symmetry_guard((510, 490), (480, 500), enabled=False)
    assert not symmetry_guard((900, 500, 100), (900, 80, 100))


def test_reflection_keeps_positive():
    x = reflect(np.array([-3.0, 0.0, 2.0]))
    assert list(x) == [3.0, 0.0, 2.0]


def test_propose_genotype_uniform_over_s10_sets():
    rng = np.random.default_rng(11)
    assert propose_genotype(1, rng) == 0
    draws = propose_genotype(np.full(60_000, 6), rng)
    obs = np.bincount(draws, minlength=6)
    chi2 = ((obs - 10_000) ** 2 / 10_000).sum()
    assert chi2 < stats.chi2.ppf(0.99, 5)
    a = propose_genotype(np.full(50, 6), np.random.default_rng(3))
    b = propose_genotype(np.full(50, 6), np.random.default_rng(3))
    assert np.array_equal(a, b)


def test_flat_likelihood_visits_uniformly():
    # genotype moves alone with a constant target: visits should be uniform
    rng = np.random.default_rng(99)
    n_sets, cur = 7, 0
    visits = np.zeros(n_sets, dtype=int)
    for _ in range(100_000):
        cand = propose_genotype(n_sets, rng)
        if metropolis_accept(-2.0, -2.0, rng):
            cur = cand
        visits[cur] += 1
    chi2 = ((visits - visits.mean()) ** 2 / visits.mean()).sum()
    assert chi2 < stats.chi2.ppf(0.99, n_sets - 1)


def test_chain_seeds_depend_on_case_and_chain():
    a = chain_seed(1, 0, "C1").generate_state(2)
    assert np.array_equal(a, chain_seed(1, 0, "C1").generate_state(2))
    assert not np.array_equal(a, chain_seed(1, 1, "C1").generate_state(2))
    assert not np.array_equal(a, chain_seed(1, 0, "C2").generate_state(2))


def test_start_templates(th01_evidence):
    static = start_templates(th01_evidence, 2, PRESETS["v2.5-like"])
    assert list(static) == [1000.0, 1000.0]
    dyn = start_templates(th01_evidence, 2, PRESETS["v2.9-like"])
    assert dyn[0] > dyn[1] > 0
    assert dyn.sum() == pytest.approx((149 + 1229 + 147 + 1681) / 2, rel=1e-3)


# ---------------------------------------------------------------------------
# full runs


@pytest.fixture(scope="module")
def single_source():
    kit = synthetic_kit(["D3S1358", "vWA", "TH01"])
    ref = ReferenceProfile("K", {"D3S1358": (14.0, 17.0), "vWA": (16.0, 16.0),
                                 "TH01": (7.0, 9.3)})
    ev = simulate_profile([ref], [1500.0], kit, PRESETS["v2.9-like"], seed=4)
    return ev, ref, kit


def test_single_source_recovers_truth(single_source):
    ev, ref, kit = single_source
    cfg = McmcConfig(burn_in=1000, post_burn=4000, chains=2, seed=1)
    res = deconvolve(ev, 1, cfg, kit, case_id="ss")
    for locus, g in ref.genotypes.items():
        truth = [w for gs, w in res.weights[locus].entries if gs.genotypes == (g,) and not gs.drop_in]
        assert truth and truth[0] >= 0.99


def test_deconvolve_is_deterministic_across_workers(single_source):
    ev, _, kit = single_source
    cfg = McmcConfig(burn_in=300, post_burn=1000, chains=3, seed=8)
    a = deconvolve(ev, 2, cfg, kit, case_id="x")
    b = deconvolve(ev, 2, cfg, kit, case_id="x", workers=3)
    assert a.report_json() == b.report_json()
    for locus in a.loci:
        assert a.weights[locus].entries == b.weights[locus].entries
    c = deconvolve(ev, 2, cfg, kit, case_id="y")
    assert c.report_json() != a.report_json()


def test_debug_cache_check_runs(th01_kit, th01_evidence):
    cfg = McmcConfig(burn_in=500, post_burn=2500, chains=1, debug=True)
    deconvolve(th01_evidence, 2, cfg, th01_kit)


def test_report_fields(th01_kit, th01_evidence):
    res = deconvolve(th01_evidence, 2, McmcConfig(burn_in=200, post_burn=800, chains=2),
                     th01_kit)
    rep = res.report()
    assert set(rep) >= {"templates", "mixture_proportions", "acceptance",
                        "per_chain_weight_variance"}
    assert rep["acceptance"]["genotype"]
    assert sum(res.mixture_proportions) == pytest.approx(1.0)


S10_PAIRS = [((8.0, 13.0), (12.0, 14.0)), ((8.0, 12.0), (13.0, 14.0)),
             ((12.0, 13.0), (8.0, 14.0)), ((8.0, 14.0), (12.0, 13.0)),
             ((12.0, 14.0), (8.0, 13.0)), ((13.0, 14.0), (8.0, 12.0))]


@pytest.fixture(scope="module")
def s10_case():
    kit = synthetic_kit(["D13S317"])
    lp = locus_from("D13S317", ((8.0, 849, 230.0), (12.0, 259, 246.0), (13.0, 410, 250.0),
                                (14.0, 120, 254.0)))
    return EvidenceProfile("S10", {"D13S317": lp}, kit.name, 50.0), kit


def test_table_s10_style_locus_heaviest_pairing(s10_case):
    ev, kit = s10_case
    cfg = McmcConfig(burn_in=2000, post_burn=20_000, chains=2, seed=3)
    res = deconvolve(ev, 2, cfg, kit)
    w = {gs: x for gs, x in res.weights["D13S317"].entries if not gs.drop_in}
    top = max(S10_PAIRS, key=lambda p: w.get(GenotypeSet(p), 0.0))
    assert top == ((8.0, 13.0), (12.0, 14.0))
    assert w[GenotypeSet(top)] > 0.2


def test_table_s10_style_locus_all_pairings_positive(s10_case):
    # poorly balanced pairings sit far out in the tails, so positivity is
    # checked on the exact integral rather than on visit counts
    ev, kit = s10_case
    flags = ORACLE_FLAGS.with_overrides(symmetry_restriction=False, max_dropins=0)
    w = dict(exhaustive_posterior(ev, 2, flags, kit, GridSpec(n_template=80)).weights["D13S317"].entries)
    for p in S10_PAIRS:
        assert w[GenotypeSet(p)] > 0
    top = max(S10_PAIRS, key=lambda p: w[GenotypeSet(p)])
    assert set(top) == {(8.0, 13.0), (12.0, 14.0)}


# ---------------------------------------------------------------------------
# grid oracle


def test_oracle_single_set_weight_one():
    kit = synthetic_kit(["vWA"])
    lp = locus_from("vWA", ((14.0, 1200, 170.0), (17.0, 1100, 182.0)))
    ev = EvidenceProfile("o", {"vWA": lp}, kit.name, 50.0)
    flags = ORACLE_FLAGS.with_overrides(max_dropins=0, allow_dropout=False)
    sets = enumerate_genotype_sets(lp, 1, flags, kit.locus("vWA"))
    assert len(sets) == 1
    out = exhaustive_posterior(ev, 1, flags, kit)
    assert out.weights["vWA"].entries[0][1] == pytest.approx(1.0)


def test_oracle_symmetric_swap_equal():
    kit = synthetic_kit(["vWA"])
    lp = locus_from("vWA", ((13.0, 600, 166.0), (15.0, 600, 174.0), (17.0, 600, 182.0),
                            (19.0, 600, 190.0)))
    ev = EvidenceProfile("o", {"vWA": lp}, kit.name, 50.0)
    flags = ORACLE_FLAGS.with_overrides(symmetry_restriction=False, max_dropins=0)
    w = dict(exhaustive_posterior(ev, 2, flags, kit, GridSpec(n_template=80)).weights["vWA"].entries)
    a = GenotypeSet(((13.0, 15.0), (17.0, 19.0)))
    b = GenotypeSet(((17.0, 19.0), (13.0, 15.0)))
    assert w[a] == pytest.approx(w[b], abs=1e-9)
    assert w[a] > 0.05


def test_oracle_warns_on_coarse_grid(th01_kit, th01_evidence):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        out = exhaustive_posterior(th01_evidence, 1, ORACLE_FLAGS, th01_kit,
                                   GridSpec(n_template=20, n_coarse=30))
    assert any("coarse" in n for n in out.warnings)
    assert caught


def test_oracle_rejects_out_of_scope(th01_kit, th01_evidence):
    with pytest.raises(ValueError):
        exhaustive_posterior(th01_evidence, 3, ORACLE_FLAGS, th01_kit)
    with pytest.raises(ValueError):
        exhaustive_posterior(th01_evidence, 2, PRESETS["v2.9-like"], th01_kit)


def test_two_peak_single_contributor_agrees_with_oracle():
    kit = synthetic_kit(["D8S1179"])
    lp = locus_from("D8S1179", ((11.0, 300, 207.0), (13.0, 140, 215.0)))
    ev = EvidenceProfile("o", {"D8S1179": lp}, kit.name, 50.0)
    oracle = dict(exhaustive_posterior(ev, 1, ORACLE_FLAGS, kit).weights["D8S1179"].entries)
    cfg = McmcConfig(burn_in=2000, post_burn=20_000, chains=2, seed=5, step_degradation=0,
                     flags=ORACLE_FLAGS)
    got = dict(deconvolve(ev, 1, cfg, kit).weights["D8S1179"].entries)
    keys = set(oracle) | set(got)
    assert max(abs(oracle.get(k, 0) - got.get(k, 0)) for k in keys) <= 0.05
