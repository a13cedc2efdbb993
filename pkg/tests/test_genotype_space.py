import pytest

from pgreg.flags import PRESETS
from pgreg.genotype_space import (GenotypeSet, LocusWeights, UnexplainableLocusError,
                                  enumerate_genotype_sets, genotype_matches, genotype_pdf_tsv,
                                  normalize_weights, sets_supporting)
from pgreg.profile_model import DROPOUT, LocusProfile, Peak
from pgreg.simulate import allele_size, kit_index, synthetic_kit

from oracles import oracle_sets

Q = DROPOUT
KIT = synthetic_kit()


def locus(name, alleles):
    idx = kit_index(KIT, name)
    return LocusProfile(name, tuple(Peak(a, 100.0, allele_size(idx, a)) for a in alleles))


FLAG_VARIANTS = [
    PRESETS["v2.3-like"], PRESETS["v2.5-like"], PRESETS["v2.9-like"],
    PRESETS["v2.9-like"].with_overrides(allow_double_dropout=True, max_dropins=1),
]
PEAK_SETS = [
    ("SE33", (25.2,)),
    ("SE33", (17.0, 21.0)),
    ("SE33", (16.0, 17.0, 25.2)),
    ("SE33", (17.0, 19.0, 21.0, 22.0)),
    ("SE33", (16.0, 17.0, 20.0, 21.0, 22.0)),
    ("TH01", (7.0, 8.0, 9.0, 9.3)),
]


@pytest.mark.parametrize("flags", FLAG_VARIANTS, ids=lambda f: f.name + str(len(f.overrides)))
def test_enumeration_matches_brute_force(flags):
    for name, alleles in PEAK_SETS:
        lp = locus(name, alleles)
        for noc in (1, 2, 3):
            if noc == 3 and len(alleles) > 4:
                continue
            try:
                got = enumerate_genotype_sets(lp, noc, flags, KIT.locus(name))
            except UnexplainableLocusError:
                got = []
            assert len(got) == len(set(got))
            assert set(got) == oracle_sets(lp, noc, flags, KIT.locus(name)), (name, alleles, noc)
            assert got == sorted(got)


def test_unexplainable_locus():
    lp = locus("SE33", (16.0, 18.0, 20.0, 22.0, 24.0))
    with pytest.raises(UnexplainableLocusError) as err:
        enumerate_genotype_sets(lp, 1, PRESETS["v2.9-like"])
    assert err.value.locus == "SE33"


def test_empty_locus_is_all_dropout():
    sets = enumerate_genotype_sets(LocusProfile("TH01"), 2, PRESETS["v2.9-like"])
    assert sets == [GenotypeSet(((Q, Q), (Q, Q)))]


def test_single_peak_single_contributor():
    sets = enumerate_genotype_sets(locus("TH01", (8.0,)), 1, PRESETS["v2.9-like"])
    assert GenotypeSet(((8.0, 8.0),)) in sets
    assert GenotypeSet(((Q, 8.0),)) in sets


def _gs(*genotypes, drop=()):
    return GenotypeSet(tuple(tuple(sorted(g)) for g in genotypes), tuple(drop))


def test_table_s10_rows_present():
    lp = locus("D13S317", (8.0, 12.0, 13.0, 14.0))
    for name in ("v2.5-like", "v2.9-like"):
        sets = set(enumerate_genotype_sets(lp, 2, PRESETS[name], KIT.locus("D13S317")))
        rows = [_gs((8, 13), (12, 14)), _gs((8, 12), (13, 14)), _gs((12, 13), (8, 14)),
                _gs((8, 14), (12, 13)), _gs((12, 14), (8, 13)), _gs((13, 14), (8, 12))]
        assert all(r in sets for r in rows)
    sets = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.9-like"], KIT.locus("D13S317")))
    for r in [_gs((8, 13), (8, 12), drop=(14,)), _gs((8, 8), (12, 13), drop=(14,))]:
        assert r in sets


def test_table_s13_rows_present():
    lp = locus("FGA", (19.0, 21.0, 25.0, 26.0))
    sets = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.5-like"], KIT.locus("FGA")))
    for r in [_gs((25, 26), (19, 21)), _gs((21, 26), (21, 25), drop=(19,)),
              _gs((Q, 25), (21, 26), drop=(19,)), _gs((25, 26), (21, 21), drop=(19,))]:
        assert r in sets
    sets = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.9-like"], KIT.locus("FGA")))
    for r in [_gs((Q, 21), (19, 26), drop=(25,)), _gs((21, 25), (Q, 19), drop=(26,))]:
        assert r in sets


def test_table_s5_rows_present():
    lp = locus("SE33", (16.0, 17.0, 20.0, 21.0, 22.0, 25.2))
    sets = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.5-like"], KIT.locus("SE33")))
    for r in [_gs((17, 21), (22, 25.2)), _gs((17, 21), (16, 25.2), drop=(22,)),
              _gs((17, 21), (16, 22), drop=(25.2,)), _gs((17, 21), (16, 17), drop=(22, 25.2))]:
        assert r in sets
    sets = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.9-like"], KIT.locus("SE33")))
    assert _gs((17, 21), (21, 22), drop=(25.2,)) in sets


def test_table_s7_rows_and_legacy_exclusion():
    lp = locus("TH01", (7.0, 8.0, 9.0, 9.3))
    kl = KIT.locus("TH01")
    new = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.9-like"], kl))
    for r in [_gs((8, 9.3), (7, 9)), _gs((8, 9.3), (9, 9.3), drop=(7,)),
              _gs((8, 9.3), (7, 9.3), drop=(9,)), _gs((8, 9.3), (7, 8), drop=(9,))]:
        assert r in new
    old = set(enumerate_genotype_sets(lp, 2, PRESETS["v2.5-like"], kl))
    # 7 sits in 8's back-stutter position: legacy never labels it drop-in
    assert _gs((8, 9.3), (9, 9.3), drop=(7,)) not in old
    assert _gs((8, 9.3), (7, 9)) in old


# ---------------------------------------------------------------------------
# weights


def test_locus_weights_invariants():
    a, b = _gs((8, 9)), _gs((8, 8))
    with pytest.raises(ValueError):
        LocusWeights(((a, 0.5), (b, 0.4)))
    with pytest.raises(ValueError):
        LocusWeights(((a, 0.5), (a, 0.5)))
    lw = normalize_weights([(a, 3), (b, 1), (_gs((9, 9)), 0)], "L")
    assert [w for _, w in lw] == [0.75, 0.25]
    assert lw.weight_of(_gs((9, 9))) == 0.0


def test_normalization_is_scale_free():
    a, b = _gs((8, 9)), _gs((8, 8))
    assert normalize_weights([(a, 3), (b, 1)]) == normalize_weights([(a, 300), (b, 100)])


def test_dropout_matching():
    observed = (8.0, 9.3)
    assert genotype_matches((Q, 8.0), (8.0, 10.0), observed)
    assert not genotype_matches((Q, 8.0), (8.0, 9.3), observed)
    assert genotype_matches((Q, 8.0), (8.0, 9.3))
    assert not genotype_matches((Q, 8.0), (8.0, 10.0), observed, sentinel_matches_any=False)
    assert genotype_matches((9.3, 8.0), (8.0, 9.3))


def test_sets_supporting_positions():
    a = _gs((8, 9.3), (7, 9))
    b = _gs((7, 9), (8, 9.3))
    lw = normalize_weights([(a, 1), (b, 1)], "TH01", (7.0, 8.0, 9.0, 9.3))
    assert len(sets_supporting(lw, (7.0, 9.0))) == 2
    assert sets_supporting(lw, (7.0, 9.0), position_policy=[1]) == [(a, 0.5)]


def test_genotype_pdf_layout():
    lw = normalize_weights([(_gs((17, 21), (16, 25.2), drop=(22,)), 1)], "SE33")
    text = genotype_pdf_tsv(lw, 2)
    assert text == "GenotypeC1\tGenotypeC2\tDropIn\tWeight\n[17,21]\t[16,25.2]\t22\t1.000E+00\n"
