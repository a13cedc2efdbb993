"""
Enumerating genotype sets
=========================

Which assignments of alleles to contributors can explain a locus depends on
the flag set: forward and generalised stutter, drop-in limits and dropout
rules all change the list.
"""

from pgreg import PRESETS
from pgreg.genotype_space import enumerate_genotype_sets
from pgreg.profile_model import LocusProfile, Peak
from pgreg.simulate import allele_size, kit_index, synthetic_kit

kit = synthetic_kit(["TH01", "D13S317", "SE33"])


def locus(name, alleles, height=100.0):
    idx = kit_index(kit, name)
    return LocusProfile(name, tuple(Peak(a, height, allele_size(idx, a)) for a in alleles))


###############################################################################
# Set counts for the same peaks under each preset.
cases = [("TH01", (7.0, 8.0, 9.0, 9.3)), ("D13S317", (8.0, 12.0, 13.0, 14.0)),
         ("SE33", (16.0, 17.0, 20.0, 21.0, 22.0, 25.2))]
for name, alleles in cases:
    lp = locus(name, alleles)
    counts = {p: len(enumerate_genotype_sets(lp, 2, PRESETS[p], kit.locus(name)))
              for p in sorted(PRESETS)}
    print(name, counts)

###############################################################################
# The legacy rule never calls a peak drop-in when it sits in a back-stutter
# position of a carried allele: no set pairs 8 with drop-in 7 under v2.5.
lp = locus("TH01", (7.0, 8.0, 9.0, 9.3))
for p in ("v2.5-like", "v2.9-like"):
    sets = enumerate_genotype_sets(lp, 2, PRESETS[p], kit.locus("TH01"))
    with_8 = [str(gs) for gs in sets if 7.0 in gs.drop_in and 8.0 in gs.carried]
    print(f"{p}: {len(with_8)} sets carry 8 and call 7 drop-in, e.g. {with_8[:2]}")

###############################################################################
# The four-peak D13S317 locus splits into six two-person pairings without
# drop-in or dropout.
lp = locus("D13S317", (8.0, 12.0, 13.0, 14.0))
plain = [gs for gs in enumerate_genotype_sets(lp, 2, PRESETS["v2.5-like"], kit.locus("D13S317"))
         if not gs.drop_in and len({a for g in gs.genotypes for a in g if a > 0}) == 4]
for gs in plain:
    print("   ", gs)
