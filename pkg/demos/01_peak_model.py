"""
Peak heights, stutter and the locus likelihood
==============================================

A walk through the TH01 locus of a two-person mixture: the back-stutter
regression, the expected heights each contributor produces, and how the
two drop-in variants score the small 7 peak.
"""

from pgreg import PRESETS
from pgreg.genotype_space import GenotypeSet
from pgreg.peak_model import (MassParameters, drop_in_log_probability, expected_back_stutter_ratio,
                              expected_heights, locus_log_likelihood)
from pgreg.profile_model import EvidenceProfile, LocusProfile, Peak, observed_stutter_ratio
from pgreg.simulate import synthetic_kit

kit = synthetic_kit(["TH01"])
th01 = LocusProfile("TH01", (Peak(7.0, 149, 191.23), Peak(8.0, 1229, 195.31),
                             Peak(9.0, 147, 199.3), Peak(9.3, 1681, 202.39)))
evidence = EvidenceProfile("S2", {"TH01": th01}, kit.name, analytical_threshold=50.0)

###############################################################################
# The 7 peak sits one repeat below the 8. The kit regression expects a small
# stutter product there; the observed ratio is six times larger.
expected = expected_back_stutter_ratio(kit, "TH01", 8.0)
observed = observed_stutter_ratio(th01.peak(8.0), th01.peak(7.0))
print(f"expected SR for 8: {expected:.6f}   observed 149/1229: {observed:.4f}")

###############################################################################
# Expected heights for one candidate genotype set. Each position lists its
# allelic and stutter components; a peak's mean is their sum.
mass = MassParameters((1450.0, 150.0), (0.0, 0.0))
gs = GenotypeSet(((8.0, 9.3), (9.0, 9.3)), drop_in=(7.0,))
print(expected_heights(gs, mass, th01, kit.locus("TH01"), PRESETS["v2.9-like"]).to_tsv())

###############################################################################
# Legacy and refined drop-in densities agree at the threshold and part ways
# for taller peaks: the refined form adds a penalty for height above AT.
for h in (50.0, 149.0, 400.0):
    peak = Peak(7.0, h, 191.23)
    legacy = drop_in_log_probability(peak, mass, 50.0, PRESETS["v2.5-like"])
    refined = drop_in_log_probability(peak, mass, 50.0, PRESETS["v2.9-like"])
    print(f"h={h:5.0f}  legacy {legacy:8.3f}  refined {refined:8.3f}")

###############################################################################
# Whole-locus log likelihoods for the two readings of the minor contributor.
for label, cand in [("minor 7,9", GenotypeSet(((8.0, 9.3), (7.0, 9.0)))),
                    ("minor 9,9.3 + drop-in 7", gs)]:
    for name in ("v2.5-like", "v2.9-like"):
        ll = locus_log_likelihood(th01, cand, mass, kit.locus("TH01"),
                                  evidence.at_for("TH01"), PRESETS[name])
        print(f"{label:<26} {name}: {ll:9.3f}")
