"""
Likelihood ratios, subpopulation correction and intervals
=========================================================

From genotype weights to a stratified sub-source LR, with Balding-Nichols
theta, and a resampled interval on log10 LR.
"""

from pgreg import (HpdConfig, Propositions, ThetaSpec, compute_lr, genotype_probability_bn,
                   hpd_interval)
from pgreg.genotype_space import GenotypeSet, normalize_weights
from pgreg.profile_model import ReferenceProfile
from pgreg.simulate import synthetic_frequencies, synthetic_kit

###############################################################################
# Balding-Nichols: a homozygote drawn after the POI's two alleles.
f = {"a": 0.1, "b": 0.2}
for theta in (0.0, 0.01, 0.03):
    print(f"theta={theta:.2f}  Pr(aa | a,b) = {genotype_probability_bn(('a', 'a'), ['a', 'b'], f, theta):.6f}")

###############################################################################
# Hand-made weights for a two-person locus and a single-source locus.
kit = synthetic_kit(["vWA", "TH01"])
freqs = synthetic_frequencies(kit, seed=3)
weights = {
    "vWA": normalize_weights([(GenotypeSet(((14.0, 17.0), (16.0, 18.0))), 0.7),
                              (GenotypeSet(((14.0, 17.0), (16.0, 16.0))), 0.3)],
                             "vWA", (14.0, 16.0, 17.0, 18.0)),
    "TH01": normalize_weights([(GenotypeSet(((7.0, 9.3), (8.0, 8.0))), 1.0)],
                              "TH01", (7.0, 8.0, 9.3)),
}
poi = ReferenceProfile("K1", {"vWA": (14.0, 17.0), "TH01": (7.0, 9.3)})
props = Propositions(poi, noc=2)

for theta in (0.0, 0.01):
    lr = compute_lr(weights, ["vWA", "TH01"], props, freqs, theta)
    print(f"theta={theta}: stratified log10 LR {lr.log10:.3f}")
    print(lr.reports["PopA"].to_csv())

###############################################################################
# Interval from Dirichlet-resampled allele frequencies.
lower, point, upper = hpd_interval(weights, ["vWA", "TH01"], props, freqs, ThetaSpec(0.01),
                                   HpdConfig(n_samples=200, seed=1, cap="min_resampled_count"))
print(f"log10 LR {point:.3f}  interval [{lower:.3f}, {upper:.3f}]")
