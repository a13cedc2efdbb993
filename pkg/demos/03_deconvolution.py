"""
MCMC deconvolution against a grid oracle
========================================

The sampler's genotype weights for the TH01 locus, compared with a direct
numerical integration over the template grid. The oracle needs fixed
variance constants and no per-locus amplification term.
"""

import time

from pgreg import PRESETS, McmcConfig, deconvolve, exhaustive_posterior
from pgreg.genotype_space import genotype_pdf_tsv
from pgreg.profile_model import EvidenceProfile, LocusProfile, Peak
from pgreg.simulate import synthetic_kit

kit = synthetic_kit(["TH01"])
th01 = LocusProfile("TH01", (Peak(7.0, 149, 191.23), Peak(8.0, 1229, 195.31),
                             Peak(9.0, 147, 199.3), Peak(9.3, 1681, 202.39)))
evidence = EvidenceProfile("S2", {"TH01": th01}, kit.name, analytical_threshold=50.0)
flags = PRESETS["v2.9-like"].with_overrides(varying_variances=False, locus_amp_variance=False)

###############################################################################
# Grid oracle first: deterministic, a few seconds.
t0 = time.perf_counter()
oracle = exhaustive_posterior(evidence, 2, flags, kit)
print(f"oracle in {time.perf_counter() - t0:.1f}s")

###############################################################################
# Four seeded chains. Degradation is held at zero to match the oracle.
config = McmcConfig(burn_in=3000, post_burn=15_000, chains=4, seed=7, step_degradation=0,
                    flags=flags)
t0 = time.perf_counter()
result = deconvolve(evidence, 2, config, kit, case_id="S2")
print(f"MCMC in {time.perf_counter() - t0:.1f}s; templates {result.report()['templates']}")

###############################################################################
# Side by side, heaviest oracle sets first.
mcmc = dict(result.weights["TH01"].entries)
for gs, w in oracle.weights["TH01"].entries[:6]:
    print(f"{str(gs):<32} oracle {w:.4f}   mcmc {mcmc.get(gs, 0.0):.4f}")

###############################################################################
# The genotype pdf file as written by the ``deconvolve`` subcommand.
print(genotype_pdf_tsv(result.weights["TH01"], 2))
