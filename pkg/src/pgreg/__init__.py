"""Continuous probabilistic genotyping with version-flag regression testing."""

from .flags import PRESETS, VersionProfile, version_profile
from .genotype_space import GenotypeSet, LocusWeights, enumerate_genotype_sets
from .lr_engine import (HpdConfig, Propositions, ThetaSpec, compute_lr, genotype_probability_bn,
                        hpd_interval, log10_report)
from .mcmc import McmcConfig, deconvolve, exhaustive_posterior
from .profile_model import (AlleleFrequencyTable, EvidenceProfile, KitDefinition, LocusProfile,
                            Peak, ReferenceProfile)

__version__ = "0.1.0"

__all__ = [
    "PRESETS", "VersionProfile", "version_profile", "GenotypeSet", "LocusWeights",
    "enumerate_genotype_sets", "HpdConfig", "Propositions", "ThetaSpec", "compute_lr",
    "genotype_probability_bn", "hpd_interval", "log10_report", "McmcConfig", "deconvolve",
    "exhaustive_posterior", "AlleleFrequencyTable", "EvidenceProfile", "KitDefinition",
    "LocusProfile", "Peak", "ReferenceProfile",
]
