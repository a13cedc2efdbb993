"""Synthetic kits, frequency tables and electropherograms for testing.

Nothing here is calibration data. The only real number is the TH01
back-stutter regression (0.007541 + 0.001577 x LUS).
"""

from __future__ import annotations

import json
import math
import os

import numpy as np

from .genotype_space import GenotypeSet, make_genotype
from .peak_model import (MassParameters, _position_variance, component_height,
                         locus_components)
from .profile_model import (AlleleFrequencyTable, EvidenceProfile, GeneralisedStutter,
                            KitDefinition, KitLocus, LocusProfile, Peak, ReferenceProfile,
                            write_evidence_csv, write_frequencies_csv, write_kit_json,
                            write_references_csv)

# name, smallest and largest integer allele, microvariants
_LOCI = [
    ("D3S1358", 12, 19, ()),
    ("vWA", 13, 20, ()),
    ("D16S539", 8, 14, ()),
    ("CSF1PO", 8, 13, ()),
    ("TPOX", 6, 12, ()),
    ("D8S1179", 9, 16, ()),
    ("D21S11", 27, 33, (30.2, 31.2)),
    ("D18S51", 11, 20, ()),
    ("D2S441", 9, 15, (11.3,)),
    ("D19S433", 12, 16, (14.2,)),
    ("TH01", 6, 10, (9.3,)),
    ("FGA", 19, 27, ()),
    ("D22S1045", 11, 17, ()),
    ("D5S818", 9, 13, ()),
    ("D13S317", 8, 14, ()),
    ("D7S820", 8, 12, ()),
    ("SE33", 16, 30, (25.2,)),
    ("D10S1248", 12, 16, ()),
    ("D1S1656", 12, 18, (15.3,)),
    ("D12S391", 17, 23, ()),
    ("D2S1338", 17, 25, ()),
]

TH01_BACK_STUTTER = (0.007541, 0.001577)
POPULATIONS = (("PopA", 0.5), ("PopB", 0.3), ("PopC", 0.2))


def locus_alleles(name: str) -> list[float]:
    for n, lo, hi, micro in _LOCI:
        if n == name:
            return sorted([float(a) for a in range(lo, hi + 1)] + list(micro))
    raise KeyError(name)


def allele_size(locus_index: int, allele: float, repeat_length: int = 4) -> float:
    """Fragment size in bp for a synthetic kit allele."""
    whole = math.floor(allele + 1e-9)
    extra = round((allele - whole) * 10)
    return 60.0 + 17.0 * locus_index + repeat_length * whole + extra


def synthetic_kit(loci: list[str] | None = None, forward_ratio: float = 0.01,
                  name: str = "SYN21") -> KitDefinition:
    names = loci or [n for n, *_ in _LOCI]
    out = []
    for n in names:
        alleles = locus_alleles(n)
        extended = sorted(set(alleles) | {a + 1 for a in alleles} | {a - 1 for a in alleles})
        lus = {round(a, 1): float(math.floor(a + 1e-9)) for a in extended}
        if n == "TH01":
            intercept, slope = TH01_BACK_STUTTER
        else:
            intercept, slope = -0.01, 0.006
        generalised = ()
        if n in ("SE33", "D1S1656"):
            generalised = (GeneralisedStutter("double_back", 0.004),
                           GeneralisedStutter("minus_2bp", 0.006))
        out.append(KitLocus(n, intercept, slope, forward_ratio, lus, generalised))
    return KitDefinition(name, tuple(out))


def kit_index(kit: KitDefinition, locus: str) -> int:
    names = [n for n, *_ in _LOCI]
    return names.index(locus) if locus in names else kit.locus_names.index(locus)


def synthetic_frequencies(kit: KitDefinition, seed: int = 1, n: int = 500,
                          populations=POPULATIONS, concentration: float = 2.0) -> AlleleFrequencyTable:
    """Dirichlet-multinomial allele counts summing to 2N at every locus."""
    rng = np.random.default_rng(seed)
    counts, sizes = {}, {}
    for pop, _ in populations:
        for kl in kit.loci:
            alleles = locus_alleles(kl.name)
            p = rng.dirichlet(np.full(len(alleles), concentration))
            c = rng.multinomial(2 * n, p)
            counts[(pop, kl.name)] = {a: int(x) for a, x in zip(alleles, c)}
            sizes[(pop, kl.name)] = n
    return AlleleFrequencyTable(tuple(populations), counts, sizes)


def random_reference(sample_id: str, freq: AlleleFrequencyTable, population: str,
                     loci, rng: np.random.Generator) -> ReferenceProfile:
    genotypes = {}
    for locus in loci:
        f = freq.frequencies(population, locus)
        alleles = list(f)
        p = np.array([f[a] for a in alleles])
        pick = rng.choice(len(alleles), size=2, p=p / p.sum())
        genotypes[locus] = make_genotype(alleles[pick[0]], alleles[pick[1]])
    return ReferenceProfile(sample_id, genotypes)


def simulate_profile(references: list[ReferenceProfile], templates, kit: KitDefinition, flags,
                     at: float = 50.0, seed: int = 0, degradations=None, sample_id: str = "SIM",
                     drop_in: dict | None = None, noise: bool = True) -> EvidenceProfile:
    """Draw an electropherogram from the peak model.

    Peaks (alleles and every enabled stutter product) get lognormal noise
    with the flags' variance constants and are dropped below ``at``.
    ``drop_in`` maps locus -> list of (allele, height) spurious peaks.
    """
    rng = np.random.default_rng(seed)
    mass = MassParameters.from_flags(templates, flags, degradations)
    loci = {}
    for li, kl in enumerate(kit.loci):
        idx = kit_index(kit, kl.name)
        truth = GenotypeSet(tuple(r.genotypes[kl.name] for r in references))
        alleles = sorted({a for g in truth.genotypes for a in g})
        proto = LocusProfile(kl.name, tuple(
            Peak(a, 1.0, allele_size(idx, a, kl.repeat_length)) for a in alleles))
        comps = locus_components(truth, proto, kl, flags)
        peaks = []
        for pos, clist in comps.items():
            hc = [(component_height(c, mass), c) for c in clist]
            e = sum(h for h, _ in hc)
            if e <= 0:
                continue
            h = e
            if noise:
                v = _position_variance(hc, mass, flags)
                h = e * math.exp(rng.normal(0.0, math.sqrt(v)))
            h = round(h)
            if h >= at:
                peaks.append(Peak(pos, float(h), allele_size(idx, pos, kl.repeat_length)))
        for allele, height in (drop_in or {}).get(kl.name, []):
            if all(p.allele != allele for p in peaks):
                peaks.append(Peak(float(allele), float(height),
                                  allele_size(idx, allele, kl.repeat_length)))
        loci[kl.name] = LocusProfile(kl.name, tuple(peaks))
    return EvidenceProfile(sample_id, loci, kit.name, at)


# ---------------------------------------------------------------------------
# case bundles on disk


def write_case_files(directory, case_id: str, evidence: EvidenceProfile,
                     references: list[ReferenceProfile]) -> dict:
    """Write ``<case_id>.evidence.csv`` and ``<case_id>.refs.csv``; return relative names."""
    os.makedirs(directory, exist_ok=True)
    names = {"evidence": f"{case_id}.evidence.csv", "references": f"{case_id}.refs.csv"}
    with open(os.path.join(directory, names["evidence"]), "w", encoding="utf-8", newline="") as fh:
        write_evidence_csv(evidence, fh)
    with open(os.path.join(directory, names["references"]), "w", encoding="utf-8",
              newline="") as fh:
        write_references_csv(references, fh)
    return names


def write_shared_files(directory, kit: KitDefinition, freqs: AlleleFrequencyTable) -> dict:
    os.makedirs(directory, exist_ok=True)
    with open(os.path.join(directory, "kit.json"), "w", encoding="utf-8") as fh:
        write_kit_json(kit, fh)
    with open(os.path.join(directory, "frequencies.csv"), "w", encoding="utf-8", newline="") as fh:
        write_frequencies_csv(freqs, fh)
    return {"kit": "kit.json", "frequencies": "frequencies.csv"}


def two_person_mixture(case_id: str, kit: KitDefinition, freqs: AlleleFrequencyTable,
                       rng: np.random.Generator, flags, population: str = "PopA",
                       at: float = 50.0, template_range=((1500, 3000), (500, 1200))):
    """Random donors and a simulated mixture; returns (evidence, [donor1, donor2])."""
    donors = [random_reference(f"{case_id}_K{i + 1}", freqs, population, kit.locus_names, rng)
              for i in range(2)]
    templates = [float(rng.uniform(*r)) for r in template_range]
    evidence = simulate_profile(donors, templates, kit, flags, at=at,
                                seed=int(rng.integers(2 ** 31)), sample_id=case_id)
    return evidence, donors


def synthetic_manifest(directory, n_cases: int = 10, loci: list[str] | None = None,
                       seed: int = 0, flags=None) -> str:
    """Write a manifest of constructed two-person mixtures; returns its path."""
    from .flags import PRESETS

    flags = flags or PRESETS["v2.9-like"]
    kit = synthetic_kit(loci)
    freqs = synthetic_frequencies(kit, seed=seed + 1)
    shared = write_shared_files(directory, kit, freqs)
    rng = np.random.default_rng(seed)
    entries = []
    for i in range(n_cases):
        cid = f"C{i + 1:02d}"
        evidence, donors = two_person_mixture(cid, kit, freqs, rng, flags)
        files = write_case_files(directory, cid, evidence, donors)
        entries.append({"case_id": cid, **files, **shared, "noc": 2,
                        "poi": donors[i % 2].sample_id, "seed": seed + i,
                        "analytical_threshold": 50.0})
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"cases": entries}, fh, indent=2)
        fh.write("\n")
    return path
