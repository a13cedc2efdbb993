"""Likelihood ratios from posterior genotype weights."""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .genotype_space import LocusWeights, genotype_matches
from .profile_model import (DROPOUT, AlleleFrequencyTable, EvidenceProfile,
                            ReferenceProfile, allele_frequency)

LOG10_ZERO_SENTINEL = -30.0
Q = "Q"


class UndefinedLRError(ZeroDivisionError):
    """Pr(E|Hd) is zero, so the LR is undefined (as opposed to LR = 0)."""


# ---------------------------------------------------------------------------
# Balding-Nichols


def genotype_probability_bn(genotype, conditioning: Sequence, freq: Mapping, theta: float) -> float:
    """Probability of drawing ``genotype`` given alleles already sampled.

    Each allele is drawn with ``(m*theta + (1-theta)*p) / (1 + (n-1)*theta)``
    where ``n`` alleles were drawn before, ``m`` of them the same type. The
    draw updates the conditioning set, and heterozygotes get a factor 2.
    Labels may be alleles or the lumped dropout category.
    """
    if not 0 <= theta < 1:
        raise ValueError("theta must lie in [0, 1)")
    seen = Counter(conditioning)
    n = len(conditioning)
    prob = 1.0
    for a in genotype:
        if theta == 0.0:
            prob *= freq[a]
        else:
            prob *= (seen[a] * theta + (1.0 - theta) * freq[a]) / (1.0 + (n - 1) * theta)
        seen[a] += 1
        n += 1
    if genotype[0] != genotype[1]:
        prob *= 2.0
    return prob


class FrequencySource:
    """Frequency lookups with the rare-allele floor; may wrap resampled values."""

    def __init__(self, table: AlleleFrequencyTable, override: Mapping | None = None):
        self.table = table
        self.override = override or {}

    def __call__(self, population: str, locus: str, allele: float) -> float:
        got = self.override.get((population, locus))
        if got is not None and allele in got:
            return got[allele]
        return allele_frequency(self.table, population, locus, allele)

    def has_locus(self, population: str, locus: str) -> bool:
        return (population, locus) in self.table.sizes


def _label(allele: float, observed) -> object:
    if allele == DROPOUT or allele not in observed:
        return Q
    return allele


def category_frequencies(freqs: FrequencySource, population: str, locus: str,
                         observed: Sequence[float]) -> dict:
    """Frequencies of each observed allele plus the lumped unobserved category."""
    out = {a: freqs(population, locus, a) for a in observed}
    out[Q] = max(0.0, 1.0 - sum(out.values()))
    return out


# ---------------------------------------------------------------------------
# propositions and per-locus LR


@dataclass(frozen=True)
class Propositions:
    """Hp: POI + assumed + unknowns; Hd: assumed + unknowns, ``noc`` in total."""

    poi: ReferenceProfile
    noc: int
    assumed: tuple[ReferenceProfile, ...] = ()

    def __post_init__(self):
        if self.noc < 1 + len(self.assumed):
            raise ValueError("noc too small for the POI plus assumed contributors")
        if any(a.sample_id == self.poi.sample_id for a in self.assumed):
            raise ValueError("POI cannot also be an assumed contributor")

    @property
    def hp_unknowns(self) -> int:
        return self.noc - 1 - len(self.assumed)

    @property
    def hd_unknowns(self) -> int:
        return self.noc - len(self.assumed)


@dataclass(frozen=True)
class ThetaSpec:
    value: float = 0.0
    samples: tuple[float, ...] = ()

    def __post_init__(self):
        vals = (self.value,) + tuple(self.samples)
        if any(not 0 <= t < 1 for t in vals):
            raise ValueError("theta must lie in [0, 1)")


def _pr_given_knowns(weights: LocusWeights, knowns, cond, catfreq, theta, observed,
                     sentinel_any) -> tuple[float, np.ndarray]:
    """Sum over sets of weight x probability of the unknown genotypes.

    Known genotypes are placed at every injective choice of matching positions.
    Also returns the support split by the position the first known occupies.
    """
    noc = len(weights.entries[0][0].genotypes) if weights.entries else 0
    total = 0.0
    by_position = np.zeros(noc)
    for gs, w in weights.entries:
        if w == 0:
            continue
        gts = gs.genotypes
        for assign in itertools.permutations(range(noc), len(knowns)):
            if not all(genotype_matches(gts[pos], k, observed, sentinel_any)
                       for pos, k in zip(assign, knowns)):
                continue
            seen = list(cond)
            p = 1.0
            for j in range(noc):
                if j in assign:
                    continue
                labels = (_label(gts[j][0], observed), _label(gts[j][1], observed))
                p *= genotype_probability_bn(labels, seen, catfreq, theta)
                seen.extend(labels)
            total += w * p
            if assign:
                by_position[assign[0]] += w * p
    return total, by_position


@dataclass(frozen=True)
class LocusLR:
    locus: str
    pr_hp: float | None
    pr_hd: float | None
    lr: float
    hp_support: tuple[float, ...] = ()

    @property
    def has_data(self) -> bool:
        return self.pr_hp is not None


def locus_lr(weights: LocusWeights, props: Propositions, freq, theta: float, population: str,
             sentinel_matches_any: bool = True) -> LocusLR:
    """Pr(E|Hp), Pr(E|Hd) and their ratio at one locus.

    ``freq`` is an :class:`AlleleFrequencyTable` or :class:`FrequencySource`.
    Unknown genotypes are drawn sequentially under Balding-Nichols, after the
    POI's and assumed contributors' alleles (both propositions condition on
    them). LR = 0 when no weighted set fits the POI.
    """
    if isinstance(freq, AlleleFrequencyTable):
        freq = FrequencySource(freq)
    locus = weights.locus
    observed = tuple(weights.observed) if weights.observed is not None else tuple(
        sorted({a for gs, _ in weights.entries for g in gs.genotypes for a in g if a != DROPOUT}
               | {a for gs, _ in weights.entries for a in gs.drop_in}))
    catfreq = category_frequencies(freq, population, locus, observed)
    poi_g = props.poi.genotypes[locus]
    assumed_g = [a.genotypes[locus] for a in props.assumed]
    cond = [_label(a, observed) for g in [poi_g] + assumed_g for a in g]
    pr_hp, support = _pr_given_knowns(weights, [poi_g] + assumed_g, cond, catfreq, theta,
                                      observed, sentinel_matches_any)
    pr_hd, _ = _pr_given_knowns(weights, assumed_g, cond, catfreq, theta, observed,
                                sentinel_matches_any)
    if pr_hd <= 0:
        raise UndefinedLRError(f"{locus}: Pr(E|Hd) = 0")
    return LocusLR(locus, pr_hp, pr_hd, pr_hp / pr_hd, tuple(support))


# ---------------------------------------------------------------------------
# profile level


def sub_source_lr(per_locus: Sequence[float], noc: int, hp_position_count: int = 1):
    """Product of locus LRs, and that product scaled by supported positions / noc."""
    sub_sub = 1.0
    for lr in per_locus:
        if lr is None:
            continue
        sub_sub *= lr
    return sub_sub, sub_sub * hp_position_count / noc


def log10_report(lr: float) -> float:
    """log10 of an LR; exactly -30 when the LR is zero."""
    if lr < 0 or math.isnan(lr):
        raise ValueError(f"LR must be non-negative, got {lr!r}")
    if lr == 0:
        return LOG10_ZERO_SENTINEL
    return math.log10(lr)


@dataclass
class LRReport:
    population: str
    rows: list[LocusLR]
    sub_sub_source_lr: float
    sub_source_lr: float
    hp_positions: int
    noc: int

    @property
    def log_pr_hp(self) -> float:
        return sum(math.log(r.pr_hp) if r.pr_hp > 0 else -math.inf
                   for r in self.rows if r.has_data)

    @property
    def log_pr_hd(self) -> float:
        return sum(math.log(r.pr_hd) for r in self.rows if r.has_data)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["Locus", "PrE_Hp", "PrE_Hd", "LR"])
        for r in self.rows:
            if r.has_data:
                w.writerow([r.locus, f"{r.pr_hp:.2E}", f"{r.pr_hd:.2E}", f"{r.lr:.2E}"])
            else:
                w.writerow([r.locus, "", "", ""])
        w.writerow(["Sub-Sub-Source", "", "", f"{self.sub_sub_source_lr:.2E}"])
        w.writerow(["Sub-source", "", "", f"{self.sub_source_lr:.2E}"])
        return buf.getvalue()


def hp_position_count(rows: Sequence[LocusLR], noc: int) -> int:
    """Contributor positions at which the POI is supported at every locus with data."""
    data = [r for r in rows if r.has_data and r.hp_support]
    if not data:
        return 1
    ok = [j for j in range(noc) if all(r.hp_support[j] > 0 for r in data)]
    return max(1, len(ok))


def profile_lr(weights: Mapping[str, LocusWeights], loci: Sequence[str], props: Propositions,
               freq, theta: float, population: str, sentinel_matches_any: bool = True) -> LRReport:
    if isinstance(freq, AlleleFrequencyTable):
        freq = FrequencySource(freq)
    rows = []
    for locus in loci:
        lw = weights.get(locus)
        usable = (lw is not None and len(lw) > 0 and locus in props.poi.genotypes
                  and all(locus in a.genotypes for a in props.assumed)
                  and freq.has_locus(population, locus))
        if not usable:
            rows.append(LocusLR(locus, None, None, 1.0))
            continue
        rows.append(locus_lr(lw, props, freq, theta, population, sentinel_matches_any))
    count = hp_position_count(rows, props.noc)
    sub_sub, sub = sub_source_lr([r.lr for r in rows], props.noc, count)
    return LRReport(population, rows, sub_sub, sub, count, props.noc)


def stratify(reports: Sequence[LRReport], proportions: Mapping[str, float]) -> dict:
    """Combine per-population reports.

    The stratified LR weights Pr(E|Hp) and Pr(E|Hd) by population proportion
    before dividing; the minimum per-population LR is reported alongside.
    """
    names = [r.population for r in reports]
    if set(names) != set(proportions) or abs(sum(proportions.values()) - 1.0) > 1e-9:
        raise ValueError("population proportions do not match the reports")
    log_w = np.log([proportions[n] for n in names])
    hp = np.array([r.log_pr_hp for r in reports])
    hd = np.array([r.log_pr_hd for r in reports])
    factor = reports[0].sub_source_lr / reports[0].sub_sub_source_lr \
        if reports[0].sub_sub_source_lr > 0 else reports[0].hp_positions / reports[0].noc
    if np.all(np.isneginf(hp)):
        strat_sub = 0.0
    else:
        strat_sub = math.exp(logsumexp(log_w + hp) - logsumexp(log_w + hd))
    per_pop = {r.population: r.sub_source_lr for r in reports}
    return {
        "per_population": per_pop,
        "stratified_sub_sub_source": strat_sub,
        "stratified": strat_sub * factor,
        "minimum": min(per_pop.values()),
    }


def stratify_pairs(pairs: Sequence[tuple[float, float]], proportions: Sequence[float]) -> float:
    """Stratified LR from (Pr(E|Hp), Pr(E|Hd)) pairs and population proportions."""
    if len(pairs) != len(proportions) or abs(sum(proportions) - 1.0) > 1e-9:
        raise ValueError("proportions must match pairs and sum to 1")
    num = sum(w * hp for (hp, _), w in zip(pairs, proportions))
    den = sum(w * hd for (_, hd), w in zip(pairs, proportions))
    return num / den


@dataclass
class ProfileLR:
    reports: dict[str, LRReport]
    summary: dict

    @property
    def point(self) -> float:
        return self.summary["stratified"]

    @property
    def log10(self) -> float:
        return log10_report(self.point)


def compute_lr(weights: Mapping[str, LocusWeights], loci: Sequence[str], props: Propositions,
               table: AlleleFrequencyTable, theta: float = 0.0,
               populations: Sequence[str] | None = None, freq: FrequencySource | None = None,
               sentinel_matches_any: bool = True) -> ProfileLR:
    freq = freq or FrequencySource(table)
    pops = list(populations or table.population_names)
    reports = {p: profile_lr(weights, loci, props, freq, theta, p, sentinel_matches_any)
               for p in pops}
    props_w = {p: table.proportion(p) for p in pops}
    s = sum(props_w.values())
    props_w = {p: v / s for p, v in props_w.items()}
    return ProfileLR(reports, stratify(list(reports.values()), props_w))


# ---------------------------------------------------------------------------
# HPD


@dataclass(frozen=True)
class HpdConfig:
    n_samples: int = 1000
    quantile: float = 0.005
    cap: str = "none"
    resample_frequencies: bool = True
    seed: int = 0


def interval_from_samples(samples, quantile: float = 0.005) -> tuple[float, float]:
    s = np.asarray(samples, dtype=float)
    return float(np.quantile(s, quantile)), float(np.quantile(s, 1.0 - quantile))


def _resampled_frequencies(table: AlleleFrequencyTable, needed: Mapping, rng) -> dict:
    """Dirichlet draw of allele proportions per population and locus.

    Alleles needed for the case but missing from the table enter with the
    rare-allele floor count.
    """
    out = {}
    for key, counts in table.counts.items():
        alleles = sorted(set(counts) | set(needed.get(key[1], ())))
        alpha = np.array([max(counts.get(a, 0), 0) or table.min_count for a in alleles],
                         dtype=float) + 1.0
        out[key] = dict(zip(alleles, rng.dirichlet(alpha)))
    return out


def _capped_frequencies(table: AlleleFrequencyTable, poi: ReferenceProfile, rule: str) -> dict:
    """Conservative point frequencies bounding how far the interval may widen.

    ``population_size`` adds the POI's own alleles to the database
    ((x + copies) / (2N + 2)); ``min_resampled_count`` adds ``min_count``
    pseudo-observations of each POI allele ((x + m) / (2N + m)).
    """
    out = {}
    for (pop, locus), counts in table.counts.items():
        if locus not in poi.genotypes:
            continue
        n2 = 2 * table.sizes[(pop, locus)]
        g = poi.genotypes[locus]
        d = {}
        for a in set(g):
            x = counts.get(a, 0) or table.min_count
            if rule == "population_size":
                d[a] = (x + g.count(a)) / (n2 + 2)
            else:
                d[a] = (x + table.min_count) / (n2 + table.min_count)
        out[(pop, locus)] = d
    return out


def hpd_interval(weights, loci, props: Propositions, table: AlleleFrequencyTable,
                 theta: ThetaSpec, config: HpdConfig, chain_weights=None,
                 populations=None, point_only: bool = False) -> tuple[float, float, float]:
    """One-sided-quantile interval on log10 LR: (lower, point, upper).

    Each resample draws allele proportions from their Dirichlet posterior,
    theta from ``theta.samples`` (when given) and adds Gaussian noise whose
    s.d. is the between-chain spread of log10 LR divided by sqrt(chains).
    """
    if point_only:
        raise ValueError("HPD requested for a point-estimate-only run")
    point = compute_lr(weights, loci, props, table, theta.value, populations).log10
    rng = np.random.default_rng(config.seed)
    mcmc_sd = 0.0
    if chain_weights and len(chain_weights) > 1:
        vals = [compute_lr(cw, loci, props, table, theta.value, populations).log10
                for cw in chain_weights]
        mcmc_sd = float(np.std(vals, ddof=1) / math.sqrt(len(vals)))
    needed = {}
    for locus in loci:
        lw = weights.get(locus)
        alleles = set(props.poi.genotypes.get(locus, ()))
        if lw is not None and lw.observed:
            alleles |= set(lw.observed)
        needed[locus] = alleles
    samples = []
    for _ in range(config.n_samples):
        th = float(rng.choice(theta.samples)) if theta.samples else theta.value
        if config.resample_frequencies:
            freq = FrequencySource(table, _resampled_frequencies(table, needed, rng))
        else:
            freq = FrequencySource(table)
        value = compute_lr(weights, loci, props, table, th, populations, freq).log10
        if mcmc_sd > 0:
            value += rng.normal(0.0, mcmc_sd)
        samples.append(value)
    lower, upper = interval_from_samples(samples, config.quantile)
    if config.cap != "none":
        capped = FrequencySource(table, _capped_frequencies(table, props.poi, config.cap))
        bound = compute_lr(weights, loci, props, table, theta.value, populations, capped).log10
        lower = max(lower, min(bound, point))
    return lower, point, upper


# ---------------------------------------------------------------------------
# non-donors


def generate_non_donor(table: AlleleFrequencyTable, population: str, rng: np.random.Generator,
                       loci: Sequence[str] | None = None, sample_id: str = "ND") -> ReferenceProfile:
    """Random profile with two independent allele draws per locus."""
    genotypes = {}
    for locus in loci or table.loci(population):
        freqs = table.frequencies(population, locus)
        alleles = list(freqs)
        p = np.array([freqs[a] for a in alleles], dtype=float)
        idx = rng.choice(len(alleles), size=2, p=p / p.sum())
        genotypes[locus] = (alleles[idx[0]], alleles[idx[1]])
    return ReferenceProfile(sample_id, genotypes)
