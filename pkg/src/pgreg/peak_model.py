"""Expected peak heights and the peak-height likelihood.

Observed heights are modelled as lognormal around their expectation:
``log O ~ Normal(log E, v)`` with ``v = c2 / E`` (optionally floored at low
E, and combined across contributing fluorescence for composite peaks).
Expected-but-unseen positions contribute the probability of falling below
the analytical threshold. This module is the readable reference; the
sampler runs the equivalent compiled kernel in ``_kernels``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np
from scipy.special import log_ndtr

from .genotype_space import GenotypeSet, stutter_targets
from .profile_model import DROPOUT, KitDefinition, KitLocus, LocusProfile, Peak

DEGRADATION_ANCHOR_BP = 75.0
DEFAULT_Q_MWT = 200.0
LOG_2PI = math.log(2 * math.pi)


class LikelihoodContractError(RuntimeError):
    """Observed peak left unexplained by a genotype set (an enumeration bug)."""


@dataclass(frozen=True)
class MassParameters:
    templates: tuple[float, ...]
    degradations: tuple[float, ...]
    amp_efficiency: Mapping[str, float] = field(default_factory=dict)
    c2_allele: float = 10.0
    c2_stutter: float = 2.0
    drop_in_rate: float = 0.02
    drop_in_lambda: float = 0.02

    def __post_init__(self):
        if len(self.templates) != len(self.degradations):
            raise ValueError("one degradation per contributor required")
        if any(not (t > 0 and math.isfinite(t)) for t in self.templates):
            raise ValueError("templates must be positive and finite")
        if any(d < 0 for d in self.degradations):
            raise ValueError("degradation must be >= 0")
        if any(a <= 0 for a in self.amp_efficiency.values()):
            raise ValueError("amplification efficiency must be positive")
        if self.c2_allele <= 0 or self.c2_stutter <= 0:
            raise ValueError("variance constants must be positive")
        if not 0 <= self.drop_in_rate < 1 or self.drop_in_lambda <= 0:
            raise ValueError("invalid drop-in parameters")

    @property
    def noc(self) -> int:
        return len(self.templates)

    def amp_for(self, locus: str) -> float:
        return self.amp_efficiency.get(locus, 1.0)

    @classmethod
    def from_flags(cls, templates, flags, degradations=None, amp=None):
        templates = tuple(float(t) for t in templates)
        if degradations is None:
            degradations = (0.0,) * len(templates)
        return cls(templates, tuple(float(d) for d in degradations), dict(amp or {}),
                   flags.c2_allele, flags.c2_stutter, flags.drop_in_rate, flags.drop_in_lambda)

    def with_templates(self, templates) -> "MassParameters":
        return replace(self, templates=tuple(float(t) for t in templates))


@dataclass(frozen=True)
class Component:
    """One source of fluorescence at a position."""

    contributor: int
    parent_mwt: float
    coef: float
    kind: str = "allele"

    @property
    def is_stutter(self) -> bool:
        return self.kind != "allele"


# ---------------------------------------------------------------------------
# stutter ratios


def _kit_locus(kit, locus) -> KitLocus:
    if isinstance(kit, KitLocus):
        return kit
    return kit.locus(locus)


def expected_back_stutter_ratio(kit: KitDefinition | KitLocus, locus: str, allele: float) -> float:
    """Back-stutter ratio from the kit's linear regression on LUS, floored at 0."""
    kl = _kit_locus(kit, locus)
    return max(0.0, kl.back_intercept + kl.back_slope_lus * kl.lus_for(allele))


def _stutter_ratio(kl: KitLocus, allele: float, kind: str) -> float:
    if kind == "back":
        return expected_back_stutter_ratio(kl, kl.name, allele)
    if kind == "forward":
        return kl.forward_stutter_ratio
    for g in kl.generalised:
        if g.kind == kind:
            return max(0.0, g.intercept + g.slope_lus * kl.lus_for(allele))
    return 0.0


# ---------------------------------------------------------------------------
# expected heights


def q_position(contributor: int, copy: int):
    return ("Q", contributor, copy)


def locus_components(genotype_set: GenotypeSet, locus: LocusProfile,
                     kit_locus: KitLocus | None, flags) -> dict:
    """Fluorescence sources per position for one genotype set.

    Real positions are keyed by allele; each dropout allele gets its own
    virtual position ``("Q", contributor, copy)`` sized at the locus mean.
    Stutter inherits the parent's amplification (degradation uses the parent
    size), so unobserved stutter positions never need a size of their own.
    """
    mwt = {p.allele: p.mwt for p in locus.peaks}
    q_mwt = locus.mean_mwt if locus.peaks else DEFAULT_Q_MWT
    comps: dict = {}
    for n, g in enumerate(genotype_set.genotypes):
        for copy, a in enumerate(g):
            if a == DROPOUT:
                comps.setdefault(q_position(n, copy), []).append(Component(n, q_mwt, 1.0))
        for a in sorted(set(g) - {DROPOUT}):
            dose = float(g.count(a))
            comps.setdefault(a, []).append(Component(n, mwt[a], dose))
            for kind, target in stutter_targets(a, kit_locus, flags).items():
                ratio = _stutter_ratio(kit_locus, a, kind)
                if ratio > 0:
                    comps.setdefault(target, []).append(Component(n, mwt[a], dose * ratio, kind))
    return comps


def component_height(comp: Component, mass: MassParameters, amp: float = 1.0) -> float:
    t = mass.templates[comp.contributor]
    d = mass.degradations[comp.contributor]
    return t * amp * comp.coef * math.exp(-d * (comp.parent_mwt - DEGRADATION_ANCHOR_BP))


@dataclass(frozen=True)
class ExpectedHeights:
    """Per-position expected fluorescence split by source, in rfu."""

    positions: Mapping

    def total(self, position) -> float:
        return sum(self.positions.get(position, {}).values())

    def __getitem__(self, position):
        return self.positions[position]

    def to_tsv(self) -> str:
        from .profile_model import format_allele
        lines = ["Position\tAllelic\tBackStutter\tForwardStutter\tGeneralised"]
        real = sorted(k for k in self.positions if not isinstance(k, tuple))
        virtual = sorted(k for k in self.positions if isinstance(k, tuple))
        for pos in real + virtual:
            c = self.positions[pos]
            label = format_allele(pos) if not isinstance(pos, tuple) else f"Q{pos[1] + 1}.{pos[2] + 1}"
            lines.append("\t".join([label] + [f"{c[k]:.4g}" for k in
                                              ("allelic", "back", "forward", "generalised")]))
        return "\n".join(lines) + "\n"


_HEIGHT_COLUMN = {"allele": "allelic", "back": "back", "forward": "forward"}


def expected_heights(genotype_set: GenotypeSet, mass: MassParameters, locus: LocusProfile,
                     kit_locus: KitLocus | None, flags) -> ExpectedHeights:
    amp = mass.amp_for(locus.locus)
    out = {}
    for pos, clist in locus_components(genotype_set, locus, kit_locus, flags).items():
        row = {"allelic": 0.0, "back": 0.0, "forward": 0.0, "generalised": 0.0}
        for c in clist:
            key = _HEIGHT_COLUMN.get(c.kind, "generalised")
            row[key] += component_height(c, mass, amp)
        out[pos] = row
    return ExpectedHeights(out)


# ---------------------------------------------------------------------------
# variance


def effective_variance(expected: float, c2: float, flags) -> float:
    """Log-scale variance ``c2 / E``, with E floored when the QE flag is on."""
    if flags.qe_floor_on:
        return c2 / max(expected, flags.qe_floor)
    if expected <= 0:
        return math.inf
    return c2 / expected


def composite_variance(components: Sequence[tuple[float, float]], model: str,
                       qe_floor: float | None = None) -> float:
    """Log-scale variance of a peak built from several fluorescence sources.

    ``components`` holds ``(expected, c2)`` pairs. ``weighted_average``
    averages the per-source variances with weights E_i/sum(E);
    ``shifted_lognormal`` moment-matches the sum of independent lognormals
    (mean E_i, log-variance v_i) to a single lognormal::

        v = log(1 + sum(E_i**2 * (exp(v_i) - 1)) / sum(E_i)**2)
    """
    if not components:
        raise ValueError("need at least one component")
    es = [e for e, _ in components]
    total = sum(es)
    if total <= 0:
        raise ValueError("total expected height is zero; route to dropout")
    vs = [c2 / (max(e, qe_floor) if qe_floor else e) for e, c2 in components]
    if len(components) == 1:
        return vs[0]
    if model == "weighted_average":
        return sum(e * v for e, v in zip(es, vs)) / total
    if model == "shifted_lognormal":
        var = sum(e * e * math.expm1(v) for e, v in zip(es, vs))
        return math.log1p(var / (total * total))
    raise ValueError(f"unknown composite variance model {model!r}")


def _position_variance(heights_and_comps, mass: MassParameters, flags) -> float:
    pairs = [(e, mass.c2_stutter if c.is_stutter else mass.c2_allele)
             for e, c in heights_and_comps if e > 0]
    floor = flags.qe_floor if flags.qe_floor_on else None
    return composite_variance(pairs, flags.composite_variance, floor)


# ---------------------------------------------------------------------------
# drop-in


def drop_in_log_probability(peak: Peak, mass: MassParameters, at: float, flags) -> float:
    """Log probability density of ``peak`` being drop-in (per rfu).

    Legacy: ``log p`` plus an exponential height density truncated at the
    analytical threshold. Refined: the same with an extra linear penalty on
    the height above threshold, so tall drop-in becomes rarer.
    """
    if peak.height < at:
        raise ValueError("drop-in peak below analytical threshold")
    lam = mass.drop_in_lambda
    excess = peak.height - at
    out = math.log(mass.drop_in_rate) + math.log(lam) - lam * excess
    if flags.drop_in_variant == "refined":
        out -= flags.lambda_extra * excess
    return out


def no_drop_in_log_probability(mass: MassParameters) -> float:
    return math.log1p(-mass.drop_in_rate)


def stutter_preference_guard(mixed_term: float, pure_stutter_term: float, observed: float,
                             expected_stutter: float, flags) -> float:
    """Undersized-stutter restriction.

    When the observed height sits below its pure-stutter expectation, adding
    drop-in fluorescence may not score better than stutter alone.
    """
    if flags.undersized_stutter_restriction and observed < expected_stutter:
        return min(mixed_term, pure_stutter_term)
    return mixed_term


def _normal_log_pdf(x: float, mu: float, var: float) -> float:
    return -0.5 * (LOG_2PI + math.log(var)) - (x - mu) ** 2 / (2.0 * var)


# ---------------------------------------------------------------------------
# likelihood


def locus_log_likelihood(locus: LocusProfile, genotype_set: GenotypeSet, mass: MassParameters,
                         kit_locus: KitLocus | None, at: float, flags) -> float:
    """Log density of the observed locus given a genotype set and mass parameters.

    Heights enter on the log scale. A drop-in peak's per-rfu density is
    multiplied by its height so every observed peak is scored per unit of
    log height.
    """
    if at <= 0:
        raise ValueError("a positive analytical threshold is required")
    amp = mass.amp_for(locus.locus)
    comps = locus_components(genotype_set, locus, kit_locus, flags)
    peaks = {p.allele: p for p in locus.peaks}
    drop = set(genotype_set.drop_in)
    log_at = math.log(at)

    total = 0.0
    for pos in list(peaks) + [k for k in comps if k not in peaks]:
        hc = [(component_height(c, mass, amp), c) for c in comps.get(pos, [])]
        e = sum(h for h, _ in hc)
        peak = peaks.get(pos)
        if pos in drop:
            term = drop_in_log_probability(peak, mass, at, flags) + math.log(peak.height)
            if e > 0:
                v = _position_variance(hc, mass, flags)
                z = (math.log(peak.height) - math.log(e)) / math.sqrt(v)
                pure = _normal_log_pdf(math.log(peak.height), math.log(e), v)
                term = stutter_preference_guard(term + float(log_ndtr(z)), pure,
                                                peak.height, e, flags)
            total += term
        elif peak is not None:
            if e <= 0:
                raise LikelihoodContractError(
                    f"{locus.locus}: peak {peak.allele} unexplained by {genotype_set}")
            v = _position_variance(hc, mass, flags)
            total += _normal_log_pdf(math.log(peak.height), math.log(e), v)
        elif e > 0:
            v = _position_variance(hc, mass, flags)
            total += float(log_ndtr((log_at - math.log(e)) / math.sqrt(v)))
    if not drop:
        total += no_drop_in_log_probability(mass)
    return total
