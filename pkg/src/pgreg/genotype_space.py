"""Genotype-set enumeration and posterior weight bookkeeping."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Sequence

from .profile_model import (DROPOUT, KitLocus, LocusProfile, format_allele,
                            shift_bp, shift_repeats)

Genotype = tuple[float, float]


class UnexplainableLocusError(ValueError):
    def __init__(self, locus: str, message: str = ""):
        self.locus = locus
        super().__init__(f"locus {locus} unexplainable: {message or 'no valid genotype sets'}")


def make_genotype(a: float, b: float) -> Genotype:
    lo, hi = sorted((float(a), float(b)))
    return (lo, hi)


def format_genotype(g: Genotype) -> str:
    return "[" + ",".join(format_allele(a) for a in g) + "]"


@dataclass(frozen=True, order=True)
class GenotypeSet:
    genotypes: tuple[Genotype, ...]
    drop_in: tuple[float, ...] = ()

    @property
    def carried(self) -> set[float]:
        return {a for g in self.genotypes for a in g if a != DROPOUT}

    def __str__(self):
        gts = " ".join(format_genotype(g) for g in self.genotypes)
        if self.drop_in:
            return f"{gts} +drop-in {','.join(format_allele(a) for a in self.drop_in)}"
        return gts


@dataclass(frozen=True)
class LocusWeights:
    """Posterior weights over genotype sets at one locus, heaviest first."""

    entries: tuple[tuple[GenotypeSet, float], ...]
    locus: str = ""
    observed: tuple[float, ...] | None = None

    def __post_init__(self):
        total = sum(w for _, w in self.entries)
        if self.entries and abs(total - 1.0) > 1e-9:
            raise ValueError(f"weights sum to {total!r}, not 1")
        if any(w < 0 for _, w in self.entries):
            raise ValueError("negative weight")
        keys = [gs for gs, _ in self.entries]
        if len(set(keys)) != len(keys):
            raise ValueError("duplicate genotype set")

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def weight_of(self, gs: GenotypeSet) -> float:
        for g, w in self.entries:
            if g == gs:
                return w
        return 0.0


# ---------------------------------------------------------------------------
# stutter positions


def stutter_targets(allele: float, kit_locus: KitLocus | None, flags) -> dict[str, float]:
    """Positions that a parent ``allele`` feeds stutter into, keyed by type."""
    if kit_locus is None or allele == DROPOUT:
        return {}
    out = {"back": shift_repeats(allele, -1)}
    if flags.forward_stutter and kit_locus.forward_stutter_ratio > 0:
        out["forward"] = shift_repeats(allele, 1)
    if flags.generalised_stutter:
        for g in kit_locus.generalised:
            if g.kind == "double_back":
                out["double_back"] = shift_repeats(allele, -2)
            else:
                out["minus_2bp"] = shift_bp(allele, -2, kit_locus.repeat_length)
    return out


# ---------------------------------------------------------------------------
# enumeration


def enumerate_genotype_sets(locus: LocusProfile, noc: int, flags,
                            kit_locus: KitLocus | None = None) -> list[GenotypeSet]:
    """All genotype sets that explain the observed peaks at ``locus``.

    Every observed allele must be carried by a contributor, be a stutter
    product of a carried allele, or be listed as drop-in. Without
    ``kit_locus`` no peak can be explained as stutter. Contributor positions
    are distinguishable, so swapped assignments are separate sets.

    Raises
    ------
    UnexplainableLocusError
        If no set satisfies the constraints.
    """
    if noc < 1:
        raise ValueError("noc must be >= 1")
    observed = tuple(sorted(locus.alleles))
    obs_set = set(observed)
    if not observed:
        if not flags.allow_dropout:
            raise UnexplainableLocusError(locus.locus, "no peaks and dropout disallowed")
        return [GenotypeSet(tuple((DROPOUT, DROPOUT) for _ in range(noc)))]

    candidates = list(observed)
    if flags.allow_dropout:
        candidates = [DROPOUT] + candidates
    genotypes = [
        g for g in itertools.combinations_with_replacement(candidates, 2)
        if not (g == (DROPOUT, DROPOUT) and not flags.allow_double_dropout)
    ]
    max_di = flags.max_dropins

    targets_cache = {a: stutter_targets(a, kit_locus, flags) for a in observed}

    out = []
    for combo in itertools.product(genotypes, repeat=noc):
        carried = {a for g in combo for a in g if a != DROPOUT}
        uncovered = obs_set - carried
        stutter_pos = set()
        back_pos = set()
        for a in carried:
            t = targets_cache[a]
            stutter_pos.update(t.values())
            if "back" in t:
                back_pos.add(t["back"])
        must = sorted(uncovered - stutter_pos)
        if len(must) > max_di:
            continue
        optional = uncovered & stutter_pos
        if not flags.stutter_dropin_preference:
            optional -= back_pos
        optional = sorted(optional)
        room = max_di - len(must)
        for k in range(0, min(room, len(optional)) + 1):
            for extra in itertools.combinations(optional, k):
                drop_in = tuple(sorted(must + list(extra)))
                out.append(GenotypeSet(tuple(combo), drop_in))
    if not out:
        raise UnexplainableLocusError(
            locus.locus, f"{len(observed)} peaks, noc={noc}, max drop-ins={max_di}")
    out.sort()
    return out


# ---------------------------------------------------------------------------
# weights


def normalize_weights(raw_counts: Iterable[tuple[GenotypeSet, float]], locus: str = "",
                      observed: Sequence[float] | None = None,
                      keep_zero: bool = False) -> LocusWeights:
    items = list(raw_counts)
    if any(c < 0 for _, c in items):
        raise ValueError("counts must be non-negative")
    total = float(sum(c for _, c in items))
    if total <= 0:
        raise ValueError("at least one count must be positive")
    entries = [(gs, c / total) for gs, c in items if keep_zero or c > 0]
    entries.sort(key=lambda e: (-e[1], e[0]))
    # absorb rounding so the invariant holds tightly
    s = sum(w for _, w in entries)
    entries = [(gs, w / s) for gs, w in entries]
    return LocusWeights(tuple(entries), locus, tuple(observed) if observed is not None else None)


def genotype_matches(candidate: Genotype, poi: Genotype, observed=None,
                     sentinel_matches_any: bool = True) -> bool:
    """Whether a (possibly dropout-bearing) genotype is consistent with ``poi``.

    A dropout sentinel stands for one allele that is not in the profile, so
    with ``observed`` given it only matches POI alleles absent from it.
    """
    poi = make_genotype(*poi)
    candidate = make_genotype(*candidate)
    if candidate == poi:
        return True
    if not sentinel_matches_any or DROPOUT not in candidate:
        return False
    if candidate == (DROPOUT, DROPOUT):
        free = list(poi)
    else:
        known = candidate[1]
        if known not in poi:
            return False
        free = list(poi)
        free.remove(known)
    if observed is None:
        return True
    return all(a not in observed for a in free)


def sets_supporting(locus_weights: LocusWeights, poi_genotype: Genotype,
                    position_policy="any", sentinel_matches_any: bool = True):
    """Entries whose genotype at an allowed contributor position fits the POI.

    ``position_policy`` is ``"any"`` or an iterable of contributor indices.
    """
    out = []
    for gs, w in locus_weights.entries:
        positions = range(len(gs.genotypes)) if position_policy == "any" else position_policy
        if any(genotype_matches(gs.genotypes[j], poi_genotype, locus_weights.observed,
                                sentinel_matches_any) for j in positions):
            out.append((gs, w))
    return out


def genotype_pdf_tsv(locus_weights: LocusWeights, noc: int) -> str:
    """Tab-separated dump in the layout of a genotype probability table."""
    cols = [f"GenotypeC{i + 1}" for i in range(noc)] + ["DropIn", "Weight"]
    lines = ["\t".join(cols)]
    for gs, w in locus_weights.entries:
        row = [format_genotype(g) for g in gs.genotypes]
        row.append(",".join(format_allele(a) for a in gs.drop_in))
        row.append(f"{w:.3E}")
        lines.append("\t".join(row))
    return "\n".join(lines) + "\n"
