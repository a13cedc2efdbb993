"""Independent brute-force oracles shared by the unit and acceptance suites."""

import itertools
import math

from pgreg.genotype_space import GenotypeSet
from pgreg.profile_model import DROPOUT

Q = DROPOUT


def _minus_bp(a, bp, repeat=4):
    # designation arithmetic kept separate from the library's helper
    whole = math.floor(a + 1e-9)
    units = whole * repeat + round((a - whole) * 10) - bp
    return round(units // repeat + (units % repeat) / 10, 1)


def oracle_sets(lp, noc, flags, kl):
    """Brute force: every genotype tuple x every drop-in subset, then filter."""
    observed = set(lp.alleles)
    if not observed:
        # a peakless locus is all dropout; the double-dropout flag only
        # restricts contributors at loci that show peaks
        return {GenotypeSet(((Q, Q),) * noc)} if flags.allow_dropout else set()
    cands = sorted(observed) + ([Q] if flags.allow_dropout else [])
    genos = {tuple(sorted(p)) for p in itertools.product(cands, repeat=2)}
    if not flags.allow_double_dropout:
        genos.discard((Q, Q))
    out = set()
    for combo in itertools.product(sorted(genos), repeat=noc):
        carried = {a for g in combo for a in g if a != Q}
        back, other = set(), set()
        for a in carried:
            back.add(round(a - 1, 1))
            if flags.forward_stutter and kl.forward_stutter_ratio > 0:
                other.add(round(a + 1, 1))
            if flags.generalised_stutter:
                for g in kl.generalised:
                    other.add(round(a - 2, 1) if g.kind == "double_back" else _minus_bp(a, 2))
        free = observed - carried
        for k in range(0, min(flags.max_dropins, len(free)) + 1):
            for d in itertools.combinations(sorted(free), k):
                rest = free - set(d)
                if not rest <= back | other:
                    continue
                if not flags.stutter_dropin_preference and set(d) & (back - carried):
                    continue
                out.add(GenotypeSet(combo, d))
    return out
