"""Domain types for STR profiles, kits and allele frequency tables, plus file I/O.

Alleles are carried as plain floats rounded to one decimal (``17.0``,
``25.2``, ``9.3``); the fractional digit counts extra base pairs of a
microvariant. The dropout sentinel ``DROPOUT`` (-1) stands for "an allele not
seen in the profile" and only ever appears inside genotypes.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from dataclasses import dataclass, field, replace
from typing import Iterable, Mapping

DROPOUT = -1.0
DEFAULT_MIN_ALLELE_COUNT = 5


class ParseError(ValueError):
    """Malformed input file; the message names file and line."""

    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{self.path}:{line}: {message}")


class ValidationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# allele designations


def parse_allele(text) -> float:
    s = str(text).strip()
    if s in ("-1", "Q"):
        return DROPOUT
    value = round(float(s), 1)
    check_allele(value)
    return value


def check_allele(value: float) -> None:
    if value == DROPOUT:
        return
    if value < 0 or not math.isfinite(value):
        raise ValueError(f"invalid allele designation {value!r}")
    tenths = int(round(value * 10)) % 10
    if tenths > 3:
        raise ValueError(f"microvariant fraction must be .1-.3, got {value!r}")


def format_allele(a: float) -> str:
    if a == DROPOUT:
        return "-1"
    if a == int(a):
        return str(int(a))
    return f"{a:.1f}"


def shift_repeats(a: float, k: int) -> float:
    """Designation ``k`` full repeats away from ``a``."""
    return round(a + k, 1)


def shift_bp(a: float, bp: int, repeat_length: int = 4) -> float:
    """Designation ``bp`` base pairs away from ``a`` (e.g. -2 bp stutter)."""
    whole = int(math.floor(a + 1e-9))
    extra = int(round((a - whole) * 10))
    total = whole * repeat_length + extra + bp
    new_whole, new_extra = divmod(total, repeat_length)
    return round(new_whole + new_extra / 10.0, 1)


def format_number(x: float) -> str:
    if float(x) == int(x):
        return str(int(x))
    return f"{x:g}"


# ---------------------------------------------------------------------------
# profile types


@dataclass(frozen=True)
class Peak:
    allele: float
    height: float
    mwt: float

    def __post_init__(self):
        if self.allele == DROPOUT:
            raise ValidationError("dropout sentinel cannot be an observed peak")
        check_allele(self.allele)
        if not self.height > 0:
            raise ValidationError(f"peak height must be positive, got {self.height}")
        if not self.mwt > 0:
            raise ValidationError(f"peak size must be positive, got {self.mwt}")


@dataclass(frozen=True)
class LocusProfile:
    locus: str
    peaks: tuple[Peak, ...] = ()

    def __post_init__(self):
        peaks = tuple(sorted(self.peaks, key=lambda p: p.mwt))
        object.__setattr__(self, "peaks", peaks)
        alleles = [p.allele for p in peaks]
        if len(set(alleles)) != len(alleles):
            raise ValidationError(f"{self.locus}: duplicate allele designations")
        if alleles != sorted(alleles):
            raise ValidationError(
                f"{self.locus}: molecular weight must increase with repeat number"
            )

    @property
    def alleles(self) -> tuple[float, ...]:
        return tuple(p.allele for p in self.peaks)

    def peak(self, allele: float) -> Peak | None:
        for p in self.peaks:
            if p.allele == allele:
                return p
        return None

    def heights(self) -> dict[float, float]:
        return {p.allele: p.height for p in self.peaks}

    @property
    def mean_mwt(self) -> float | None:
        if not self.peaks:
            return None
        return sum(p.mwt for p in self.peaks) / len(self.peaks)


@dataclass(frozen=True)
class EvidenceProfile:
    sample_id: str
    loci: Mapping[str, LocusProfile]
    kit: str = ""
    analytical_threshold: float | Mapping[str, float] = 0.0

    def at_for(self, locus: str) -> float:
        at = self.analytical_threshold
        if isinstance(at, Mapping):
            return float(at.get(locus, 0.0))
        return float(at)

    def nonempty_loci(self) -> list[str]:
        return [name for name, lp in self.loci.items() if lp.peaks]


@dataclass(frozen=True)
class ReferenceProfile:
    sample_id: str
    genotypes: Mapping[str, tuple[float, float]]

    def __post_init__(self):
        fixed = {}
        for locus, pair in self.genotypes.items():
            if len(pair) != 2:
                raise ValidationError(f"{self.sample_id}/{locus}: need exactly two alleles")
            a, b = sorted(float(x) for x in pair)
            if DROPOUT in (a, b):
                raise ValidationError(f"{self.sample_id}/{locus}: dropout in a reference")
            fixed[locus] = (a, b)
        object.__setattr__(self, "genotypes", fixed)


# ---------------------------------------------------------------------------
# kit


@dataclass(frozen=True)
class GeneralisedStutter:
    """Extra stutter type; ``kind`` is ``"double_back"`` or ``"minus_2bp"``."""

    kind: str
    intercept: float
    slope_lus: float = 0.0

    def __post_init__(self):
        if self.kind not in ("double_back", "minus_2bp"):
            raise ValidationError(f"unknown generalised stutter type {self.kind!r}")


@dataclass(frozen=True)
class KitLocus:
    name: str
    back_intercept: float
    back_slope_lus: float
    forward_stutter_ratio: float = 0.0
    lus: Mapping[float, float] = field(default_factory=dict)
    generalised: tuple[GeneralisedStutter, ...] = ()
    repeat_length: int = 4

    def lus_for(self, allele: float) -> float:
        try:
            return self.lus[allele]
        except KeyError:
            raise KeyError(
                f"no LUS value for allele {format_allele(allele)} at {self.name}"
            ) from None


@dataclass(frozen=True)
class KitDefinition:
    name: str
    loci: tuple[KitLocus, ...]

    @property
    def locus_names(self) -> list[str]:
        return [k.name for k in self.loci]

    def locus(self, name: str) -> KitLocus:
        for k in self.loci:
            if k.name == name:
                return k
        raise KeyError(f"locus {name!r} not in kit {self.name!r}")

    def __contains__(self, name) -> bool:
        return any(k.name == name for k in self.loci)


# ---------------------------------------------------------------------------
# allele frequencies


@dataclass(frozen=True)
class AlleleFrequencyTable:
    """Allele counts per population and locus.

    ``counts[(population, locus)]`` maps allele -> count and
    ``sizes[(population, locus)]`` gives N, the number of individuals.
    """

    populations: tuple[tuple[str, float], ...]
    counts: Mapping[tuple[str, str], Mapping[float, int]]
    sizes: Mapping[tuple[str, str], int]
    min_count: int = DEFAULT_MIN_ALLELE_COUNT

    def __post_init__(self):
        total = sum(p for _, p in self.populations)
        if self.populations and abs(total - 1.0) > 1e-9:
            raise ValidationError(f"population proportions sum to {total}, not 1")
        for key, counts in self.counts.items():
            if any(c < 0 for c in counts.values()):
                raise ValidationError(f"negative allele count in {key}")

    @property
    def population_names(self) -> list[str]:
        return [name for name, _ in self.populations]

    def proportion(self, population: str) -> float:
        return dict(self.populations)[population]

    def loci(self, population: str) -> list[str]:
        return [loc for (pop, loc) in self.counts if pop == population]

    def frequencies(self, population: str, locus: str) -> dict[float, float]:
        """Table frequencies count/(2N) for every listed allele (no flooring)."""
        n2 = 2 * self._size(population, locus)
        return {a: c / n2 for a, c in self.counts[(population, locus)].items()}

    def _size(self, population, locus) -> int:
        if (population, locus) not in self.sizes:
            if population not in self.population_names:
                raise KeyError(f"unknown population {population!r}")
            raise KeyError(f"locus {locus!r} missing for population {population!r}")
        return self.sizes[(population, locus)]


def allele_frequency(table: AlleleFrequencyTable, population: str, locus: str, allele: float) -> float:
    """Frequency of ``allele`` as count/(2N).

    Alleles absent from the table (or listed with count 0) get the rare-allele
    floor ``min_count/(2N)``.
    """
    n = table._size(population, locus)
    count = table.counts[(population, locus)].get(allele, 0)
    if count <= 0:
        count = table.min_count
    return count / (2.0 * n)


# ---------------------------------------------------------------------------
# analysis helpers


def apply_analytical_threshold(profile: EvidenceProfile, at: float) -> EvidenceProfile:
    """Drop peaks strictly below ``at``; a peak exactly at the threshold is kept."""
    if at < 0:
        raise ValueError("analytical threshold must be non-negative")
    loci = {
        name: LocusProfile(name, tuple(p for p in lp.peaks if p.height >= at))
        for name, lp in profile.loci.items()
    }
    current = profile.analytical_threshold
    if isinstance(current, Mapping):
        new_at = {k: max(v, at) for k, v in current.items()}
    else:
        new_at = max(float(current), float(at))
    return replace(profile, loci=loci, analytical_threshold=new_at)


def observed_stutter_ratio(parent: Peak, stutter: Peak | None) -> float:
    if parent.height <= 0:
        raise ValueError("parent peak height must be positive")
    if stutter is None:
        return 0.0
    return stutter.height / parent.height


# ---------------------------------------------------------------------------
# file formats

EVIDENCE_HEADER = ["Sample", "Locus", "Allele", "Height", "Size"]
REFERENCE_HEADER = ["SampleID", "Locus", "Allele1", "Allele2"]
FREQUENCY_HEADER = ["Population", "Locus", "Allele", "Count", "N"]
PROPORTION_HEADER = ["Population", "Proportion"]


def _open_text(path):
    return open(path, newline="", encoding="utf-8")


def _check_header(path, row, expected):
    if [c.strip() for c in row] != expected:
        raise ParseError(path, 1, f"expected header {','.join(expected)}, got {','.join(row)}")


def read_evidence_csv(path, kit: KitDefinition | None = None, sample_id: str | None = None,
                      analytical_threshold: float = 0.0) -> EvidenceProfile:
    peaks: dict[str, dict[str, list[Peak]]] = {}
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file")
        _check_header(path, header, EVIDENCE_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 5:
                raise ParseError(path, lineno, f"expected 5 fields, got {len(row)}")
            sample, locus, allele, height, size = (c.strip() for c in row)
            loci = peaks.setdefault(sample, {})
            plist = loci.setdefault(locus, [])
            if not allele and not height and not size:
                continue
            try:
                a = parse_allele(allele)
                if a == DROPOUT:
                    raise ValueError("dropout sentinel in evidence")
                plist.append(Peak(a, float(height), float(size)))
            except (ValueError, ValidationError) as exc:
                raise ParseError(path, lineno, str(exc)) from None
    if sample_id is None:
        if len(peaks) != 1:
            raise ParseError(path, 1, f"expected one sample, found {sorted(peaks)}")
        sample_id = next(iter(peaks))
    elif sample_id not in peaks:
        raise ParseError(path, 1, f"sample {sample_id!r} not present")
    loci_rows = peaks[sample_id]
    try:
        loci = {name: LocusProfile(name, tuple(plist)) for name, plist in loci_rows.items()}
    except ValidationError as exc:
        raise ParseError(path, 1, str(exc)) from None
    if kit is not None:
        for name in loci:
            if name not in kit:
                raise ValidationError(f"{path}: locus {name!r} is not defined in kit {kit.name!r}")
        ordered = {}
        for name in kit.locus_names:
            ordered[name] = loci.get(name, LocusProfile(name))
        loci = ordered
    return EvidenceProfile(sample_id, loci, kit.name if kit else "", analytical_threshold)


def write_evidence_csv(profile: EvidenceProfile, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(EVIDENCE_HEADER)
    for name, lp in profile.loci.items():
        if not lp.peaks:
            w.writerow([profile.sample_id, name, "", "", ""])
        for p in lp.peaks:
            w.writerow([profile.sample_id, name, format_allele(p.allele),
                        format_number(p.height), f"{p.mwt:.2f}"])


def read_references_csv(path) -> list[ReferenceProfile]:
    by_id: dict[str, dict[str, tuple[float, float]]] = {}
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file")
        _check_header(path, header, REFERENCE_HEADER)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise ParseError(path, lineno, f"expected 4 fields, got {len(row)}")
            sid, locus, a1, a2 = (c.strip() for c in row)
            try:
                pair = (parse_allele(a1), parse_allele(a2))
                if DROPOUT in pair:
                    raise ValueError("dropout sentinel in a reference profile")
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
            by_id.setdefault(sid, {})[locus] = pair
    return [ReferenceProfile(sid, g) for sid, g in by_id.items()]


def write_references_csv(refs: Iterable[ReferenceProfile], fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(REFERENCE_HEADER)
    for ref in refs:
        for locus, (a, b) in ref.genotypes.items():
            w.writerow([ref.sample_id, locus, format_allele(a), format_allele(b)])


def kit_from_dict(data: dict) -> KitDefinition:
    loci = []
    for entry in data["loci"]:
        try:
            bs = entry["back_stutter"]
            loci.append(KitLocus(
                name=entry["name"],
                back_intercept=float(bs["intercept"]),
                back_slope_lus=float(bs["slope_lus"]),
                forward_stutter_ratio=float(entry.get("forward_stutter_ratio", 0.0)),
                lus={parse_allele(k): float(v) for k, v in entry.get("lus", {}).items()},
                generalised=tuple(
                    GeneralisedStutter(g["type"], float(g["intercept"]), float(g.get("slope_lus", 0.0)))
                    for g in entry.get("generalised", [])
                ),
                repeat_length=int(entry.get("repeat_length", 4)),
            ))
        except KeyError as exc:
            raise ValidationError(f"kit locus {entry.get('name', '?')!r} missing {exc}") from None
    return KitDefinition(data.get("name", ""), tuple(loci))


def kit_to_dict(kit: KitDefinition) -> dict:
    loci = []
    for k in kit.loci:
        loci.append({
            "name": k.name,
            "repeat_length": k.repeat_length,
            "back_stutter": {"intercept": k.back_intercept, "slope_lus": k.back_slope_lus},
            "forward_stutter_ratio": k.forward_stutter_ratio,
            "lus": {format_allele(a): v for a, v in sorted(k.lus.items())},
            "generalised": [
                {"type": g.kind, "intercept": g.intercept, "slope_lus": g.slope_lus}
                for g in k.generalised
            ],
        })
    return {"name": kit.name, "loci": loci}


def read_kit_json(path) -> KitDefinition:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from None
    return kit_from_dict(data)


def write_kit_json(kit: KitDefinition, fh) -> None:
    json.dump(kit_to_dict(kit), fh, indent=2)
    fh.write("\n")


def read_frequencies_csv(path, min_count: int = DEFAULT_MIN_ALLELE_COUNT) -> AlleleFrequencyTable:
    counts: dict[tuple[str, str], dict[float, int]] = {}
    sizes: dict[tuple[str, str], int] = {}
    proportions: list[tuple[str, float]] = []
    section = "counts"
    with _open_text(path) as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(path, 1, "empty file")
        _check_header(path, header, FREQUENCY_HEADER)
        for lineno, row in enumerate(reader, start=2):
            cells = [c.strip() for c in row]
            if not cells or all(not c for c in cells):
                continue
            if cells == PROPORTION_HEADER:
                section = "proportions"
                continue
            try:
                if section == "counts":
                    if len(cells) != 5:
                        raise ValueError(f"expected 5 fields, got {len(cells)}")
                    pop, locus, allele, count, n = cells
                    key = (pop, locus)
                    counts.setdefault(key, {})[parse_allele(allele)] = int(count)
                    n = int(n)
                    if sizes.setdefault(key, n) != n:
                        raise ValueError(f"inconsistent N for {pop}/{locus}")
                else:
                    if len(cells) != 2:
                        raise ValueError(f"expected 2 fields, got {len(cells)}")
                    proportions.append((cells[0], float(cells[1])))
            except ValueError as exc:
                raise ParseError(path, lineno, str(exc)) from None
    if not proportions:
        pops = sorted({p for p, _ in counts})
        proportions = [(p, 1.0 / len(pops)) for p in pops]
    return AlleleFrequencyTable(tuple(proportions), counts, sizes, min_count)


def write_frequencies_csv(table: AlleleFrequencyTable, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(FREQUENCY_HEADER)
    for (pop, locus), counts in table.counts.items():
        n = table.sizes[(pop, locus)]
        for allele, count in counts.items():
            w.writerow([pop, locus, format_allele(allele), count, n])
    w.writerow([])
    w.writerow(PROPORTION_HEADER)
    for pop, prop in table.populations:
        w.writerow([pop, repr(float(prop))])


def to_text(writer, obj) -> str:
    buf = io.StringIO()
    writer(obj, buf)
    return buf.getvalue()


def load_case(evidence_path, references_path, kit_path, frequencies_path,
              analytical_threshold: float | None = None):
    """Load and validate a full case bundle.

    Returns ``(evidence, references, kit, frequencies)``. When
    ``analytical_threshold`` is given it is applied to the evidence.
    """
    kit = read_kit_json(kit_path)
    evidence = read_evidence_csv(evidence_path, kit=kit)
    if analytical_threshold is not None:
        evidence = apply_analytical_threshold(evidence, analytical_threshold)
    references = read_references_csv(references_path) if references_path else []
    freqs = read_frequencies_csv(frequencies_path)
    return evidence, references, kit, freqs


def resolve(base, path) -> str:
    if path is None or os.path.isabs(path):
        return path
    return os.path.join(os.path.dirname(os.path.abspath(base)), path)
