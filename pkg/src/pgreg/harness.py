"""Batch regression runs comparing two version profiles."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .flags import VersionProfile
from .genotype_space import genotype_pdf_tsv
from .lr_engine import (LOG10_ZERO_SENTINEL, ProfileLR, Propositions, compute_lr,
                        generate_non_donor, log10_report)
from .mcmc import DeconvolutionResult, McmcConfig, deconvolve
from .peak_model import expected_back_stutter_ratio
from .profile_model import (AlleleFrequencyTable, EvidenceProfile, KitDefinition,
                            ReferenceProfile, format_allele, load_case,
                            observed_stutter_ratio, resolve, shift_repeats)

BANDS = ("on_line", "within_band", "divergent")


@dataclass(frozen=True)
class RegressionCase:
    """One mixture plus the comparison to make against it.

    Paths are stored already resolved against the manifest directory.
    """

    case_id: str
    evidence: str
    references: str
    kit: str
    frequencies: str
    noc: int
    poi: str
    assumed: tuple[str, ...] = ()
    populations: tuple[str, ...] = ()
    seed: int | None = None
    theta: float = 0.0
    analytical_threshold: float | None = None

    def __post_init__(self):
        if self.noc < 1:
            raise ValueError(f"{self.case_id}: noc must be >= 1")

    @classmethod
    def from_dict(cls, d: dict, base: str = "manifest.json") -> "RegressionCase":
        """Build from a manifest entry; relative paths resolve next to ``base``."""
        missing = {"case_id", "evidence", "references", "kit", "frequencies", "noc", "poi"} - set(d)
        if missing:
            raise ValueError(f"case entry missing {sorted(missing)}")
        return cls(
            case_id=str(d["case_id"]),
            evidence=resolve(base, d["evidence"]),
            references=resolve(base, d["references"]),
            kit=resolve(base, d["kit"]),
            frequencies=resolve(base, d["frequencies"]),
            noc=int(d["noc"]),
            poi=str(d["poi"]),
            assumed=tuple(str(a) for a in d.get("assumed", ())),
            populations=tuple(d.get("populations", ())),
            seed=d.get("seed"),
            theta=float(d.get("theta", 0.0)),
            analytical_threshold=d.get("analytical_threshold"),
        )

    def load(self):
        evidence, refs, kit, freqs = load_case(self.evidence, self.references, self.kit,
                                               self.frequencies, self.analytical_threshold)
        by_id = {r.sample_id: r for r in refs}
        for rid in (self.poi,) + self.assumed:
            if rid not in by_id:
                raise KeyError(f"{self.case_id}: reference {rid!r} not found")
        return LoadedCase(self, evidence, by_id, kit, freqs)


@dataclass
class LoadedCase:
    case: RegressionCase
    evidence: EvidenceProfile
    references: dict[str, ReferenceProfile]
    kit: KitDefinition
    freqs: AlleleFrequencyTable

    def propositions(self, poi: ReferenceProfile | None = None) -> Propositions:
        poi = poi or self.references[self.case.poi]
        return Propositions(poi, self.case.noc,
                            tuple(self.references[a] for a in self.case.assumed))

    @property
    def populations(self) -> list[str]:
        return list(self.case.populations) or self.freqs.population_names


def load_manifest(path) -> list[RegressionCase]:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    entries = data["cases"] if isinstance(data, dict) else data
    cases = [RegressionCase.from_dict(e, path) for e in entries]
    ids = [c.case_id for c in cases]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate case_id in manifest")
    return cases


def load_case_file(path) -> RegressionCase:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return RegressionCase.from_dict(data, path)


# ---------------------------------------------------------------------------
# single-case pipeline


@dataclass
class CaseRun:
    deconvolution: DeconvolutionResult
    lr: ProfileLR

    @property
    def log10(self) -> float:
        return self.lr.log10


def case_seed(case: RegressionCase, master_seed: int) -> int:
    return master_seed if case.seed is None else int(case.seed)


def run_case(loaded: LoadedCase, flags: VersionProfile, mcmc: McmcConfig,
             master_seed: int = 0) -> CaseRun:
    """Deconvolve then compute the stratified sub-source LR for the POI."""
    config = replace(mcmc, flags=flags, seed=case_seed(loaded.case, master_seed))
    result = deconvolve(loaded.evidence, loaded.case.noc, config, loaded.kit,
                        case_id=loaded.case.case_id)
    lr = compute_lr(result.weights, list(loaded.evidence.loci), loaded.propositions(),
                    loaded.freqs, loaded.case.theta, loaded.populations,
                    sentinel_matches_any=flags.sentinel_matches_any)
    return CaseRun(result, lr)


# ---------------------------------------------------------------------------
# regression


def classify_band(delta: float, tolerance_eq: float = 0.1) -> str:
    d = abs(delta)
    if d <= tolerance_eq:
        return "on_line"
    if d <= 1.0:
        return "within_band"
    return "divergent"


@dataclass
class CaseOutcome:
    case_id: str
    log10_a: float | None = None
    log10_b: float | None = None
    error: str | None = None
    tolerance_eq: float = 0.1

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def delta(self) -> float | None:
        if not self.ok:
            return None
        return self.log10_b - self.log10_a

    @property
    def band(self) -> str | None:
        return None if not self.ok else classify_band(self.delta, self.tolerance_eq)


@dataclass
class RegressionReport:
    config_a: str
    config_b: str
    outcomes: list[CaseOutcome]
    runs: dict[str, tuple[CaseRun, CaseRun]] = field(default_factory=dict, repr=False)

    @property
    def errors(self) -> list[CaseOutcome]:
        return [o for o in self.outcomes if not o.ok]

    def summary(self) -> dict:
        counts = {b: 0 for b in BANDS}
        for o in self.outcomes:
            if o.ok:
                counts[o.band] += 1
        counts["errors"] = len(self.errors)
        return counts

    def divergent(self) -> list[str]:
        return [o.case_id for o in self.outcomes if o.ok and o.band == "divergent"]


def _run_pair(case, config_a, config_b, mcmc, master_seed, tolerance_eq):
    try:
        loaded = case.load()
        ra = run_case(loaded, config_a, mcmc, master_seed)
        rb = run_case(loaded, config_b, mcmc, master_seed)
    except Exception as exc:  # recorded per case, batch continues
        return CaseOutcome(case.case_id, error=f"{type(exc).__name__}: {exc}",
                           tolerance_eq=tolerance_eq), None
    return CaseOutcome(case.case_id, ra.log10, rb.log10, tolerance_eq=tolerance_eq), (ra, rb)


def run_regression(cases: Sequence[RegressionCase], config_a: VersionProfile,
                   config_b: VersionProfile, master_seed: int = 0,
                   mcmc: McmcConfig | None = None, workers: int = 1,
                   tolerance_eq: float = 0.1) -> RegressionReport:
    """Run every case under both profiles with the same case seed.

    Cases run concurrently; output order follows the input order and is
    independent of ``workers``.
    """
    mcmc = mcmc or McmcConfig()

    def job(case):
        return _run_pair(case, config_a, config_b, mcmc, master_seed, tolerance_eq)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, cases))
    else:
        results = [job(c) for c in cases]
    outcomes = [r[0] for r in results]
    runs = {o.case_id: r[1] for o, r in zip(outcomes, results) if r[1] is not None}
    return RegressionReport(config_a.name, config_b.name, outcomes, runs)


# ---------------------------------------------------------------------------
# output


def _fmt(x: float) -> str:
    return f"{x:.4g}"


def scatter_csv(report: RegressionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case_id", "log10lr_a", "log10lr_b", "delta", "band"])
    for o in report.outcomes:
        if o.ok:
            w.writerow([o.case_id, _fmt(o.log10_a), _fmt(o.log10_b),
                        _fmt(o.delta), o.band])
    return buf.getvalue()


def band_lines(lo: float = LOG10_ZERO_SENTINEL, hi: float = 40.0) -> str:
    """Columns x, x, x+1, x-1 for drawing the x=y and x=y+-1 lines."""
    lines = ["# x\ty_eq\ty_plus1\ty_minus1"]
    for x in (lo, hi):
        lines.append(f"{_fmt(x)}\t{_fmt(x)}\t{_fmt(x + 1)}\t{_fmt(x - 1)}")
    return "\n".join(lines) + "\n"


def emit_scatter(report: RegressionReport, path, lines_path=None) -> None:
    if not report.outcomes:
        raise ValueError("report has no cases")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(scatter_csv(report))
    if lines_path is not None:
        with open(lines_path, "w", encoding="utf-8") as fh:
            fh.write(band_lines())


def errors_csv(report: RegressionReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["case_id", "error"])
    for o in report.errors:
        w.writerow([o.case_id, o.error])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# H2 battery


def non_donor_seed(seed: int, case_id: str) -> np.random.SeedSequence:
    """Seed for a case's non-donor draws, kept apart from every other stream.

    A bare integer seed would replay whatever generated the case's own
    references, turning "non-donors" into copies of the donors.
    """
    digest = hashlib.blake2b(b"non-donors:" + case_id.encode(), digest_size=8).digest()
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF,
                                   int.from_bytes(digest, "little")])


def h2_battery(loaded: LoadedCase, n_non_donors: int, flags: VersionProfile,
               mcmc: McmcConfig, seed: int = 0, population: str | None = None,
               run: CaseRun | None = None, non_donors: Sequence[ReferenceProfile] | None = None):
    """log10 LRs of random non-donors against one deconvolution of the case."""
    if n_non_donors < 1:
        raise ValueError("n_non_donors must be >= 1")
    run = run or run_case(loaded, flags, mcmc, seed)
    pop = population or loaded.populations[0]
    rng = np.random.default_rng(non_donor_seed(seed, loaded.case.case_id))
    loci = [l for l in loaded.evidence.loci if l in loaded.kit]
    if non_donors is None:
        non_donors = [generate_non_donor(loaded.freqs, pop, rng, loci, f"ND{i + 1}")
                      for i in range(n_non_donors)]
    out = []
    for nd in non_donors:
        lr = compute_lr(run.deconvolution.weights, list(loaded.evidence.loci),
                        loaded.propositions(nd), loaded.freqs, loaded.case.theta,
                        loaded.populations, sentinel_matches_any=flags.sentinel_matches_any)
        out.append(lr.log10)
    return out


# ---------------------------------------------------------------------------
# diagnostics


STUTTER_HEADER = ["Locus", "Parent", "Stutter", "LUS", "ExpectedSR", "ObservedSR"]


def stutter_table(evidence: EvidenceProfile, kit: KitDefinition, loci: Sequence[str]) -> str:
    """Observed vs expected back-stutter ratio for each observed parent/stutter pair."""
    rows = ["\t".join(STUTTER_HEADER)]
    for locus in loci:
        lp = evidence.loci.get(locus)
        if lp is None or locus not in kit:
            continue
        kl = kit.locus(locus)
        for peak in lp.peaks:
            child = lp.peak(shift_repeats(peak.allele, -1))
            if child is None or child.height >= peak.height:
                continue
            try:
                expected = expected_back_stutter_ratio(kl, locus, peak.allele)
                lus = kl.lus_for(peak.allele)
            except KeyError:
                continue
            rows.append("\t".join([locus, format_allele(peak.allele), format_allele(child.allele),
                                   _fmt(lus), _fmt(expected),
                                   _fmt(observed_stutter_ratio(peak, child))]))
    return "\n".join(rows) + "\n"


@dataclass
class Diagnostics:
    case_id: str
    lr_tables: dict[str, str]
    genotype_pdfs: dict[str, dict[str, str]]
    locus_deltas: dict[str, float]
    max_locus: str | None
    stutter: str
    population: str

    def write(self, out_dir) -> list[str]:
        os.makedirs(out_dir, exist_ok=True)
        written = []

        def put(name, text):
            path = os.path.join(out_dir, name)
            with open(path, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
            written.append(path)

        for cfg, text in self.lr_tables.items():
            put(f"{self.case_id}.{cfg}.lr.csv", text)
        for cfg, pdfs in self.genotype_pdfs.items():
            for locus, text in pdfs.items():
                put(f"{self.case_id}.{cfg}.{locus}.pdf.tsv", text)
        lines = ["Locus\tDeltaLog10LR\tMax"]
        for locus, d in self.locus_deltas.items():
            lines.append(f"{locus}\t{_fmt(d)}\t{'*' if locus == self.max_locus else ''}")
        put(f"{self.case_id}.locus_delta.tsv", "\n".join(lines) + "\n")
        put(f"{self.case_id}.stutter.tsv", self.stutter)
        return written


def _locus_log10(row) -> float | None:
    if not row.has_data:
        return None
    return log10_report(row.lr)


def diagnose_case(loaded: LoadedCase, config_a: VersionProfile, config_b: VersionProfile,
                  mcmc: McmcConfig, master_seed: int = 0, tolerance_eq: float = 0.1,
                  runs: tuple[CaseRun, CaseRun] | None = None) -> Diagnostics:
    """Per-locus LR tables, genotype pdfs and stutter ratios for two profiles.

    Locus deltas use the first population. The stutter table covers loci
    whose |delta| exceeds ``tolerance_eq`` plus the maximal locus.
    """
    if runs is None:
        runs = (run_case(loaded, config_a, mcmc, master_seed),
                run_case(loaded, config_b, mcmc, master_seed))
    pop = loaded.populations[0]
    names = [config_a.name, config_b.name]
    if names[0] == names[1]:
        names = [names[0] + "-a", names[1] + "-b"]
    lr_tables, pdfs = {}, {}
    for name, run in zip(names, runs):
        lr_tables[name] = run.lr.reports[pop].to_csv()
        pdfs[name] = {locus: genotype_pdf_tsv(lw, loaded.case.noc)
                      for locus, lw in run.deconvolution.weights.items()}
    rows_a = {r.locus: r for r in runs[0].lr.reports[pop].rows}
    rows_b = {r.locus: r for r in runs[1].lr.reports[pop].rows}
    deltas = {}
    for locus, ra in rows_a.items():
        la, lb = _locus_log10(ra), _locus_log10(rows_b[locus])
        if la is not None and lb is not None:
            deltas[locus] = lb - la
    max_locus = max(deltas, key=lambda k: abs(deltas[k])) if deltas else None
    flagged = [l for l, d in deltas.items() if abs(d) > tolerance_eq]
    if max_locus is not None and max_locus not in flagged:
        flagged.append(max_locus)
    return Diagnostics(loaded.case.case_id, lr_tables, pdfs, deltas, max_locus,
                       stutter_table(loaded.evidence, loaded.kit, flagged), pop)
