import json
import os

import numpy as np
import pytest

from pgreg.flags import PRESETS
from pgreg.harness import (CaseOutcome, RegressionCase, RegressionReport, band_lines,
                           classify_band, diagnose_case, emit_scatter, h2_battery,
                           load_manifest, run_case, run_regression, scatter_csv,
                           stutter_table)
from pgreg.mcmc import McmcConfig
from pgreg.simulate import synthetic_manifest, write_case_files, write_shared_files

from conftest import sample1_like

SHORT = McmcConfig(burn_in=500, post_burn=2000, chains=2)


def test_bands():
    assert classify_band(3.4 - 7.1) == "divergent"
    assert classify_band(42.3 - 42.0) == "within_band"
    assert classify_band(0.05) == "on_line"
    assert classify_band(0.1) == "on_line"
    assert classify_band(-1.0) == "within_band"
    assert classify_band(0.3, tolerance_eq=0.5) == "on_line"


def test_scatter_rows_and_sentinel():
    rep = RegressionReport("a", "b", [CaseOutcome("C1", -30.0, 4.25), CaseOutcome("C2", 5.0, 5.0),
                                      CaseOutcome("C3", error="ValueError: bad")])
    lines = scatter_csv(rep).splitlines()
    assert lines[0] == "case_id,log10lr_a,log10lr_b,delta,band"
    assert lines[1] == "C1,-30,4.25,34.25,divergent"
    assert lines[2] == "C2,5,5,0,on_line"
    assert len(lines) == 3
    assert rep.summary() == {"on_line": 1, "within_band": 0, "divergent": 1, "errors": 1}
    assert band_lines().splitlines()[1] == "-30\t-30\t-29\t-31"


def test_emit_scatter_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        emit_scatter(RegressionReport("a", "b", []), tmp_path / "s.csv")


def test_stutter_table_th01(th01_kit, th01_evidence):
    lines = stutter_table(th01_evidence, th01_kit, ["TH01"]).splitlines()
    assert lines[0] == "Locus\tParent\tStutter\tLUS\tExpectedSR\tObservedSR"
    assert "TH01\t8\t7\t8\t0.02016\t0.1212" in lines
    # 9.3 -> 8.3 is not observed; 9 is taller than nothing at 8 -> excluded
    assert all(not l.startswith("TH01\t9\t") for l in lines)


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    d = tmp_path_factory.mktemp("synth")
    return synthetic_manifest(str(d), n_cases=3, loci=["D3S1358", "TH01", "FGA"], seed=4)


def test_manifest_paths_resolve(manifest):
    cases = load_manifest(manifest)
    assert [c.case_id for c in cases] == ["C01", "C02", "C03"]
    assert os.path.isabs(cases[0].evidence) or os.path.exists(cases[0].evidence)
    loaded = cases[0].load()
    assert loaded.evidence.at_for("TH01") == 50.0


def test_manifest_rejects_duplicates(tmp_path, manifest):
    data = json.load(open(manifest))
    data["cases"].append(dict(data["cases"][0]))
    bad = tmp_path / "m.json"
    bad.write_text(json.dumps(data))
    with pytest.raises(ValueError, match="duplicate"):
        load_manifest(bad)


def test_missing_reference_is_reported(manifest):
    case = load_manifest(manifest)[0]
    bogus = RegressionCase(**{**case.__dict__, "poi": "nobody"})
    with pytest.raises(KeyError, match="nobody"):
        bogus.load()


def test_identical_configs_give_zero_delta(manifest):
    cases = load_manifest(manifest)
    rep = run_regression(cases, PRESETS["v2.9-like"], PRESETS["v2.9-like"], mcmc=SHORT)
    assert not rep.errors
    assert all(o.delta == 0.0 and o.band == "on_line" for o in rep.outcomes)


def test_errors_recorded_and_batch_continues(manifest):
    cases = load_manifest(manifest)
    broken = RegressionCase(**{**cases[1].__dict__, "evidence": "/nonexistent/e.csv"})
    rep = run_regression([cases[0], broken], PRESETS["v2.5-like"], PRESETS["v2.9-like"],
                         mcmc=SHORT)
    assert [o.ok for o in rep.outcomes] == [True, False]
    assert "nonexistent" in rep.errors[0].error


def test_h2_battery_is_seeded(manifest):
    loaded = load_manifest(manifest)[0].load()
    run = run_case(loaded, PRESETS["v2.9-like"], SHORT)
    a = h2_battery(loaded, 5, PRESETS["v2.9-like"], SHORT, seed=3, run=run)
    b = h2_battery(loaded, 5, PRESETS["v2.9-like"], SHORT, seed=3, run=run)
    assert a == b and len(a) == 5


def test_sample1_like_diagnosis_flags_se33(tmp_path):
    evidence, refs, kit, freqs = sample1_like()
    shared = write_shared_files(tmp_path, kit, freqs)
    files = write_case_files(tmp_path, "L1_like", evidence, refs)
    entry = {"case_id": "L1_like", **files, **shared, "noc": 2, "poi": "K42", "seed": 1,
             "analytical_threshold": 50.0}
    loaded = RegressionCase.from_dict(entry, str(tmp_path / "case.json")).load()
    config_a = PRESETS["v2.5-like"].with_overrides(dynamic_start_templates=True)
    mcmc = McmcConfig(burn_in=2000, post_burn=10_000, chains=2)
    diag = diagnose_case(loaded, config_a, PRESETS["v2.9-like"], mcmc)
    assert diag.max_locus == "SE33"
    written = diag.write(tmp_path / "diag")
    names = {os.path.basename(p) for p in written}
    assert "L1_like.locus_delta.tsv" in names and "L1_like.stutter.tsv" in names
    assert any(n.endswith(".SE33.pdf.tsv") for n in names)
    delta = (tmp_path / "diag" / "L1_like.locus_delta.tsv").read_text()
    assert "SE33\t" in delta and delta.count("*") == 1
    assert "SE33" in (tmp_path / "diag" / "L1_like.stutter.tsv").read_text()


def test_non_donors_do_not_replay_case_references(tmp_path):
    # the synthetic builder draws donors from default_rng(seed) with the same
    # draw pattern, so a bare seed would turn the first non-donors into donors
    from pgreg.harness import non_donor_seed
    from pgreg.lr_engine import generate_non_donor

    m = synthetic_manifest(str(tmp_path), n_cases=1, loci=["vWA", "TH01", "FGA"], seed=11)
    loaded = load_manifest(m)[0].load()
    donors = [r.genotypes for r in loaded.references.values()]
    rng = np.random.default_rng(non_donor_seed(loaded.case.seed, loaded.case.case_id))
    nds = [generate_non_donor(loaded.freqs, "PopA", rng, loaded.kit.locus_names).genotypes
           for _ in range(2)]
    assert all(nd not in donors for nd in nds)
    bare = np.random.default_rng(loaded.case.seed)
    replay = generate_non_donor(loaded.freqs, "PopA", bare, loaded.kit.locus_names).genotypes
    assert replay in donors
