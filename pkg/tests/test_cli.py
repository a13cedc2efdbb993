import json
import subprocess
import sys

import pytest

from pgreg.cli import build_parser, main
from pgreg.simulate import synthetic_manifest

FAST = ["--chains", "2", "--burn-in", "300", "--post-burn", "1200"]


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    manifest = synthetic_manifest(str(d), n_cases=2, loci=["vWA", "TH01"], seed=9)
    entry = json.load(open(manifest))["cases"][0]
    case = d / "case.json"
    case.write_text(json.dumps(entry))
    return d, manifest, str(case), entry


def test_all_subcommands_exist():
    sub = build_parser()._subparsers._group_actions[0].choices
    assert set(sub) == {"deconvolve", "lr", "regress", "h2", "diagnose"}


def test_deconvolve_writes_report(workspace, tmp_path):
    _, _, case, _ = workspace
    assert main(["deconvolve", case, "--config", "v2.5-like", "--out", str(tmp_path)] + FAST) == 0
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["flags"] == "v2.5-like"
    assert (tmp_path / "TH01.pdf.tsv").read_text().startswith("GenotypeC1\tGenotypeC2")


def test_lr_with_poi_and_hpd(workspace, tmp_path):
    _, _, case, entry = workspace
    poi = entry["poi"]
    assert main(["lr", case, "--poi", poi, "--hpd", "20", "--out", str(tmp_path)] + FAST) == 0
    text = (tmp_path / "lr.csv").read_text()
    assert text.startswith("# population PopA\nLocus,PrE_Hp,PrE_Hd,LR\n")
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert set(summary["hpd_log10"]) == {"lower", "point", "upper"}


def test_lr_unknown_poi_fails(workspace):
    _, _, case, _ = workspace
    with pytest.raises(SystemExit):
        main(["lr", case, "--poi", "ghost"] + FAST)


def test_regress_outputs_and_determinism(workspace, tmp_path):
    _, manifest, _, _ = workspace
    outs = []
    for name, workers in (("one", "1"), ("two", "2")):
        out = tmp_path / name
        code = main(["regress", manifest, "--config-a", "v2.5-like", "--config-b", "v2.9-like",
                     "--out", str(out), "--workers", workers, "--diagnose", "all"] + FAST)
        assert code == 0
        outs.append(out)
    for fname in ("scatter.csv", "bands.dat", "errors.csv", "summary.json"):
        assert (outs[0] / fname).read_bytes() == (outs[1] / fname).read_bytes()
    assert (outs[0] / "diagnostics" / "C01" / "C01.locus_delta.tsv").exists()


def test_regress_exit_code_on_case_error(workspace, tmp_path):
    d, manifest, _, _ = workspace
    data = json.load(open(manifest))
    data["cases"][1]["evidence"] = "missing.csv"
    bad = d / "bad_manifest.json"
    bad.write_text(json.dumps(data))
    code = main(["regress", str(bad), "--config-a", "v2.5-like", "--config-b", "v2.9-like",
                 "--out", str(tmp_path), "--diagnose", "none"] + FAST)
    assert code == 1
    assert "C02" in (tmp_path / "errors.csv").read_text()


def test_h2_and_diagnose(workspace, tmp_path):
    _, _, case, _ = workspace
    out = tmp_path / "h2.csv"
    assert main(["h2", case, "--n", "4", "--out", str(out)] + FAST) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "non_donor,log10lr" and len(lines) == 5
    assert main(["diagnose", case, "--out", str(tmp_path / "d")] + FAST) == 0


def test_bad_config_exits_2(workspace):
    _, _, case, _ = workspace
    assert main(["deconvolve", case, "--config", "v9-like"] + FAST) == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "pgreg", "--help"], capture_output=True,
                         text=True, check=True)
    assert "regress" in res.stdout
