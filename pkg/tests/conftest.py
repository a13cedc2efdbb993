import pytest

from pgreg.profile_model import EvidenceProfile, LocusProfile, Peak, ReferenceProfile
from pgreg.flags import PRESETS
from pgreg.simulate import simulate_profile, synthetic_frequencies, synthetic_kit

TH01_PEAKS = ((7.0, 149, 191.23), (8.0, 1229, 195.31), (9.0, 147, 199.3), (9.3, 1681, 202.39))
SE33_PEAKS = ((16.0, 179, 354.24), (17.0, 1274, 358.27), (20.0, 118, 370.45),
              (21.0, 1157, 374.5), (22.0, 111, 378.65), (25.2, 127, 392.53))


def locus_from(name, rows):
    return LocusProfile(name, tuple(Peak(a, float(h), float(m)) for a, h, m in rows))


@pytest.fixture(scope="session")
def th01_kit():
    return synthetic_kit(["TH01"])


@pytest.fixture(scope="session")
def th01_evidence(th01_kit):
    return EvidenceProfile("S2", {"TH01": locus_from("TH01", TH01_PEAKS)}, th01_kit.name, 50.0)


@pytest.fixture(scope="session")
def th01_refs():
    return {"K_major": ReferenceProfile("K_major", {"TH01": (8.0, 9.3)}),
            "K_minor": ReferenceProfile("K_minor", {"TH01": (9.0, 9.3)})}


def sample1_like():
    """SE33 from the examined mixture plus three clean two-person loci.

    The clean loci are noise-free simulations whose minor alleles avoid the
    major's stutter positions, so only SE33 is ambiguous.
    """
    loci = ["D3S1358", "vWA", "TH01", "SE33"]
    kit = synthetic_kit(loci)
    donors = {"K42": {"D3S1358": (12.0, 19.0), "vWA": (13.0, 20.0), "TH01": (9.3, 10.0),
                      "SE33": (25.2, 25.2)},
              "K43": {"D3S1358": (14.0, 17.0), "vWA": (16.0, 18.0), "TH01": (7.0, 8.0),
                      "SE33": (17.0, 21.0)}}
    refs = [ReferenceProfile(k, g) for k, g in donors.items()]
    clean = simulate_profile(refs[::-1], [1200.0, 150.0], kit, PRESETS["v2.9-like"],
                             noise=False, sample_id="L1_like")
    profile = dict(clean.loci)
    # a homozygous minor needs a taller 25.2 and a stutter-sized 16
    rows = [(a, {16.0: 120, 25.2: 240}.get(a, h), m) for a, h, m in SE33_PEAKS]
    profile["SE33"] = locus_from("SE33", rows)
    evidence = EvidenceProfile("L1_like", profile, kit.name, 50.0)
    return evidence, refs, kit, synthetic_frequencies(kit, seed=7)


def sample2_like():
    """The examined TH01 locus plus three clean two-person loci.

    The minor donor K_minor is (9, 9.3) at TH01; its alleles elsewhere avoid
    the major's stutter positions.
    """
    loci = ["D3S1358", "vWA", "D8S1179", "TH01"]
    kit = synthetic_kit(loci)
    donors = {"K_major": {"D3S1358": (15.0, 16.0), "vWA": (14.0, 17.0), "D8S1179": (10.0, 13.0),
                          "TH01": (8.0, 9.3)},
              "K_minor": {"D3S1358": (12.0, 18.0), "vWA": (19.0, 20.0), "D8S1179": (15.0, 16.0),
                          "TH01": (9.0, 9.3)}}
    refs = [ReferenceProfile(k, g) for k, g in donors.items()]
    clean = simulate_profile(refs, [1200.0, 150.0], kit, PRESETS["v2.9-like"], noise=False,
                             sample_id="L1_like_4")
    profile = dict(clean.loci)
    profile["TH01"] = locus_from("TH01", TH01_PEAKS)
    evidence = EvidenceProfile("L1_like_4", profile, kit.name, 50.0)
    return evidence, refs, kit, synthetic_frequencies(kit, seed=7)


# acceptance verdict lines, printed once at the end of the run
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1])):
            terminalreporter.write_line(line)
