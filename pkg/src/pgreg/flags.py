"""Model feature flags bundled into named version profiles."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, fields, replace

DROP_IN_VARIANTS = ("legacy", "refined")
COMPOSITE_MODELS = ("weighted_average", "shifted_lognormal")
HPD_CAPS = ("none", "population_size", "min_resampled_count")


@dataclass(frozen=True)
class VersionProfile:
    name: str
    gaussian_walk: bool = True
    varying_variances: bool = True
    symmetry_restriction: bool = True
    forward_stutter: bool = True
    generalised_stutter: bool = True
    drop_in_variant: str = "refined"
    qe_floor_on: bool = True
    composite_variance: str = "shifted_lognormal"
    dynamic_start_templates: bool = True
    locus_amp_variance: bool = True
    hpd_cap: str = "min_resampled_count"
    stutter_dropin_preference: bool = True
    undersized_stutter_restriction: bool = True

    # enumeration
    max_dropins: int = 2
    allow_dropout: bool = True
    allow_double_dropout: bool = False
    sentinel_matches_any: bool = True

    # numeric model constants
    qe_floor: float = 30.0
    c2_allele: float = 10.0
    c2_stutter: float = 2.0
    variance_prior_shape: float = 20.0
    drop_in_rate: float = 0.02
    drop_in_lambda: float = 0.02
    drop_in_lambda_extra: float | None = None
    amp_sd: float = 0.15
    start_template: float = 1000.0

    overrides: tuple = ()

    def __post_init__(self):
        if not self.gaussian_walk:
            raise ValueError("only Gaussian-walk stepping is implemented")
        if self.drop_in_variant not in DROP_IN_VARIANTS:
            raise ValueError(f"drop_in_variant must be one of {DROP_IN_VARIANTS}")
        if self.composite_variance not in COMPOSITE_MODELS:
            raise ValueError(f"composite_variance must be one of {COMPOSITE_MODELS}")
        if self.hpd_cap not in HPD_CAPS:
            raise ValueError(f"hpd_cap must be one of {HPD_CAPS}")
        if not 0 <= self.drop_in_rate < 1:
            raise ValueError("drop_in_rate must lie in [0, 1)")
        if self.max_dropins < 0:
            raise ValueError("max_dropins must be >= 0")

    @property
    def lambda_extra(self) -> float:
        if self.drop_in_lambda_extra is None:
            return self.drop_in_lambda
        return self.drop_in_lambda_extra

    def with_overrides(self, **kwargs) -> "VersionProfile":
        known = {f.name for f in fields(self)} - {"overrides", "name"}
        bad = set(kwargs) - known
        if bad:
            raise ValueError(f"unknown flag(s): {sorted(bad)}")
        recorded = dict(self.overrides)
        recorded.update(kwargs)
        return replace(self, overrides=tuple(sorted(recorded.items())), **kwargs)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["overrides"] = dict(self.overrides)
        return d


_NEWEST = VersionProfile("v2.9-like")

PRESETS = {
    "v2.3-like": replace(
        _NEWEST, name="v2.3-like",
        symmetry_restriction=False, forward_stutter=False, generalised_stutter=False,
        drop_in_variant="legacy", qe_floor_on=False, composite_variance="weighted_average",
        dynamic_start_templates=False, locus_amp_variance=False, hpd_cap="none",
        stutter_dropin_preference=False, undersized_stutter_restriction=False,
        max_dropins=1,
    ),
    "v2.5-like": replace(
        _NEWEST, name="v2.5-like",
        generalised_stutter=False, drop_in_variant="legacy", qe_floor_on=False,
        composite_variance="weighted_average", dynamic_start_templates=False,
        locus_amp_variance=False, hpd_cap="none", stutter_dropin_preference=False,
        undersized_stutter_restriction=False,
    ),
    "v2.8-like": replace(_NEWEST, name="v2.8-like", undersized_stutter_restriction=False),
    "v2.9-like": _NEWEST,
}


def version_profile(name: str) -> VersionProfile:
    """Resolve a preset name or a JSON config file into a flag bundle.

    A config file looks like ``{"base": "v2.5-like", "name": "...",
    "overrides": {"qe_floor_on": true}}``.
    """
    if name in PRESETS:
        return PRESETS[name]
    if os.path.isfile(name):
        with open(name, encoding="utf-8") as fh:
            data = json.load(fh)
        base = version_profile(data.get("base", "v2.9-like"))
        prof = base.with_overrides(**data.get("overrides", {}))
        return replace(prof, name=data.get("name", os.path.splitext(os.path.basename(name))[0]))
    raise ValueError(f"unknown version profile {name!r}; presets: {', '.join(PRESETS)}")
