"""Metropolis-Hastings deconvolution over mass parameters and genotype sets."""

from __future__ import annotations

import hashlib
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from ._kernels import CompiledLoci, compile_loci, pack_constants
from .flags import PRESETS, VersionProfile
from .genotype_space import LocusWeights, enumerate_genotype_sets, normalize_weights
from .peak_model import MassParameters, locus_log_likelihood
from .profile_model import EvidenceProfile, KitDefinition

TEMPLATE_MAX = 30_000.0
DEGRADATION_MAX = 0.05


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 10_000
    post_burn: int = 50_000
    chains: int = 4
    seed: int = 0
    step_template: float = 30.0
    step_degradation: float = 0.0005
    step_amp: float = 0.03
    step_c2_allele: float = 1.0
    step_c2_stutter: float = 0.25
    flags: VersionProfile = PRESETS["v2.9-like"]
    debug: bool = False
    trace_every: int = 0

    def __post_init__(self):
        if self.burn_in <= 0 or self.post_burn <= 0:
            raise ValueError("burn_in and post_burn must be positive")
        if self.chains < 1:
            raise ValueError("need at least one chain")


@dataclass
class MassVector:
    """Mutable array form of :class:`MassParameters` used inside a chain."""

    templates: np.ndarray
    degradations: np.ndarray
    amp: np.ndarray
    c2_allele: float
    c2_stutter: float

    def copy(self) -> "MassVector":
        return MassVector(self.templates.copy(), self.degradations.copy(), self.amp.copy(),
                          self.c2_allele, self.c2_stutter)

    def to_parameters(self, loci, flags) -> MassParameters:
        return MassParameters(tuple(self.templates), tuple(self.degradations),
                              dict(zip(loci, self.amp)), self.c2_allele, self.c2_stutter,
                              flags.drop_in_rate, flags.drop_in_lambda)


@dataclass
class ChainState:
    mass: MassVector
    set_index: np.ndarray          # current set per locus, global index
    loglik: np.ndarray             # cached per-locus log-likelihood
    log_prior: float

    @property
    def log_post(self) -> float:
        return float(self.loglik.sum()) + self.log_prior


@dataclass
class DeconvolutionResult:
    loci: list[str]
    noc: int
    weights: dict[str, LocusWeights]
    chain_weights: list[dict[str, LocusWeights]]
    weight_variance: dict[str, dict]
    template_mean: list[float]
    template_sd: list[float]
    degradation_mean: list[float]
    mixture_proportions: list[float]
    amp_mean: dict[str, float]
    acceptance: dict[str, float]
    sign_changes: list[int] = field(default_factory=list)
    traces: list[np.ndarray] = field(default_factory=list)
    flags_name: str = ""
    seed: int = 0

    def report(self) -> dict:
        return {
            "flags": self.flags_name,
            "seed": self.seed,
            "noc": self.noc,
            "templates": {"mean": [_sig(x) for x in self.template_mean],
                          "sd": [_sig(x) for x in self.template_sd]},
            "degradation_mean": [_sig(x) for x in self.degradation_mean],
            "mixture_proportions": [_sig(x) for x in self.mixture_proportions],
            "amp_efficiency_mean": {k: _sig(v) for k, v in self.amp_mean.items()},
            "acceptance": {k: _sig(v) for k, v in self.acceptance.items()},
            "per_chain_weight_variance": {
                locus: {k: f"{v:.3E}" for k, v in d.items()}
                for locus, d in self.weight_variance.items()
            },
        }

    def report_json(self) -> str:
        return json.dumps(self.report(), indent=2, sort_keys=True) + "\n"


def _sig(x: float) -> str:
    return f"{x:.4g}"


# ---------------------------------------------------------------------------
# priors and proposals


def _blocks(config: McmcConfig) -> list[str]:
    flags = config.flags
    out = []
    if config.step_template > 0:
        out.append("templates")
    if config.step_degradation > 0:
        out.append("degradations")
    if flags.locus_amp_variance and config.step_amp > 0:
        out.append("amp")
    if flags.varying_variances and (config.step_c2_allele > 0 or config.step_c2_stutter > 0):
        out.append("variances")
    return out


def _inv_gamma_logpdf(x: float, mean: float, shape: float) -> float:
    scale = mean * (shape - 1.0)
    return -(shape + 1.0) * math.log(x) - scale / x


def log_prior(mass: MassVector, flags: VersionProfile) -> float:
    """Templates U(0, 30000); degradation U[0, 0.05); A_l lognormal; c2 inverse-gamma."""
    t, d = mass.templates, mass.degradations
    if np.any(t <= 0) or np.any(t >= TEMPLATE_MAX):
        return -math.inf
    if np.any(d < 0) or np.any(d >= DEGRADATION_MAX):
        return -math.inf
    if np.any(mass.amp <= 0) or mass.c2_allele <= 0 or mass.c2_stutter <= 0:
        return -math.inf
    lp = 0.0
    if flags.locus_amp_variance:
        la = np.log(mass.amp)
        lp += float(np.sum(-la - la * la / (2.0 * flags.amp_sd ** 2)))
    if flags.varying_variances:
        lp += _inv_gamma_logpdf(mass.c2_allele, flags.c2_allele, flags.variance_prior_shape)
        lp += _inv_gamma_logpdf(mass.c2_stutter, flags.c2_stutter, flags.variance_prior_shape)
    return lp


def _amp_log_prior(amp: np.ndarray, flags) -> np.ndarray:
    la = np.log(amp)
    return -la - la * la / (2.0 * flags.amp_sd ** 2)


def reflect(x):
    """Reflect a Gaussian-walk proposal at zero; keeps the proposal symmetric."""
    return np.abs(x)


def propose_mass(state: ChainState, rng: np.random.Generator, config: McmcConfig,
                 block: str = "templates") -> MassVector:
    """Perturb one parameter class with centred Gaussian noise."""
    cand = state.mass.copy()
    if block == "templates":
        cand.templates = reflect(cand.templates + rng.normal(0.0, config.step_template,
                                                             cand.templates.shape))
    elif block == "degradations":
        cand.degradations = reflect(cand.degradations + rng.normal(
            0.0, config.step_degradation, cand.degradations.shape))
    elif block == "amp":
        cand.amp = reflect(cand.amp + rng.normal(0.0, config.step_amp, cand.amp.shape))
    elif block == "variances":
        step = rng.normal(0.0, 1.0, 2)
        cand.c2_allele = abs(cand.c2_allele + config.step_c2_allele * step[0])
        cand.c2_stutter = abs(cand.c2_stutter + config.step_c2_stutter * step[1])
    else:
        raise ValueError(f"unknown parameter block {block!r}")
    return cand


def propose_genotype(n_sets, rng: np.random.Generator):
    """Uniform independence proposal over each locus's enumerated sets.

    ``n_sets`` is a count or an array of counts (one per locus); the result is
    a local set index (or array of them).
    """
    if np.ndim(n_sets) == 0:
        return int(rng.integers(n_sets))
    return rng.integers(0, np.asarray(n_sets))


def metropolis_accept(log_post_current, log_post_candidate, rng: np.random.Generator):
    """Accept with probability min(1, exp(candidate - current)); vectorises over arrays."""
    cur = np.asarray(log_post_current, dtype=float)
    cand = np.asarray(log_post_candidate, dtype=float)
    if np.any(np.isnan(cur)) or np.any(np.isnan(cand)):
        raise FloatingPointError("NaN log posterior")
    if np.any(~np.isfinite(cur)):
        raise FloatingPointError("current log posterior is not finite")
    delta = cand - cur
    u = rng.random(delta.shape)
    with np.errstate(divide="ignore"):
        accept = np.log(u) < delta
    if accept.ndim == 0:
        return bool(accept)
    return accept


def symmetry_guard(current_templates, candidate_templates, enabled: bool = True) -> bool:
    """False when a proposal would swap the order of two adjacent templates."""
    if not enabled:
        return True
    cand = np.asarray(candidate_templates)
    cur = np.asarray(current_templates)
    for i in range(len(cand) - 1):
        if (cur[i] - cur[i + 1]) * (cand[i] - cand[i + 1]) < 0:
            return False
        if cand[i] < cand[i + 1]:
            return False
    return True


# ---------------------------------------------------------------------------
# setup


def prepare(profile: EvidenceProfile, noc: int, flags: VersionProfile,
            kit: KitDefinition | None) -> CompiledLoci:
    loci = [profile.loci[name] for name in profile.nonempty_loci()]
    if not loci:
        raise ValueError("profile has no peaks at any locus")
    kit_loci = [kit.locus(lp.locus) if kit is not None else None for lp in loci]
    sets = [enumerate_genotype_sets(lp, noc, flags, kl) for lp, kl in zip(loci, kit_loci)]
    ats = [profile.at_for(lp.locus) for lp in loci]
    if min(ats) <= 0:
        raise ValueError("the likelihood needs a positive analytical threshold at every locus; "
                         "set analytical_threshold on the case")
    return compile_loci(loci, sets, kit_loci, ats, flags)


def start_templates(profile: EvidenceProfile, noc: int, flags: VersionProfile) -> np.ndarray:
    """Initial templates.

    Legacy: every contributor starts at ``flags.start_template`` (1000 rfu).
    Dynamic: half the mean summed locus height is shared between
    contributors in proportion to the mean of successive equal-size chunks of
    the pooled, descending peak heights (heterozygous contributors each put
    two peaks per locus).
    """
    if not flags.dynamic_start_templates:
        return np.full(noc, float(flags.start_template))
    totals, pooled = [], []
    for lp in profile.loci.values():
        if lp.peaks:
            h = [p.height for p in lp.peaks]
            totals.append(sum(h))
            pooled.extend(h)
    if not totals:
        raise ValueError("profile has no peaks at any locus")
    overall = float(np.mean(totals)) / 2.0
    pooled = np.sort(np.asarray(pooled))[::-1]
    chunks = np.array_split(pooled, noc)
    means = np.array([c.mean() if len(c) else pooled[-1] for c in chunks])
    t = overall * means / means.sum()
    # keep a strict order so the symmetry guard has a defined side
    t = t * (1.0 - 1e-3 * np.arange(noc))
    return np.minimum(t, TEMPLATE_MAX * 0.99)


def initialize_chain(profile: EvidenceProfile, noc: int, config: McmcConfig,
                     compiled: CompiledLoci) -> ChainState:
    if noc < 1:
        raise ValueError("noc must be >= 1")
    flags = config.flags
    mass = MassVector(start_templates(profile, noc, flags), np.zeros(noc),
                      np.ones(compiled.n_loci), flags.c2_allele, flags.c2_stutter)
    par = pack_constants(flags, flags.drop_in_rate, flags.drop_in_lambda)
    all_ids = np.arange(len(compiled.set_locus))
    ll_all = compiled.loglik(all_ids, mass.templates, mass.degradations, mass.amp,
                             mass.c2_allele, mass.c2_stutter, par)
    idx = np.empty(compiled.n_loci, dtype=np.int64)
    for l in range(compiled.n_loci):
        a, b = compiled.locus_set_start[l], compiled.locus_set_start[l + 1]
        idx[l] = a + int(np.argmax(ll_all[a:b]))
    return ChainState(mass, idx, ll_all[idx].copy(), log_prior(mass, flags))


def chain_seed(master_seed: int, chain_index: int, case_id: str = "") -> np.random.SeedSequence:
    digest = hashlib.blake2b(case_id.encode(), digest_size=8).digest()
    return np.random.SeedSequence([int(master_seed) & 0xFFFFFFFFFFFFFFFF, chain_index,
                                   int.from_bytes(digest, "little")])


# ---------------------------------------------------------------------------
# chain


@dataclass
class _ChainOutput:
    counts: np.ndarray
    t_sum: np.ndarray
    t_sq: np.ndarray
    d_sum: np.ndarray
    prop_sum: np.ndarray
    amp_sum: np.ndarray
    accepted: dict
    proposed: dict
    sign_changes: int
    trace: np.ndarray


def _check_cache(state, compiled, profile, kit, flags, par):
    fresh = compiled.loglik(state.set_index, state.mass.templates, state.mass.degradations,
                            state.mass.amp, state.mass.c2_allele, state.mass.c2_stutter, par)
    if not np.allclose(fresh, state.loglik, rtol=0, atol=1e-9):
        raise AssertionError("cached log-likelihood drifted from recomputation")
    mp = state.mass.to_parameters(compiled.loci, flags)
    for l, name in enumerate(compiled.loci):
        lo = compiled.locus_set_start[l]
        gs = compiled.sets[l][state.set_index[l] - lo]
        kl = kit.locus(name) if kit is not None else None
        ref = locus_log_likelihood(profile.loci[name], gs, mp, kl, profile.at_for(name), flags)
        if abs(ref - state.loglik[l]) > 1e-9 * max(1.0, abs(ref)):
            raise AssertionError(f"{name}: kernel and reference likelihood disagree")


def run_chain(profile: EvidenceProfile, noc: int, config: McmcConfig, compiled: CompiledLoci,
              seed: np.random.SeedSequence, kit: KitDefinition | None = None) -> _ChainOutput:
    flags = config.flags
    rng = np.random.default_rng(seed)
    state = initialize_chain(profile, noc, config, compiled)
    par = pack_constants(flags, flags.drop_in_rate, flags.drop_in_lambda)
    blocks = _blocks(config)
    n_sets = compiled.n_sets
    starts = compiled.locus_set_start[:-1]
    multi = np.flatnonzero(n_sets > 1)
    total = config.burn_in + config.post_burn

    counts = np.zeros(len(compiled.set_locus), dtype=np.int64)
    t_sum = np.zeros(noc)
    t_sq = np.zeros(noc)
    d_sum = np.zeros(noc)
    prop_sum = np.zeros(noc)
    amp_sum = np.zeros(compiled.n_loci)
    accepted = {b: 0 for b in blocks + ["genotype"]}
    proposed = {b: 0 for b in blocks + ["genotype"]}
    sign_changes = 0
    last_sign = 0.0
    trace = []

    for it in range(total):
        post = it >= config.burn_in
        if blocks:
            block = blocks[it % len(blocks)]
            cand = propose_mass(state, rng, config, block)
            proposed[block] += 1
            blocked = (block == "templates" and flags.symmetry_restriction
                       and not symmetry_guard(state.mass.templates, cand.templates))
            if blocked:
                pass
            elif block == "amp":
                # loci are conditionally independent given the amp vector: one MH step each
                lp_new = _amp_log_prior(cand.amp, flags)
                lp_old = _amp_log_prior(state.mass.amp, flags)
                ll_new = compiled.loglik(state.set_index, cand.templates, cand.degradations,
                                         cand.amp, cand.c2_allele, cand.c2_stutter, par)
                ok = metropolis_accept(state.loglik + lp_old, ll_new + lp_new, rng)
                state.mass.amp = np.where(ok, cand.amp, state.mass.amp)
                state.loglik = np.where(ok, ll_new, state.loglik)
                state.log_prior = log_prior(state.mass, flags)
                accepted[block] += int(ok.sum()) / max(1, len(ok))
            else:
                lp = log_prior(cand, flags)
                if lp > -math.inf:
                    ll = compiled.loglik(state.set_index, cand.templates, cand.degradations,
                                         cand.amp, cand.c2_allele, cand.c2_stutter, par)
                    if metropolis_accept(state.log_post, float(ll.sum()) + lp, rng):
                        state.mass, state.loglik, state.log_prior = cand, ll, lp
                        accepted[block] += 1

        if len(multi):
            local = propose_genotype(n_sets[multi], rng)
            cand_ids = state.set_index.copy()
            cand_ids[multi] = starts[multi] + local
            m = state.mass
            ll_c = compiled.loglik(cand_ids[multi], m.templates, m.degradations, m.amp,
                                   m.c2_allele, m.c2_stutter, par)
            ok = metropolis_accept(state.loglik[multi], ll_c, rng)
            state.set_index[multi] = np.where(ok, cand_ids[multi], state.set_index[multi])
            state.loglik[multi] = np.where(ok, ll_c, state.loglik[multi])
            proposed["genotype"] += 1
            accepted["genotype"] += int(ok.sum()) / len(multi)

        if config.debug and it % 1000 == 0:
            _check_cache(state, compiled, profile, kit, flags, par)

        if post:
            t = state.mass.templates
            counts[state.set_index] += 1
            t_sum += t
            t_sq += t * t
            d_sum += state.mass.degradations
            prop_sum += t / t.sum()
            amp_sum += state.mass.amp
            if noc > 1:
                s = math.copysign(1.0, t[0] - t[1])
                if last_sign and s != last_sign:
                    sign_changes += 1
                last_sign = s
            if config.trace_every and (it - config.burn_in) % config.trace_every == 0:
                trace.append(t.copy())

    return _ChainOutput(counts, t_sum, t_sq, d_sum, prop_sum, amp_sum, accepted, proposed,
                        sign_changes, np.asarray(trace))


def deconvolve(profile: EvidenceProfile, noc: int, config: McmcConfig,
               kit: KitDefinition | None = None, case_id: str = "",
               workers: int = 1) -> DeconvolutionResult:
    """Run ``config.chains`` independent chains and pool genotype-set visit counts.

    Results depend only on (inputs, config, seed, case_id): chains get
    sub-seeds derived from those and are merged by chain index.
    """
    compiled = prepare(profile, noc, config.flags, kit)
    seeds = [chain_seed(config.seed, c, case_id) for c in range(config.chains)]
    if workers > 1 and config.chains > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outs = list(pool.map(lambda s: run_chain(profile, noc, config, compiled, s, kit), seeds))
    else:
        outs = [run_chain(profile, noc, config, compiled, s, kit) for s in seeds]
    return _assemble(profile, noc, config, compiled, outs)


def _assemble(profile, noc, config, compiled, outs) -> DeconvolutionResult:
    n = config.post_burn * len(outs)
    counts = sum(o.counts for o in outs)
    observed = {name: profile.loci[name].alleles for name in compiled.loci}

    def weights(cnt):
        return {
            name: normalize_weights(
                zip(compiled.sets[l], cnt[compiled.locus_set_start[l]:compiled.locus_set_start[l + 1]]),
                name, observed[name])
            for l, name in enumerate(compiled.loci)
        }

    pooled = weights(counts)
    per_chain = [weights(o.counts) for o in outs]
    variance = {}
    for name in compiled.loci:
        keys = [gs for gs, _ in pooled[name].entries]
        var = {}
        for gs in keys:
            ws = [pc[name].weight_of(gs) for pc in per_chain]
            var[str(gs)] = float(np.var(ws, ddof=1)) if len(ws) > 1 else 0.0
        variance[name] = var
    t_sum = sum(o.t_sum for o in outs)
    t_sq = sum(o.t_sq for o in outs)
    t_mean = t_sum / n
    t_sd = np.sqrt(np.maximum(t_sq / n - t_mean ** 2, 0.0))
    acc = {}
    for key in outs[0].accepted:
        prop = sum(o.proposed[key] for o in outs)
        acc[key] = sum(o.accepted[key] for o in outs) / prop if prop else 0.0
    return DeconvolutionResult(
        loci=list(compiled.loci), noc=noc, weights=pooled, chain_weights=per_chain,
        weight_variance=variance, template_mean=list(t_mean), template_sd=list(t_sd),
        degradation_mean=list(sum(o.d_sum for o in outs) / n),
        mixture_proportions=list(sum(o.prop_sum for o in outs) / n),
        amp_mean=dict(zip(compiled.loci, sum(o.amp_sum for o in outs) / n)),
        acceptance=acc, sign_changes=[o.sign_changes for o in outs],
        traces=[o.trace for o in outs], flags_name=config.flags.name, seed=config.seed,
    )


# ---------------------------------------------------------------------------
# grid oracle


@dataclass(frozen=True)
class GridSpec:
    """Integration grid for :func:`exhaustive_posterior`.

    Templates are integrated on a uniform grid of ``n_template`` points per
    contributor over a box found by a coarse log-spaced scan; degradation is
    integrated over ``degradations`` (a single 0 means fixed).
    """

    n_template: int = 150
    n_coarse: int = 90
    degradations: tuple[float, ...] = (0.0,)
    cutoff: float = 30.0


@dataclass
class OraclePosterior:
    weights: dict[str, LocusWeights]
    warnings: list[str]


def _grid_points(axes, noc, symmetric, degr):
    mesh = np.meshgrid(*([axes] * noc), indexing="ij")
    t = np.stack([m.ravel() for m in mesh], axis=1)
    if symmetric and noc > 1:
        keep = np.all(t[:, :-1] >= t[:, 1:], axis=1)
        t = t[keep]
    if len(degr) == 1:
        return t, np.full_like(t, degr[0])
    # degradation shared grid per contributor
    dm = np.meshgrid(*([np.asarray(degr)] * noc), indexing="ij")
    d = np.stack([m.ravel() for m in dm], axis=1)
    ti = np.repeat(t, len(d), axis=0)
    di = np.tile(d, (len(t), 1))
    return ti, di


def _grid_log_joint(compiled, grid_t, grid_d, flags, par):
    amp = np.ones(compiled.n_loci)
    per_locus = []
    for l in range(compiled.n_loci):
        ids = np.arange(compiled.locus_set_start[l], compiled.locus_set_start[l + 1])
        per_locus.append(compiled.grid(ids, grid_t, grid_d, amp, flags.c2_allele,
                                       flags.c2_stutter, par))
    marg = [logsumexp(ll, axis=0) for ll in per_locus]
    return per_locus, marg, np.sum(marg, axis=0)


def exhaustive_posterior(profile: EvidenceProfile, noc: int, flags: VersionProfile,
                         kit: KitDefinition | None = None,
                         grid_spec: GridSpec = GridSpec()) -> OraclePosterior:
    """Genotype weights by direct numerical integration over a parameter grid.

    Independent of the sampler: same target (uniform template prior,
    uniform over enumerated sets, symmetry restriction as an ordering
    constraint), integrated deterministically.
    """
    if noc > 2:
        raise ValueError("grid oracle supports noc <= 2")
    if len(profile.nonempty_loci()) > 2:
        raise ValueError("grid oracle supports at most 2 loci")
    if flags.varying_variances or flags.locus_amp_variance:
        raise ValueError("grid oracle needs fixed variance constants and amp efficiency")
    compiled = prepare(profile, noc, flags, kit)
    par = pack_constants(flags, flags.drop_in_rate, flags.drop_in_lambda)
    sym = flags.symmetry_restriction
    degr = tuple(grid_spec.degradations)
    notes = []

    coarse = np.geomspace(5.0, TEMPLATE_MAX * 0.999, grid_spec.n_coarse)
    ct, cd = _grid_points(coarse, noc, sym, degr)
    _, _, joint = _grid_log_joint(compiled, ct, cd, flags, par)
    keep = joint > joint.max() - grid_spec.cutoff
    lo = ct[keep].min(axis=0).min()
    hi = ct[keep].max(axis=0).max()
    step = coarse[1] / coarse[0]
    hi = min(hi * step, TEMPLATE_MAX * 0.999)
    # a contributor that can vanish keeps flat mass down to t = 0
    lo = 0.0 if ct[keep].min() <= coarse[0] else lo / step
    if ct[keep].max() >= coarse[-1]:
        notes.append("posterior mass reaches the upper edge of the template range")

    axes = np.linspace(lo, hi, grid_spec.n_template)
    ft, fd = _grid_points(axes, noc, sym, degr)
    per_locus, marg, joint = _grid_log_joint(compiled, ft, fd, flags, par)
    edge = np.isclose(ft, hi).any(axis=1)
    if lo > 0:
        edge |= np.isclose(ft, lo).any(axis=1)
    z = logsumexp(joint)
    if edge.any() and logsumexp(joint[edge]) - z > math.log(1e-4):
        notes.append("grid too coarse: non-negligible mass on the box boundary")
    # resolution check: neighbouring grid points should not differ wildly
    if grid_spec.n_template < 40:
        notes.append("grid too coarse: fewer than 40 template points per axis")

    out = {}
    for l, name in enumerate(compiled.loci):
        rest = sum((marg[k] for k in range(len(marg)) if k != l), np.zeros_like(joint))
        logw = logsumexp(per_locus[l] + rest[None, :], axis=1) - z
        w = np.exp(logw)
        out[name] = normalize_weights(zip(compiled.sets[l], w), name,
                                      profile.loci[name].alleles, keep_zero=True)
    for msg in notes:
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return OraclePosterior(out, notes)
