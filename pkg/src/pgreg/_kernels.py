"""Compiled likelihood evaluation over flattened genotype-set tables.

Mirrors ``peak_model.locus_log_likelihood`` exactly; the test suite checks the
two against each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .genotype_space import GenotypeSet
from .peak_model import (DEGRADATION_ANCHOR_BP, LikelihoodContractError,
                         locus_components)
from .profile_model import KitLocus, LocusProfile

_SQRT2 = math.sqrt(2.0)
_LOG_2PI = math.log(2.0 * math.pi)
_HALF_LOG_2PI = 0.5 * _LOG_2PI

# slots of the packed model-constant vector
P_QE_ON, P_QE_FLOOR, P_MODEL, P_REFINED, P_LAMBDA, P_LAMBDA_X, P_RATE, P_UNDERSIZED = range(8)


def pack_constants(flags, drop_in_rate: float, drop_in_lambda: float) -> np.ndarray:
    return np.array([
        1.0 if flags.qe_floor_on else 0.0,
        flags.qe_floor,
        0.0 if flags.composite_variance == "weighted_average" else 1.0,
        1.0 if flags.drop_in_variant == "refined" else 0.0,
        drop_in_lambda,
        flags.lambda_extra,
        drop_in_rate,
        1.0 if flags.undersized_stutter_restriction else 0.0,
    ])


@njit(cache=True, nogil=True)
def log_ndtr(z):
    if z > 0.0:
        return math.log1p(-0.5 * math.erfc(z / _SQRT2))
    if z > -30.0:
        return math.log(0.5 * math.erfc(-z / _SQRT2))
    z2 = z * z
    series = 1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2)
    return -0.5 * z2 - math.log(-z) - _HALF_LOG_2PI + math.log(series)


@njit(cache=True, nogil=True)
def set_loglik(g, templates, degr, amp_l, c2a, c2s, par, at, log_at,
               set_pos_start, set_ndrop, pos_obs, pos_dropin, pos_comp_start,
               comp_contrib, comp_mwt, comp_coef, comp_stutter):
    qe_on = par[0] > 0.5
    floor = par[1]
    shifted = par[2] > 0.5
    refined = par[3] > 0.5
    lam = par[4]
    lam_x = par[5]
    rate = par[6]
    undersized = par[7] > 0.5
    total = 0.0
    for pp in range(set_pos_start[g], set_pos_start[g + 1]):
        sum_e = 0.0
        sum_ev = 0.0
        sum_var = 0.0
        v = 0.0
        nc = 0
        for c in range(pos_comp_start[pp], pos_comp_start[pp + 1]):
            n = comp_contrib[c]
            e = templates[n] * amp_l * comp_coef[c] * math.exp(
                -degr[n] * (comp_mwt[c] - DEGRADATION_ANCHOR_BP))
            if e <= 0.0:
                continue
            c2 = c2s if comp_stutter[c] else c2a
            if qe_on:
                vc = c2 / max(e, floor)
            else:
                vc = c2 / e
            sum_e += e
            sum_ev += e * vc
            sum_var += e * e * math.expm1(vc)
            v = vc
            nc += 1
        if nc > 1:
            if shifted:
                v = math.log1p(sum_var / (sum_e * sum_e))
            else:
                v = sum_ev / sum_e
        obs = pos_obs[pp]
        if pos_dropin[pp]:
            excess = obs - at
            term = math.log(rate) + math.log(lam) - lam * excess
            if refined:
                term -= lam_x * excess
            term += math.log(obs)
            if nc > 0:
                lo = math.log(obs)
                le = math.log(sum_e)
                mixed = term + log_ndtr((lo - le) / math.sqrt(v))
                if undersized and obs < sum_e:
                    pure = -0.5 * (_LOG_2PI + math.log(v)) - (lo - le) ** 2 / (2.0 * v)
                    mixed = min(mixed, pure)
                term = mixed
            total += term
        elif obs > 0.0:
            if nc == 0:
                return -np.inf
            d = math.log(obs) - math.log(sum_e)
            total += -0.5 * (_LOG_2PI + math.log(v)) - d * d / (2.0 * v)
        elif nc > 0:
            total += log_ndtr((log_at - math.log(sum_e)) / math.sqrt(v))
    if set_ndrop[g] == 0:
        total += math.log1p(-rate)
    return total


@njit(cache=True, nogil=True)
def loci_loglik(set_ids, templates, degr, amp, c2a, c2s, par, locus_at, set_locus,
                set_pos_start, set_ndrop, pos_obs, pos_dropin, pos_comp_start,
                comp_contrib, comp_mwt, comp_coef, comp_stutter):
    out = np.empty(set_ids.shape[0])
    for i in range(set_ids.shape[0]):
        g = set_ids[i]
        l = set_locus[g]
        at = locus_at[l]
        out[i] = set_loglik(g, templates, degr, amp[l], c2a, c2s, par, at, math.log(at),
                            set_pos_start, set_ndrop, pos_obs, pos_dropin, pos_comp_start,
                            comp_contrib, comp_mwt, comp_coef, comp_stutter)
    return out


@njit(cache=True, nogil=True)
def grid_loglik(set_ids, grid_t, grid_d, amp, c2a, c2s, par, locus_at, set_locus,
                set_pos_start, set_ndrop, pos_obs, pos_dropin, pos_comp_start,
                comp_contrib, comp_mwt, comp_coef, comp_stutter):
    """Log-likelihood of each set at each grid point; returns (sets, points)."""
    ng = grid_t.shape[0]
    out = np.empty((set_ids.shape[0], ng))
    for i in range(set_ids.shape[0]):
        g = set_ids[i]
        l = set_locus[g]
        at = locus_at[l]
        log_at = math.log(at)
        for k in range(ng):
            out[i, k] = set_loglik(g, grid_t[k], grid_d[k], amp[l], c2a, c2s, par, at, log_at,
                                   set_pos_start, set_ndrop, pos_obs, pos_dropin,
                                   pos_comp_start, comp_contrib, comp_mwt, comp_coef,
                                   comp_stutter)
    return out


@dataclass
class CompiledLoci:
    """Flattened genotype-set tables for a list of loci."""

    loci: list[str]
    sets: list[list[GenotypeSet]]
    locus_at: np.ndarray
    locus_set_start: np.ndarray
    set_locus: np.ndarray
    set_pos_start: np.ndarray
    set_ndrop: np.ndarray
    pos_obs: np.ndarray
    pos_dropin: np.ndarray
    pos_comp_start: np.ndarray
    comp_contrib: np.ndarray
    comp_mwt: np.ndarray
    comp_coef: np.ndarray
    comp_stutter: np.ndarray

    @property
    def n_loci(self) -> int:
        return len(self.loci)

    @property
    def n_sets(self) -> np.ndarray:
        return np.diff(self.locus_set_start)

    def tables(self):
        return (self.locus_at, self.set_locus, self.set_pos_start, self.set_ndrop,
                self.pos_obs, self.pos_dropin, self.pos_comp_start, self.comp_contrib,
                self.comp_mwt, self.comp_coef, self.comp_stutter)

    def loglik(self, set_ids, templates, degr, amp, c2a, c2s, par) -> np.ndarray:
        return loci_loglik(np.asarray(set_ids, dtype=np.int64), np.asarray(templates, float),
                           np.asarray(degr, float), np.asarray(amp, float), float(c2a),
                           float(c2s), par, *self.tables())

    def grid(self, set_ids, grid_t, grid_d, amp, c2a, c2s, par) -> np.ndarray:
        return grid_loglik(np.asarray(set_ids, dtype=np.int64), np.ascontiguousarray(grid_t),
                           np.ascontiguousarray(grid_d), np.asarray(amp, float), float(c2a),
                           float(c2s), par, *self.tables())


def compile_loci(loci: list[LocusProfile], sets: list[list[GenotypeSet]],
                 kit_loci: list[KitLocus | None], ats: list[float], flags) -> CompiledLoci:
    set_locus, set_pos_start, set_ndrop = [], [0], []
    pos_obs, pos_dropin, pos_comp_start = [], [], [0]
    comp_contrib, comp_mwt, comp_coef, comp_stutter = [], [], [], []
    locus_set_start = [0]
    for li, (lp, lsets, kl) in enumerate(zip(loci, sets, kit_loci)):
        heights = lp.heights()
        for gs in lsets:
            comps = locus_components(gs, lp, kl, flags)
            drop = set(gs.drop_in)
            order = list(heights) + [k for k in comps if k not in heights]
            for pos in order:
                clist = comps.get(pos, [])
                obs = heights.get(pos, 0.0)
                if obs > 0 and not clist and pos not in drop:
                    raise LikelihoodContractError(
                        f"{lp.locus}: peak {pos} unexplained by {gs}")
                pos_obs.append(obs)
                pos_dropin.append(pos in drop)
                for c in clist:
                    comp_contrib.append(c.contributor)
                    comp_mwt.append(c.parent_mwt)
                    comp_coef.append(c.coef)
                    comp_stutter.append(c.is_stutter)
                pos_comp_start.append(len(comp_contrib))
            set_locus.append(li)
            set_ndrop.append(len(gs.drop_in))
            set_pos_start.append(len(pos_obs))
        locus_set_start.append(len(set_locus))
    return CompiledLoci(
        loci=[lp.locus for lp in loci],
        sets=[list(s) for s in sets],
        locus_at=np.asarray(ats, dtype=float),
        locus_set_start=np.asarray(locus_set_start, dtype=np.int64),
        set_locus=np.asarray(set_locus, dtype=np.int64),
        set_pos_start=np.asarray(set_pos_start, dtype=np.int64),
        set_ndrop=np.asarray(set_ndrop, dtype=np.int64),
        pos_obs=np.asarray(pos_obs, dtype=float),
        pos_dropin=np.asarray(pos_dropin, dtype=np.bool_),
        pos_comp_start=np.asarray(pos_comp_start, dtype=np.int64),
        comp_contrib=np.asarray(comp_contrib, dtype=np.int64),
        comp_mwt=np.asarray(comp_mwt, dtype=float),
        comp_coef=np.asarray(comp_coef, dtype=float),
        comp_stutter=np.asarray(comp_stutter, dtype=np.bool_),
    )
