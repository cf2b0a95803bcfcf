"""Cross-validation suite: closed forms against the truncated-chain oracle,
bounds against each other, and the simulator against both.

Each check yields a :class:`Record`. A record fails iff
``|expected - observed| > tolerance``; one-sided checks are phrased as a
shortfall (observed) against an expected value of 0.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import bounds as B
from . import zchannel as Z
from .errors import TailMassWarning
from .queue_model import (
    NO_JAMMING,
    SideInfo,
    SystemParams,
    TruncationSpec,
    Uniform,
    baseline_pi20,
    certified_stationary,
    dtmc_stationary_truncated,
    pi_n0_lower_bound,
    sideinfo_box,
    sideinfo_occupancy_arrays,
    uniform_occupancy_arrays,
)
from .sim import SimConfig, channel_stats, coupled_run, simulate

FIG_P = (0.01, 0.2, 0.4, 0.6, 0.8, 0.9)
GRID_ALPHA = tuple(round(0.1 + 0.05 * i, 2) for i in range(18))
ORACLE_P = (0.2, 0.5, 0.8)
ORACLE_ALPHA = (0.3, 0.6, 0.9)
ORACLE_QMAX = 200
ORACLE_TOL = 1e-9
SIM_T, SIM_WARMUP, SIM_SEED = 10**6, 10**4, 20240601
COUPLED_RUNS, COUPLED_T = 100, 10**5


@dataclass
class Record:
    check_id: str
    status: str
    expected: float
    observed: float
    tolerance: float

    def line(self):
        return "\t".join([self.check_id, self.status, _g(self.expected), _g(self.observed), _g(self.tolerance)])


def _g(x):
    return f"{x:.6g}"


def record(check_id, expected, observed, tolerance):
    bad = not (abs(expected - observed) <= tolerance)  # nan fails too
    return Record(check_id, "fail" if bad else "pass", float(expected), float(observed), float(tolerance))


def shortfall(check_id, gaps, tolerance=1e-9):
    """Pass when every gap is >= -tolerance; observed is the worst violation."""
    worst = max([0.0] + [-float(g) for g in gaps])
    return record(check_id, 0.0, worst, tolerance)


def _oracle(params, policy, qmax=ORACLE_QMAX):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TailMassWarning)
        return dtmc_stationary_truncated(params, policy, TruncationSpec(qmax, ORACLE_TOL))


def _occupancy_record(check_id, closed, oracle):
    err = np.abs(np.asarray(closed, dtype=float) - oracle.pi)
    k = int(np.argmax(err))
    r = record(check_id, oracle.pi[k], closed[k], 1e-6)
    if not oracle.certified:
        # a truncated answer cannot vouch for agreement
        r.status = "fail"
    return r


def check_zchannel():
    grid = np.round(np.arange(1, 20) * 0.05, 2)
    err = max(abs(Z.z_capacity_constrained(1.0, c) - Z.z_capacity(c)) for c in grid)
    out = [record("zchannel.capacity_identity", 0.0, err, 1e-9),
           record("zchannel.optimal_weight_half", 0.4, Z.optimal_weight(0.5), 1e-6)]
    u = np.linspace(0.0, 1.0, 2001)
    bad = 0
    for c in np.round(np.arange(0, 20) * 0.05, 2):
        r = Z.z_rate(u, c)
        um = Z.optimal_weight(c)
        d = np.diff(r)
        bad += int(np.sum(d[u[1:] <= um] < -1e-12) + np.sum(d[u[:-1] >= um] > 1e-12))
    out.append(record("zchannel.unimodal", 0, bad, 0))
    out.append(record("zchannel.crossover_k2_exact", 0.0,
                      max(abs(Z.crossover_k(2, p) - p / (2 - p)) for p in np.linspace(0.01, 0.99, 99)), 0.0))
    mono = [Z.crossover_k(k, p) - Z.crossover_k(k - 1, p) for p in np.linspace(0.05, 0.95, 19) for k in range(2, 9)]
    out.append(shortfall("zchannel.crossover_monotone", mono, 0.0))
    return out


def check_uniform_closed_form(closed=uniform_occupancy_arrays):
    out = []
    for p in ORACLE_P:
        for a in ORACLE_ALPHA:
            params = SystemParams.from_alpha(a, p)
            beta = 1.0 - a
            for tag, q in (("0", 0.0), ("beta/2", beta / 2), ("beta", beta)):
                oracle = _oracle(params, Uniform(q))
                out.append(_occupancy_record(f"occupancy.uniform[p={p},alpha={a},q={tag}]",
                                             closed(params, q), oracle))
    return out


def check_sideinfo_closed_form(closed=sideinfo_occupancy_arrays):
    out = []
    for a in (0.6, 0.8):
        params = SystemParams.from_alpha(a, 0.5)
        qb, wb = sideinfo_box(params)
        for q in (0.0, qb / 2):
            for w in (0.0, qb, wb / 2):
                oracle = _oracle(params, SideInfo(q, w))
                out.append(_occupancy_record(f"occupancy.sideinfo[p=0.5,alpha={a},q={q:.4g},w={w:.4g}]",
                                             closed(params, q, w), oracle))
    return out


def check_baselines():
    out = []
    params = SystemParams.from_alpha(0.8, 0.5)
    base = certified_stationary(params, NO_JAMMING)
    out.append(record("baseline.pi20_closed_form_vs_oracle", base.pi[2], baseline_pi20(params), 1e-6))
    for n in (2, 3):
        for p in (0.2, 0.5):
            for a in (0.3, 0.6, 0.8):
                prm = SystemParams.from_alpha(a, p, n)
                exact = certified_stationary(prm, NO_JAMMING).pi[n]
                out.append(shortfall(f"baseline.pi_n0_lower_bound[n={n},p={p},alpha={a}]",
                                     [exact - pi_n0_lower_bound(n, p, prm.lam)], 1e-6))
    return out


def check_stationary_coupling():
    """Jamming never lowers the all-backlogged probability of the exact chain."""
    gaps = []
    for p in ORACLE_P:
        for a in ORACLE_ALPHA:
            params = SystemParams.from_alpha(a, p)
            base = _oracle(params, NO_JAMMING)
            beta = 1.0 - a
            for q in (beta / 4, beta / 2, 3 * beta / 4):
                gaps.append(_oracle(params, Uniform(q)).pi[2] - base.pi[2] + 1e-6)
    return [shortfall("occupancy.jamming_raises_all_busy", gaps, 0.0)]


def _grid_rows(executor=None):
    pts = [(p, a) for p in FIG_P for a in GRID_ALPHA]
    mapper = executor.map if executor is not None else map
    return list(mapper(_row_for, pts))


def _row_for(pt):
    return B.bounds_row(2, pt[0], pt[1])


def check_bounds(executor=None):
    out = []
    params = SystemParams.from_alpha(0.8, 0.5)
    out.append(record("bounds.s1.lb_strategy1[p=0.5,alpha=0.8]", 0.28714, B.lb_strategy1(params).rate, 1e-3))
    out.append(record("bounds.s2.lb_strategy2[p=0.5,alpha=0.8]", 0.28714, B.lb_strategy2(params).rate, 1e-3))
    out.append(record("bounds.s3.rate_sideinfo[q=0,w=0.5]", 0.16, B.rate_sideinfo(params, 0.0, 0.5), 1e-3))
    lb3 = B.lb_strategy3(params).rate
    out.append(shortfall("bounds.s3.lb_strategy3_dominates_candidate", [lb3 - B.rate_sideinfo(params, 0.2, 0.0)]))
    ub = B.ub_two_user(params)
    out.append(record("bounds.ub.ub[p=0.5,alpha=0.8]", 0.58571, ub.rate, 1e-3))
    out.append(record("bounds.ub.beta_bar_raw[p=0.5,alpha=0.8]", 1.5417, ub.notes["beta_bar_raw"], 1e-3))

    rows = _grid_rows(executor)
    out.append(shortfall("bounds.s2.lb2_ge_lb1_grid", [r.lb_s2 - r.lb_s1 for r in rows]))
    out.append(shortfall("bounds.s1.lb1_le_ub_grid", [min(r.ub, 1.0) - r.lb_s1 for r in rows]))
    out.append(shortfall("bounds.s3.lb3_le_ub_grid", [min(r.ub, 1.0) - r.lb_s3 for r in rows]))
    out.append(shortfall("bounds.ub.lb2_le_ub_grid", [min(r.ub, 1.0) - r.lb_s2 for r in rows]))

    tail = [SystemParams.from_alpha(a, 0.5) for a in (0.9, 0.99, 0.999)]
    ubs = [B.ub_two_user(t).rate for t in tail]
    lbs = [B.lb_strategy2(t).rate for t in tail]
    out.append(record("bounds.ub.ub_strictly_decreasing_heavy_load", 0, int(np.sum(np.diff(ubs) >= 0)), 0))
    out.append(record("bounds.s2.lb2_strictly_decreasing_heavy_load", 0, int(np.sum(np.diff(lbs) >= 0)), 0))
    out.append(shortfall("bounds.ub.ub_below_0.05_at_0.999", [0.05 - ubs[-1]], 0.0))
    out.append(shortfall("bounds.s2.lb2_below_0.02_at_0.999", [0.02 - lbs[-1]], 0.0))

    out.append(record("bounds.n_user.lb_n1_reduces_at_n2", B.lb_strategy1(params).rate, B.lb_n_strategy1(params).rate, 1e-3))
    out.append(record("bounds.n_user.lb_n2_reduces_at_n2", B.lb_strategy2(params).rate, B.lb_n_strategy2(params).rate, 1e-3))
    heavy = SystemParams.from_alpha(0.999, 0.5)
    out.append(shortfall("bounds.n_user.variant_b_below_0.06_at_0.999", [0.06 - B.ub_n_user(heavy).notes["variant_b"]], 0.0))
    p3 = SystemParams.from_alpha(0.8, 0.5, 3)
    ub3 = B.ub_n_user(p3).rate
    l1, l2 = B.lb_n_strategy1(p3).rate, B.lb_n_strategy2(p3).rate
    out.append(shortfall("bounds.n_user.n3_ub_dominates_lbs", [ub3 - l1, ub3 - l2]))
    out.append(shortfall("bounds.n_user.n3_lb2_ge_lb1", [l2 - l1]))
    return out


def check_simulation():
    out = []
    params = SystemParams.from_alpha(0.8, 0.5)
    for q in (0.0, 0.1):
        st = simulate(params, Uniform(q), SimConfig(SIM_T, SIM_WARMUP, SIM_SEED))
        emp, se = st.occupancy.pi, st.occupancy_se
        oracle = certified_stationary(params, Uniform(q))
        closed = np.asarray(uniform_occupancy_arrays(params, q), dtype=float)
        for name, ref in (("closed_form", closed), ("oracle", oracle.pi)):
            z = np.abs(emp - ref) / se
            k = int(np.argmax(z))
            out.append(record(f"sim.occupancy_vs_{name}[q={q}]", ref[k], emp[k], 4 * se[k]))
        jf = st.jam_fraction
        for k in range(1, 3):
            m = st.active_by_state[k]
            if m >= 1000:
                sd = math.sqrt(max(q * (1 - q), 1e-300) / m)
                out.append(record(f"sim.jam_fraction[q={q},k={k}]", q, jf[k], 4 * sd))
        if q == 0.1:
            cs = channel_stats(st)
            out.append(record("sim.crossover_vs_closed_form", 0.2857, cs["crossover_hat"], 4 * cs["crossover_se"]))
            out.append(record("sim.mi_active_vs_closed_form", 0.1635, cs["mi_per_active_slot"], 0.005))
            pi = oracle.pi
            act = pi[2] * (1 - params.phat**2) + pi[1] * params.p
            c_pred = pi[2] * params.p**2 / act
            out.append(record("sim.crossover_vs_oracle", c_pred, cs["crossover_hat"], 4 * cs["crossover_se"]))
            mi_pred = Z.binary_entropy(q + (1 - q) * c_pred) - (1 - q) * Z.binary_entropy(c_pred)
            out.append(record("sim.mi_active_vs_oracle", mi_pred, cs["mi_per_active_slot"], 0.005))
            out.append(record("sim.active_fraction_vs_oracle", act, cs["active_fraction"],
                              4 * cs["active_fraction_se"]))
    return out


def _coupled_one(seed):
    params = SystemParams.from_alpha(0.8, 0.5)
    rep = coupled_run(params, Uniform(0.15), SimConfig(COUPLED_T, 0, seed))
    return rep.violations, rep.busy_all_jammed - rep.busy_all_unjammed


def check_coupling(executor=None):
    mapper = executor.map if executor is not None else map
    res = list(mapper(_coupled_one, range(1, COUPLED_RUNS + 1)))
    return [record("coupling.queue_dominance_violations", 0, sum(v for v, _ in res), 0),
            shortfall("coupling.busy_all_jammed_ge_unjammed", [g for _, g in res], 0.0)]


def run_all(executor=None, uniform_closed=uniform_occupancy_arrays, sideinfo_closed=sideinfo_occupancy_arrays):
    """Every check, in a fixed order. The closed forms can be swapped for testing."""
    out = []
    out += check_zchannel()
    out += check_uniform_closed_form(uniform_closed)
    out += check_sideinfo_closed_form(sideinfo_closed)
    out += check_baselines()
    out += check_stationary_coupling()
    out += check_bounds(executor)
    out += check_simulation()
    out += check_coupling(executor)
    return out
