"""Seeded slot-level Monte Carlo of the legitimate queues and the jammer.

Random stream contract: one ``PCG64(seed)`` generator per run, consumed as
``2n + 1`` uniforms per slot in the order arrival_1..arrival_n,
attempt_1..attempt_n, jam. Attempt coins are drawn for every user every slot
and only used when that user is backlogged, so a coupled jammed/unjammed pair
is just a replay of the same stream.
"""

import csv
import hashlib
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats as sps

from . import _kernels
from .errors import DomainError, InsufficientDataError
from .queue_model import OccupancyDist, SystemParams, jam_vector

MIN_ACTIVE = 10_000


@dataclass(frozen=True)
class SimConfig:
    horizon: int
    warmup: int = 0
    seed: int = 0
    record_trace: bool = False
    windows: int = 50
    chunk: int = 1 << 16

    def __post_init__(self):
        if not 0 <= self.warmup < self.horizon:
            raise DomainError(f"need horizon > warmup >= 0, got {self.horizon}, {self.warmup}")
        if not 0 <= self.seed < 2**64:
            raise DomainError("seed must be an unsigned 64-bit integer")
        if self.windows < 1 or self.chunk < 1:
            raise DomainError("windows and chunk must be positive")


@dataclass
class SimStats:
    params: SystemParams
    cfg: SimConfig
    occ_windows: np.ndarray  # (W, n+1) post-warmup slots per backlog count
    joint_windows: np.ndarray  # (W, 4) active-slot counts, index 2*jam + collision
    window_max_queue: np.ndarray  # (W,) mean over slots of max_i Q_i
    active_by_state: np.ndarray
    jam_by_state: np.ndarray
    arrivals: int
    departures: int
    q_end: np.ndarray
    queue_mean: float
    queue_max: int
    verdict: str = "inconclusive"
    trace: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def slots(self):
        return int(self.occ_windows.sum())

    @property
    def occupancy(self):
        c = self.occ_windows.sum(axis=0)
        return OccupancyDist(c / c.sum(), certified=self.verdict == "stable", source="simulation")

    @property
    def occupancy_se(self):
        """Batch-means standard error of each occupancy fraction."""
        return _batch_se(self.occ_windows, self.occ_windows.sum(axis=1, keepdims=True))

    @property
    def joint(self):
        """2x2 counts over active slots, indexed [jam][collision]."""
        return self.joint_windows.sum(axis=0).reshape(2, 2)

    @property
    def active_slots(self):
        return int(self.joint_windows.sum())

    @property
    def active_fraction(self):
        return self.active_slots / self.slots

    @property
    def jam_fraction(self):
        """Empirical jam probability per backlog count (nan where never active)."""
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.jam_by_state / self.active_by_state

    @property
    def certified(self):
        return self.verdict == "stable"

    def digest(self):
        h = hashlib.sha256()
        for a in (self.occ_windows, self.joint_windows, self.window_max_queue, self.active_by_state,
                  self.jam_by_state, self.q_end, np.array([self.arrivals, self.departures, self.queue_max])):
            h.update(np.ascontiguousarray(a).tobytes())
        if self.trace is not None:
            h.update(np.ascontiguousarray(self.trace).tobytes())
        return h.hexdigest()


def _batch_se(num, den):
    """Standard error of a ratio estimate from its per-window ratios."""
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.asarray(num, dtype=float) / den
    if r.shape[0] == 0:
        return np.full(r.shape[1:], np.nan)
    r = r[np.isfinite(r).reshape(r.shape[0], -1).all(axis=1)]
    if r.shape[0] < 2:
        return np.full(r.shape[1:], np.nan)
    return r.std(axis=0, ddof=1) / math.sqrt(r.shape[0])


def _uniform_blocks(seed, n, horizon, chunk):
    rng = np.random.Generator(np.random.PCG64(seed))
    done = 0
    while done < horizon:
        m = min(chunk, horizon - done)
        yield done, rng.random((m, 2 * n + 1))
        done += m


def _layout(cfg):
    post = cfg.horizon - cfg.warmup
    W = min(cfg.windows, post)
    return W, math.ceil(post / W)


def simulate(params, policy, cfg):
    """Run one seeded trajectory from empty queues and aggregate post-warmup slots."""
    n = params.n
    jamq = jam_vector(policy, n).astype(np.float64)
    W, wlen = _layout(cfg)
    occ_w = np.zeros((W, n + 1), np.int64)
    joint_w = np.zeros((W, 4), np.int64)
    qmax_w = np.zeros(W, np.float64)
    active_k = np.zeros(n + 1, np.int64)
    jam_k = np.zeros(n + 1, np.int64)
    flow = np.zeros(3, np.int64)
    qsum = np.zeros(1, np.float64)
    Q = np.zeros(n, np.int64)
    trace = np.zeros((cfg.horizon, n + _kernels.TRACE_EXTRA), np.int64) if cfg.record_trace else None
    dummy = np.zeros((1, n + _kernels.TRACE_EXTRA), np.int64)
    for start, U in _uniform_blocks(cfg.seed, n, cfg.horizon, cfg.chunk):
        tr = trace[start:start + U.shape[0]] if trace is not None else dummy
        _kernels.sim_chunk(U, Q, params.lam, params.p, jamq, start, cfg.warmup, wlen, occ_w, joint_w,
                           qmax_w, active_k, jam_k, flow, qsum, tr, trace is not None)
    per_window = occ_w.sum(axis=1)
    st = SimStats(
        params=params, cfg=cfg, occ_windows=occ_w, joint_windows=joint_w,
        window_max_queue=qmax_w / np.maximum(per_window, 1), active_by_state=active_k,
        jam_by_state=jam_k, arrivals=int(flow[0]), departures=int(flow[1]), q_end=Q.copy(),
        queue_mean=float(qsum[0]) / (n * per_window.sum()), queue_max=int(flow[2]), trace=trace,
    )
    st.verdict = trend_verdict(st.window_max_queue)
    return st


def trend_verdict(window_means):
    """Classify a run from the per-window mean of the longest queue.

    ``unstable`` when the fitted slope exceeds four standard errors and the
    fitted rise is material; ``stable`` when no significant rise shows and no
    window strays far above the typical level; ``inconclusive`` otherwise.
    """
    y = np.asarray(window_means, dtype=float)
    if y.shape[0] < 3 or not np.any(y > 0):
        return "stable"
    x = np.arange(y.shape[0], dtype=float)
    fit = sps.linregress(x, y)
    slope, se = fit.slope, fit.stderr
    rise = slope * (y.shape[0] - 1)
    level = float(y.mean())
    significant = slope > 4.0 * se
    if significant and rise > max(2.0, 0.5 * level):
        return "unstable"
    bounded = y.max() <= 4.0 * np.median(y) + 10.0
    if not significant and bounded:
        return "stable"
    if significant and rise <= 0.25 * level and bounded:
        return "stable"
    return "inconclusive"


def stability_probe(params, policy, cfg):
    """``stable``, ``unstable`` or ``inconclusive`` from a simulated queue trend."""
    return simulate(params, policy, cfg).verdict


def plugin_mi(counts):
    """Plug-in mutual information (bits) of a 2-D contingency table."""
    c = np.asarray(counts, dtype=float)
    total = c.sum()
    if total <= 0:
        return 0.0
    pxy = c / total
    px = pxy.sum(axis=1, keepdims=True)
    py = pxy.sum(axis=0, keepdims=True)
    nz = pxy > 0
    return float(max(0.0, np.sum(pxy[nz] * np.log2(pxy[nz] / (px @ py)[nz]))))


def channel_stats(stats, min_active=MIN_ACTIVE):
    """Empirical covert-channel statistics of a run.

    ``crossover_hat`` is P(collision | not jammed, active); mutual information is
    the plug-in estimate on the (jam, collision) table of active slots.
    Batch-means standard errors accompany each estimate.
    """
    if stats.active_slots < max(min_active, 1):
        raise InsufficientDataError(f"{stats.active_slots} active slots < {min_active}")
    joint = stats.joint
    clean = joint[0].sum()
    crossover = joint[0, 1] / clean if clean else float("nan")
    mi_active = plugin_mi(joint)
    af = stats.active_fraction
    jw = stats.joint_windows
    per_w_active = jw.sum(axis=1)
    ok = (per_w_active > 0) & (jw[:, 0] + jw[:, 1] > 0)
    mi_w = np.array([plugin_mi(r.reshape(2, 2)) for r in jw[ok]])
    return {
        "crossover_hat": float(crossover),
        "crossover_se": float(_batch_se(jw[ok, 1], jw[ok, 0] + jw[ok, 1])),
        "active_fraction": af,
        "active_fraction_se": float(_batch_se(per_w_active, stats.occ_windows.sum(axis=1))),
        "mi_per_active_slot": mi_active,
        "mi_per_active_slot_se": float(mi_w.std(ddof=1) / math.sqrt(mi_w.size)) if mi_w.size > 1 else float("nan"),
        "mi_per_slot": mi_active * af,
    }


@dataclass
class CoupledReport:
    slots: int
    violations: int
    busy_all_jammed: float
    busy_all_unjammed: float

    @property
    def dominance_holds(self):
        return self.violations == 0

    @property
    def busy_order_holds(self):
        return self.busy_all_jammed >= self.busy_all_unjammed


def coupled_run(params, policy, cfg):
    """Jammed and unjammed systems driven by the same arrival and attempt coins.

    Reports slots where some unjammed queue exceeded its jammed twin, and the
    time fraction with every queue backlogged in each system.
    """
    n = params.n
    jamq = jam_vector(policy, n).astype(np.float64)
    QJ = np.zeros(n, np.int64)
    QU = np.zeros(n, np.int64)
    counts = np.zeros(4, np.int64)
    for start, U in _uniform_blocks(cfg.seed, n, cfg.horizon, cfg.chunk):
        _kernels.coupled_chunk(U, QJ, QU, params.lam, params.p, jamq, start, cfg.warmup, counts)
    post = int(counts[3])
    return CoupledReport(slots=post, violations=int(counts[0]),
                         busy_all_jammed=counts[1] / post, busy_all_unjammed=counts[2] / post)


def write_trace_csv(stats, path):
    """One row per slot; idle slots carry ``-`` as Bob's symbol."""
    if stats.trace is None:
        raise DomainError("run was not configured with record_trace")
    n = stats.params.n
    header = ["slot"] + [f"q{i + 1}" for i in range(n)] + ["attempts_bitmask", "active", "jam", "collision", "bob_symbol"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in stats.trace.tolist():
            w.writerow(row[:-1] + ["-" if row[-1] < 0 else row[-1]])
