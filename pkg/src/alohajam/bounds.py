"""Achievable rates and ergodic upper bounds for the covert channel.

Rates are in bits per raw slot. Every maximization runs a grid over the
feasible box, then a bounded scalar refinement around the best grid cell.
The searches also seed the policies used by weaker strategies, so an
ordering such as ``lb_strategy2 >= lb_strategy1`` holds by construction and
not only up to search error.
"""

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DomainError, UncertifiedError
from .queue_model import (
    TruncationSpec,
    Uniform,
    Vector,
    baseline_no_jamming,
    baseline_pi20,
    occupancy_model,
    pi_n0_lower_bound,
    sideinfo_box,
    sideinfo_occupancy_arrays,
    uniform_occupancy_arrays,
)
from .zchannel import binary_entropy, crossover_k, optimal_weight, z_capacity_constrained, z_rate

STEP_1D = 1e-3
STEP_2D = 5e-3
STEP_VEC = 1e-2
# n > 2 evaluates a truncated chain per point
STEP_1D_MANY = 2e-2
STEP_VEC_MANY = 5e-2
SEARCH_QMAX_MANY = 25


@dataclass
class BoundResult:
    rate: float
    optimizer: dict = field(default_factory=dict)
    budget: Optional[float] = None
    notes: dict = field(default_factory=dict)


def _two_user(params):
    if params.n != 2:
        raise DomainError("two-user bound called with n != 2")
    params.require_stable()


def _grid(lo, hi, step):
    if hi <= lo:
        return np.array([lo])
    return np.linspace(lo, hi, int(math.ceil((hi - lo) / step)) + 1)


def _refine(f, x0, lo, hi, width, xatol=1e-10):
    """Bounded Brent search for a maximum of scalar ``f`` near ``x0``."""
    a, b = max(lo, x0 - width), min(hi, x0 + width)
    if b - a < 1e-12:
        return x0, f(x0)
    res = minimize_scalar(lambda x: -f(x), bounds=(a, b), method="bounded", options={"xatol": xatol})
    if -res.fun > f(x0):
        return float(res.x), float(-res.fun)
    return x0, f(x0)


def _maximize_1d(f_vec, lo, hi, step, extra=()):
    xs = np.concatenate([_grid(lo, hi, step), np.asarray(extra, dtype=float)])
    vals = np.asarray(f_vec(xs), dtype=float)
    i = int(np.argmax(vals))
    return _refine(lambda x: float(f_vec(np.array([x]))[0]), float(xs[i]), lo, hi, step)


def _active_weights(p, n):
    return 1.0 - (1.0 - p) ** np.arange(n + 1)


def lb_strategy1(params):
    """State-blind jamming with a codebook built for the worst (two-busy) state."""
    _two_user(params)
    beta = 1.0 - params.alpha
    pc = crossover_k(2, params.p)
    q_eff = min(beta, optimal_weight(pc))
    pi02, pi11, pi20 = (float(x) for x in uniform_occupancy_arrays(params, q_eff))
    active = (1.0 - params.phat**2) * pi20 + pi11 * params.p
    rate = z_capacity_constrained(beta, pc) * active
    return BoundResult(rate=rate, optimizer={"q": q_eff}, budget=beta,
                       notes={"pi": (pi02, pi11, pi20), "crossover": pc})


def _rate2(params, q):
    pc = crossover_k(2, params.p)
    _, _, pi20 = uniform_occupancy_arrays(params, q)
    return z_rate(np.clip(q, 0.0, 1.0), np.clip(pi20 * pc, 0.0, 1.0)) * (1.0 - params.phat**2)


def lb_strategy2(params):
    """Interleaved state-blind jamming: one Z-channel with crossover pi_20 p_c."""
    _two_user(params)
    beta = 1.0 - params.alpha
    q_eff = min(beta, optimal_weight(crossover_k(2, params.p)))
    q, r = _maximize_1d(lambda x: _rate2(params, x), 0.0, beta, STEP_1D, extra=(q_eff,))
    return BoundResult(rate=r, optimizer={"q": q}, budget=beta)


def rate_sideinfo(params, q, w):
    """Rate with separate codebooks for the one-busy (``w``) and two-busy (``q``) states."""
    from .queue_model import steady_state_sideinfo

    _two_user(params)
    dist = steady_state_sideinfo(params, q, w)
    pc = crossover_k(2, params.p)
    return float(dist.pi[2] * (1.0 - params.phat**2) * z_rate(q, pc) + dist.pi[1] * params.p * binary_entropy(w))


def _rate3(params, q, w):
    pc = crossover_k(2, params.p)
    _, pi11, pi20 = sideinfo_occupancy_arrays(params, q, w)
    return pi20 * (1.0 - params.phat**2) * z_rate(q, pc) + pi11 * params.p * binary_entropy(w)


def _coordinate_ascent(f, x0, lo, hi, step, sweeps=20, xatol=1e-10):
    """Maximize ``f`` over a box, one coordinate at a time (grid, then Brent)."""
    x = np.array(x0, dtype=float)
    best = f(x)
    for _ in range(sweeps):
        start = best
        for j in range(x.shape[0]):
            def g(v, j=j):
                y = x.copy()
                y[j] = v
                return f(y)
            grid = _grid(lo[j], hi[j], step)
            vals = [g(v) for v in grid]
            i = int(np.argmax(vals))
            v, val = _refine(g, float(grid[i]), lo[j], hi[j], step, xatol)
            if val > best:
                x[j], best = v, val
        if best - start < 1e-12:
            break
    return x, best


def lb_strategy3(params):
    """State-aware jamming: maximize the two-user side-information rate over its stability box."""
    _two_user(params)
    qb, wb = sideinfo_box(params)
    qs = _grid(0.0, qb, STEP_2D)
    ws = _grid(0.0, wb, STEP_2D)
    Qg, Wg = np.meshgrid(qs, ws, indexing="ij")
    vals = _rate3(params, Qg, Wg)
    i, j = np.unravel_index(int(np.argmax(vals)), vals.shape)
    f = lambda v: float(_rate3(params, v[0], v[1]))
    x, r = _coordinate_ascent(f, (qs[i], ws[j]), (0.0, 0.0), (qb, wb), STEP_2D / 5)
    x = np.minimum(np.maximum(x, 0.0), (qb, wb))
    return BoundResult(rate=float(f(x)), optimizer={"q": float(x[0]), "w": float(x[1])},
                       budget=qb, notes={"grid_best": float(vals[i, j])})


def ub_two_user(params):
    """Ergodic upper bound: Z-capacity under the relaxed budget plus an error-free term."""
    _two_user(params)
    a, p = params.alpha, params.p
    pc = crossover_k(2, p)
    pibar = baseline_pi20(params)
    raw = math.inf if pibar == 0.0 else 1.0 - a + 1.0 / pibar - pibar
    beta_bar = min(max(raw, 0.0), 1.0)
    value = z_capacity_constrained(beta_bar, pc) * (1.0 - params.phat**2) \
        + p * (1.0 - p * (1.0 - a) * a - a * a) / (1.0 - p * a)
    return BoundResult(rate=float(min(value, 1.0)), budget=float(beta_bar),
                       notes={"beta_bar_raw": float(raw), "clamped": bool(raw > 1.0 or raw < 0.0),
                              "unclamped_rate": float(value), "pibar_20": float(pibar)})


def _search_model(params):
    if params.n == 2:
        return occupancy_model(params)
    return occupancy_model(params, TruncationSpec(SEARCH_QMAX_MANY))


def lb_n_strategy1(params, pi=None):
    """n users, state-blind jamming, codebook sized for the all-busy crossover."""
    params.require_stable()
    n, p = params.n, params.p
    beta = 1.0 - params.alpha
    pc = crossover_k(n, p)
    q_eff = min(beta, optimal_weight(pc))
    if pi is None:
        pi = occupancy_model(params)(Uniform(q_eff))
    if not pi.certified:
        raise UncertifiedError(f"occupancy tail mass {pi.tail:.3g} at qmax={pi.qmax}")
    rate = z_capacity_constrained(beta, pc) * float(_active_weights(p, n)[1:] @ pi.pi[1:])
    return BoundResult(rate=rate, optimizer={"q": q_eff}, budget=beta,
                       notes={"crossover": pc, "pi": tuple(pi.pi)})


def composite_crossover(pi, p):
    """Occupancy-weighted crossover, sum over k of pi[k] p_c^(k)."""
    return float(sum(pi.pi[k] * crossover_k(k, p) for k in range(1, pi.n + 1)))


def lb_n_strategy2(params, occupancy=None, step=None):
    """n users, interleaved state-blind jamming over the composite Z-channel.

    ``occupancy`` maps a policy to an :class:`OccupancyDist` and is re-evaluated
    at every candidate ``q``. It defaults to the two-user closed form, or the
    truncated chain for ``n > 2``.
    """
    params.require_stable()
    n, p = params.n, params.p
    beta = 1.0 - params.alpha
    occ = occupancy or _search_model(params)
    step = step or (STEP_1D if n == 2 else STEP_1D_MANY)
    q_eff = min(beta, optimal_weight(crossover_k(n, p)))
    active = 1.0 - params.phat**n
    flags = set()

    def rate(q):
        d = occ(Uniform(float(min(max(q, 0.0), beta))))
        if not d.certified:
            flags.add("uncertified-pi")
        return float(z_rate(min(max(q, 0.0), beta), min(composite_crossover(d, p), 1.0))) * active

    q, r = _maximize_1d(lambda xs: np.array([rate(x) for x in xs]), 0.0, beta, step, extra=(q_eff,))
    if occupancy is None and n > 2:
        full = occupancy_model(params)
        d = full(Uniform(q))
        r = float(z_rate(q, composite_crossover(d, p))) * active
        d_eff = full(Uniform(q_eff))
        r_eff = float(z_rate(q_eff, composite_crossover(d_eff, p))) * active
        if r_eff > r:
            q, r = q_eff, r_eff
        flags.discard("uncertified-pi")
        if not (d.certified and d_eff.certified):
            flags.add("uncertified-pi")
    return BoundResult(rate=r, optimizer={"q": q}, budget=beta, notes={"flags": sorted(flags)})


def vector_box(params):
    """Per-state jam ceilings: state k keeps a lone queue's service above its arrivals."""
    p, lam = params.p, params.lam
    return np.array([min(1.0, max(0.0, 1.0 - lam / (p * (1.0 - p) ** (k - 1))))
                     for k in range(1, params.n + 1)])


def _rate_vector(params, occ, qs, flags):
    n, p = params.n, params.p
    d = occ(Vector(tuple(qs)))
    if not d.certified:
        flags.add("uncertified-pi")
    w = _active_weights(p, n)
    return float(sum(d.pi[k] * w[k] * z_rate(qs[k - 1], crossover_k(k, p)) for k in range(1, n + 1)))


def lb_n_strategy3(params, occupancy=None, step=None):
    """n users, per-backlog-count jamming probabilities, coordinate ascent over the box."""
    params.require_stable()
    n, p = params.n, params.p
    hi = vector_box(params)
    occ = occupancy or _search_model(params)
    step = step or (STEP_VEC if n == 2 else STEP_VEC_MANY)
    flags = set()
    q_eff = min(1.0 - params.alpha, optimal_weight(crossover_k(n, p)))
    starts = [np.full(n, q_eff), np.minimum(hi, 0.5)]
    best_x, best = None, -1.0
    for s in starts:
        s = np.minimum(s, hi)
        x, r = _coordinate_ascent(lambda v: _rate_vector(params, occ, v, flags), s, np.zeros(n), hi, step,
                                  sweeps=20 if n == 2 else 4, xatol=1e-10 if n == 2 else 1e-4)
        if r > best:
            best_x, best = x, r
    if occupancy is None and n > 2:
        full = occupancy_model(params)
        flags.clear()
        cands = [(best_x, _rate_vector(params, full, best_x, flags))]
        u = np.minimum(np.full(n, q_eff), hi)
        cands.append((u, _rate_vector(params, full, u, flags)))
        best_x, best = max(cands, key=lambda c: c[1])
    return BoundResult(rate=best, optimizer={"qs": tuple(float(v) for v in best_x)},
                       budget=float(hi[-1]), notes={"flags": sorted(flags)})


def beta_bar_n(params, base):
    """Relaxed all-busy jam budget from the no-jamming occupancy ``base`` (unclamped)."""
    n, ph = params.n, params.phat
    if base.pi[n] == 0.0:
        return math.inf
    s = sum(base.pi[n - i] * (n - i) * ph ** (-i) for i in range(1, n + 1))
    return float(1.0 - params.alpha + s / base.pi[n])


def ub_n_user(params, base=None):
    """n-user ergodic upper bound; reports both the closed-form and the solver-fed variant.

    ``variant_a`` bounds the all-busy probability by its closed-form lower
    bound; ``variant_b`` uses the no-jamming occupancy itself. The rate is the
    smaller of the two.
    """
    params.require_stable()
    n, p = params.n, params.p
    base = base or baseline_no_jamming(params)
    raw = beta_bar_n(params, base)
    beta_bar = min(max(raw, 0.0), 1.0)
    zterm = z_capacity_constrained(beta_bar, crossover_k(n, p)) * (1.0 - params.phat**n)
    b = (1.0 - float(base.pi[n])) + zterm
    notes = {"beta_bar_raw": float(raw), "clamped": bool(raw > 1.0 or raw < 0.0), "variant_b": float(b),
             "variant_b_first": 1.0 - float(base.pi[n]), "pibar_n0": float(base.pi[n])}
    try:
        a = (1.0 - pi_n0_lower_bound(n, p, params.lam)) + zterm
        notes["variant_a"] = float(a)
    except DomainError as exc:
        a = math.inf
        notes["variant_a"] = None
        notes["variant_a_error"] = str(exc)
    rate = float(min(a, b, 1.0))
    return BoundResult(rate=rate, budget=beta_bar, notes=notes)


STRATEGIES = ("s1", "s2", "s3", "ub")


@dataclass
class BoundsRow:
    """One sweep point. For ``n > 2`` the s3 optimizer reports the all-busy and
    next-to-all-busy entries of the jam vector as ``q3_opt`` and ``w3_opt``."""

    n: int
    p: float
    alpha: float
    lam: float
    beta: float
    lb_s1: Optional[float] = None
    lb_s2: Optional[float] = None
    q2_opt: Optional[float] = None
    lb_s3: Optional[float] = None
    q3_opt: Optional[float] = None
    w3_opt: Optional[float] = None
    ub: Optional[float] = None
    beta_bar: Optional[float] = None
    clamped: Optional[bool] = None
    errors: dict = field(default_factory=dict)


def bounds_row(n, p, alpha, strategies=STRATEGIES):
    """Evaluate the requested bounds at one ``(n, p, alpha)``; failures land in ``errors``."""
    from .queue_model import SystemParams

    params = SystemParams.from_alpha(alpha, p, n)
    row = BoundsRow(n=n, p=p, alpha=alpha, lam=params.lam, beta=1.0 - alpha)
    two = n == 2

    def attempt(name, fn):
        try:
            fn()
        except (ValueError, ArithmeticError) as exc:
            row.errors[name] = f"{type(exc).__name__}: {exc}"

    def s1():
        row.lb_s1 = (lb_strategy1 if two else lb_n_strategy1)(params).rate

    def s2():
        r = (lb_strategy2 if two else lb_n_strategy2)(params)
        row.lb_s2, row.q2_opt = r.rate, r.optimizer["q"]

    def s3():
        if two:
            r = lb_strategy3(params)
            row.q3_opt, row.w3_opt = r.optimizer["q"], r.optimizer["w"]
        else:
            r = lb_n_strategy3(params)
            row.q3_opt, row.w3_opt = r.optimizer["qs"][-1], r.optimizer["qs"][-2]
        row.lb_s3 = r.rate

    def ub():
        r = (ub_two_user if two else ub_n_user)(params)
        row.ub, row.beta_bar = r.rate, r.budget
        row.clamped = bool(r.notes["clamped"])

    for name, fn in (("s1", s1), ("s2", s2), ("s3", s3), ("ub", ub)):
        if name in strategies:
            attempt(name, fn)
    return row
