"""Stationary occupancy of the legitimate queues under i.i.d. jamming.

Two routes are provided. The two-user closed forms (uniform and
state-dependent jamming) are evaluated exactly as derived. The truncated
chain solves the one-slot kernel numerically on a capped lattice, for any
``n``. It serves as the independent oracle for the closed forms and as the
only route for ``n > 2``.

Slot order, shared with :mod:`alohajam.sim`:

1. every backlogged user attempts with probability ``p``;
2. on an active slot Alice jams with the probability her policy assigns to
   the current backlog count;
3. a lone unjammed attempt departs;
4. Bernoulli(``lam``) arrivals join each queue and compete from the next slot.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels
from .errors import (
    ConvergenceError,
    DomainError,
    InfeasiblePolicyError,
    InstabilityError,
    OverloadWarning,
    TailMassWarning,
)

FEAS_EPS = 1e-12


@dataclass(frozen=True)
class SystemParams:
    """``n`` users, Bernoulli(``lam``) arrivals, attempt probability ``p``."""

    n: int
    lam: float
    p: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise DomainError(f"need at least two users, got n={self.n!r}")
        if not 0.0 < self.p < 1.0:
            raise DomainError(f"attempt probability must lie in (0, 1), got {self.p!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise DomainError(f"arrival probability must lie in [0, 1], got {self.lam!r}")

    @classmethod
    def from_alpha(cls, alpha, p, n=2):
        return cls(n=n, lam=alpha * p * (1.0 - p) ** (n - 1), p=p)

    @property
    def phat(self):
        return 1.0 - self.p

    @property
    def alpha(self):
        """Offered load, lam / (p p̂^(n-1))."""
        return self.lam / (self.p * self.phat ** (self.n - 1))

    def require_stable(self):
        if self.alpha >= 1.0:
            raise InstabilityError(f"offered load {self.alpha:.6g} >= 1")


@dataclass(frozen=True)
class Uniform:
    """Jam every active slot with probability ``q``."""

    q: float

    def jam_vector(self, n):
        return np.array([0.0] + [self.q] * n)


@dataclass(frozen=True)
class SideInfo:
    """Two users: jam with ``q`` when both are backlogged, ``w`` when one is."""

    q: float
    w: float

    def jam_vector(self, n):
        if n != 2:
            raise DomainError("SideInfo policy is defined for two users only")
        return np.array([0.0, self.w, self.q])


@dataclass(frozen=True)
class Vector:
    """``qs[k-1]`` is the jam probability when ``k`` users are backlogged."""

    qs: tuple

    def __post_init__(self):
        object.__setattr__(self, "qs", tuple(float(x) for x in self.qs))

    def jam_vector(self, n):
        if len(self.qs) != n:
            raise DomainError(f"vector policy has {len(self.qs)} entries for n={n}")
        return np.array((0.0,) + self.qs)


JamPolicy = Union[Uniform, SideInfo, Vector]

NO_JAMMING = Uniform(0.0)


def jam_vector(policy, n):
    v = policy.jam_vector(n)
    if np.any((v < 0.0) | (v > 1.0)):
        raise DomainError(f"jam probabilities must lie in [0, 1]: {policy!r}")
    return v


@dataclass
class OccupancyDist:
    """``pi[k]``: stationary probability that exactly ``k`` queues are backlogged."""

    pi: np.ndarray
    certified: bool = True
    tail: float = 0.0
    qmax: Optional[int] = None
    source: str = "closed-form"

    def __post_init__(self):
        self.pi = np.asarray(self.pi, dtype=float)
        if np.any(self.pi < -1e-12) or abs(self.pi.sum() - 1.0) > 1e-9:
            raise DomainError(f"not a probability vector: {self.pi}")
        self.pi = np.clip(self.pi, 0.0, 1.0)

    @property
    def n(self):
        return self.pi.shape[0] - 1

    def __getitem__(self, k):
        return self.pi[k]


@dataclass(frozen=True)
class TruncationSpec:
    qmax: int = 200
    tol: float = 1e-9

    def __post_init__(self):
        if self.qmax < 1:
            raise DomainError("qmax must be at least 1")
        if not 0.0 < self.tol < 1.0:
            raise DomainError("tol must lie in (0, 1)")


# sparse LU fill-in grows fast with n; these caps keep one solve near a second
_DEFAULT_QMAX = {2: 200, 3: 40, 4: 18, 5: 10}


def default_truncation(n):
    return TruncationSpec(qmax=_DEFAULT_QMAX.get(n, 6))


def _two_user(params):
    if params.n != 2:
        raise DomainError("closed form is for two users")
    params.require_stable()


def uniform_occupancy_arrays(params, q):
    """Vectorized two-user uniform-jamming occupancy; returns (pi02, pi11, pi20)."""
    lam, p, ph = params.lam, params.p, params.phat
    qh = 1.0 - np.asarray(q, dtype=float)
    if lam == 0.0:
        one = np.ones(qh.shape)
        return one, 0.0 * one, 0.0 * one
    den = p * ph * qh - lam + lam * ph
    pi02 = (p * qh - lam) / (p * qh) * (p * ph * qh - lam) / den
    pi11 = 2.0 * (1.0 - lam / (p * ph * qh)) * lam * ph / den
    pi02, pi11 = np.maximum(pi02, 0.0), np.maximum(pi11, 0.0)
    return pi02, pi11, 1.0 - pi02 - pi11


def steady_state_uniform(params, q):
    """Occupancy (pi_02, pi_11, pi_20) of two users under uniform jamming ``q``."""
    _two_user(params)
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"q must lie in [0, 1], got {q!r}")
    if q > 1.0 - params.alpha + FEAS_EPS:
        raise InfeasiblePolicyError(f"q={q:.6g} exceeds budget {1.0 - params.alpha:.6g}")
    return OccupancyDist(np.array([float(x) for x in uniform_occupancy_arrays(params, q)]))


def prob_q1_empty(params, q, w):
    """P(Q1 = 0) under side-information jamming (both-busy ``q``, one-busy ``w``)."""
    p, a = params.p, params.alpha
    num = (1 - w) * (-p + p * p * (1 - q) + p * q + (1 - p) * p * a)
    den = (p * p * (1 - q) * (1 - w) + (1 - p) * p * (q - w) * a
           + p * (1 - q) * (-1 + w + (1 - p) * p * a))
    return num / den


def sideinfo_box(params):
    """Stability box (q_max, w_max) for side-information jamming."""
    a, p = params.alpha, params.p
    return 1.0 - a, 1.0 - a + p * a


def sideinfo_occupancy_arrays(params, q, w):
    """Vectorized two-user side-information occupancy; returns (pi02, pi11, pi20)."""
    lam, p, ph = params.lam, params.p, params.phat
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    if lam == 0.0:
        one = np.ones(np.broadcast(q, w).shape)
        return one, 0.0 * one, 0.0 * one
    e1 = prob_q1_empty(params, q, w)
    pi02 = (p * (1 - w) - lam) / (p * (1 - w)) * e1
    pi11 = 2.0 * (1.0 - lam / (p * ph * (1 - q))) * (1.0 - e1)
    pi02, pi11 = np.maximum(pi02, 0.0), np.maximum(pi11, 0.0)
    return pi02, pi11, 1.0 - pi02 - pi11


def steady_state_sideinfo(params, q, w):
    """Occupancy of two users when Alice jams with ``q`` in S_20 and ``w`` in S_11.

    The one-busy-state factor is read as ``lam / (p p̂ q̂)``; with ``q`` in place
    of ``q̂`` the expression turns negative inside the stability box.
    """
    _two_user(params)
    qb, wb = sideinfo_box(params)
    if not (0.0 <= q <= 1.0 and 0.0 <= w <= 1.0):
        raise DomainError("q, w must lie in [0, 1]")
    if q > qb + FEAS_EPS or w > wb + FEAS_EPS:
        raise InfeasiblePolicyError(f"(q={q:.6g}, w={w:.6g}) outside the box ({qb:.6g}, {wb:.6g})")
    return OccupancyDist(np.array([float(x) for x in sideinfo_occupancy_arrays(params, q, w)]))


def baseline_pi20(params):
    """Both-backlogged probability without jamming, (1 - p) alpha^2 / (1 - p alpha)."""
    a, p = params.alpha, params.p
    return (1.0 - p) * a * a / (1.0 - p * a)


def baseline_no_jamming(params, trunc=None):
    """Occupancy with no jamming: closed form for two users, truncated chain otherwise."""
    params.require_stable()
    if params.n == 2:
        dist = steady_state_uniform(params, 0.0)
        ref = baseline_pi20(params)
        if abs(dist.pi[2] - ref) > 1e-9:
            raise AssertionError(f"closed forms disagree: {dist.pi[2]} vs {ref}")
        return dist
    return certified_stationary(params, NO_JAMMING, trunc)


@lru_cache(maxsize=8)
def _lattice(n, qmax):
    states = np.array(list(combinations_with_replacement(range(qmax + 1), n)), dtype=np.int64)
    weights = (qmax + 1) ** np.arange(n - 1, -1, -1, dtype=np.int64)
    lookup = np.full((qmax + 1) ** n, -1, dtype=np.int64)
    lookup[states @ weights] = np.arange(states.shape[0])
    states.setflags(write=False)
    lookup.setflags(write=False)
    return states, lookup


def transition_matrix(params, policy, qmax):
    """Row-stochastic one-slot kernel on sorted queue-length tuples capped at ``qmax``.

    Users are exchangeable, so the chain lumps exactly onto multisets of queue
    lengths. Arrivals to a full queue are dropped.
    """
    n = params.n
    states, lookup = _lattice(n, qmax)
    S = states.shape[0]
    cap = S * (n + 1) * (1 << n)
    rows = np.empty(cap, np.int64)
    cols = np.empty(cap, np.int64)
    vals = np.empty(cap, np.float64)
    m = _kernels.chain_entries(states, lookup, qmax, params.lam, params.p,
                               jam_vector(policy, n), rows, cols, vals)
    P = sp.coo_matrix((vals[:m], (rows[:m], cols[:m])), shape=(S, S)).tocsr()
    P.sum_duplicates()
    return P, states


def _solve_stationary(P):
    S = P.shape[0]
    M = (sp.identity(S, format="csr") - P).T.tocsc()
    A = M[1:, 1:].tocsc()
    b = -M[1:, 0].toarray().ravel()
    lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
    x = lu.solve(b)
    for _ in range(3):
        x += lu.solve(b - A @ x)
    pi = np.concatenate(([1.0], x))
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    return pi, float(np.abs(P.T @ pi - pi).sum())


def dtmc_stationary_truncated(params, policy, trunc=None, *, max_residual=1e-12):
    """Stationary backlog-count distribution of the capped chain.

    The result is ``certified`` when the mass on states with some queue at the
    cap is below ``trunc.tol``; otherwise a :class:`TailMassWarning` is issued
    and the uncertified result is still returned.
    """
    trunc = trunc or default_truncation(params.n)
    P, states = transition_matrix(params, policy, trunc.qmax)
    if params.lam == 0.0:
        pi = np.zeros(P.shape[0])
        pi[0] = 1.0
        resid = 0.0
    else:
        pi, resid = _solve_stationary(P)
    if not resid < max_residual:
        raise ConvergenceError(f"stationary residual {resid:.3g} >= {max_residual:.1g}")
    k = (states > 0).sum(axis=1)
    occ = np.bincount(k, weights=pi, minlength=params.n + 1)
    tail = float(pi[states[:, -1] == trunc.qmax].sum())
    ok = tail < trunc.tol
    if not ok:
        warnings.warn(f"tail mass {tail:.3g} at qmax={trunc.qmax} exceeds {trunc.tol:.1g}",
                      TailMassWarning, stacklevel=2)
    return OccupancyDist(occ / occ.sum(), certified=ok, tail=tail, qmax=trunc.qmax, source="dtmc")


def certified_stationary(params, policy, trunc=None, *, qmax_limit=None, growth=1.5):
    """Truncated solve with the cap grown until the tail mass certifies.

    Stops at ``qmax_limit`` (default: four times the starting cap) and returns
    the last, uncertified, result with a warning.
    """
    trunc = trunc or default_truncation(params.n)
    limit = qmax_limit or 4 * trunc.qmax
    qmax = trunc.qmax
    while True:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TailMassWarning)
            dist = dtmc_stationary_truncated(params, policy, TruncationSpec(qmax, trunc.tol))
        if dist.certified or qmax >= limit:
            break
        qmax = min(limit, int(math.ceil(qmax * growth)))
    if not dist.certified:
        warnings.warn(f"tail mass {dist.tail:.3g} at qmax={qmax} exceeds {trunc.tol:.1g}",
                      TailMassWarning, stacklevel=2)
    return dist


def jam_budget(params):
    """Largest long-run jammed fraction keeping the queues stable: 1 - alpha."""
    a = params.alpha
    if a >= 1.0:
        warnings.warn(f"offered load {a:.6g} >= 1; no jamming budget", OverloadWarning, stacklevel=2)
        return 0.0
    return 1.0 - a


def pi_n0_lower_bound(n, p, lam):
    """Lower bound on the no-jamming probability that all ``n`` queues are backlogged."""
    if not 0.0 < p < 1.0:
        raise DomainError("p must lie in (0, 1)")
    if lam < 0.0:
        raise DomainError("lam must be non-negative")
    if lam == 0.0:
        return 0.0
    ph = 1.0 - p
    f = 1.0 - (n - 1) * p * ph ** (n - 2)
    if f <= 0.0:
        raise DomainError(f"(n-1) p p̂^(n-2) = {1.0 - f:.6g} >= 1")
    return 1.0 / (1.0 + p * ph ** (n - 1) / (lam * f))


def occupancy_model(params, trunc=None) -> Callable:
    """Map a policy to its occupancy: closed forms for two users, oracle otherwise.

    For ``n > 2`` a policy that jams the all-backlogged state at or beyond the
    budget leaves the chain null recurrent. The long-run occupancy then
    concentrates on ``k = n``, which is returned directly.
    """
    if params.n == 2:
        def two(policy):
            if isinstance(policy, Uniform):
                return steady_state_uniform(params, policy.q)
            v = jam_vector(policy, 2)
            return steady_state_sideinfo(params, v[2], v[1])
        return two

    def many(policy):
        v = jam_vector(policy, params.n)
        if params.lam > 0.0 and v[params.n] >= 1.0 - params.alpha - FEAS_EPS:
            pi = np.zeros(params.n + 1)
            pi[-1] = 1.0
            return OccupancyDist(pi, source="critical-limit")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", TailMassWarning)
            return dtmc_stationary_truncated(params, policy, trunc)
    return many
