"""Binary entropy and weight-constrained Z-channel rates.

All logarithms are base 2. Inputs may be scalars or numpy arrays; scalar
inputs return Python floats.

In the Z-channel used here, input 1 (a jammed slot) always reads as 1. Input 0
reads as 1 with probability ``p_c``, when the legitimate users collide on
their own.
"""

import warnings

import numpy as np

from .errors import DegenerateChannelWarning, DomainError


def _as_prob(x, name, *, upper_open=False):
    a = np.asarray(x, dtype=float)
    bad = (a < 0.0) | (a >= 1.0 if upper_open else a > 1.0) | np.isnan(a)
    if np.any(bad):
        raise DomainError(f"{name} must lie in [0, 1{')' if upper_open else ']'}, got {x!r}")
    return a


def _out(a):
    return float(a) if np.ndim(a) == 0 else a


def _h(a):
    # 0 log 0 == 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(a > 0.0, -a * np.log2(np.where(a > 0.0, a, 1.0)), 0.0)
        s = np.where(a < 1.0, -(1.0 - a) * np.log2(np.where(a < 1.0, 1.0 - a, 1.0)), 0.0)
    return t + s


def binary_entropy(x):
    """H(x) in bits."""
    return _out(_h(_as_prob(x, "x")))


def z_rate(u, p_c):
    """Mutual information of i.i.d. weight-``u`` inputs: H(u p̂_c) - u H(p̂_c)."""
    u = _as_prob(u, "u")
    pc = _as_prob(p_c, "p_c")
    keep = 1.0 - pc
    r = _h(u * keep) - u * _h(keep)
    return _out(np.clip(r, 0.0, 1.0))


def optimal_weight(p_c):
    """Input weight maximizing :func:`z_rate` for a fixed crossover.

    Root of the stationarity condition of ``z_rate`` in ``u``::

        u_max = 1 / (p̂_c (1 + 2**(H(p̂_c)/p̂_c)))

    At ``p_c == 1`` the rate is identically zero; 0 is returned with a
    :class:`DegenerateChannelWarning`.
    """
    pc = _as_prob(p_c, "p_c")
    if np.any(pc == 1.0):
        warnings.warn("crossover probability 1: rate is identically zero", DegenerateChannelWarning, stacklevel=2)
    keep = 1.0 - pc
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        e = _h(keep) / np.where(keep > 0, keep, 1.0)
        t = np.exp2(-e)
        u = t / (np.where(keep > 0, keep, 1.0) * (1.0 + t))
    return _out(np.where(keep > 0, u, 0.0))


def z_capacity_constrained(beta, p_c):
    """Best i.i.d. rate when at most a ``beta`` fraction of inputs may be 1."""
    beta = _as_prob(beta, "beta")
    pc = _as_prob(p_c, "p_c")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateChannelWarning)
        gamma = np.minimum(optimal_weight(pc), beta)
    return z_rate(gamma, pc)


def z_capacity(p_c):
    """Unconstrained Z-channel capacity, log2(1 + p̂_c p_c^(p_c/p̂_c))."""
    pc = _as_prob(p_c, "p_c")
    keep = 1.0 - pc
    with np.errstate(divide="ignore", invalid="ignore"):
        c = np.log2(1.0 + keep * np.power(pc, pc / np.where(keep > 0, keep, 1.0)))
    return _out(np.where(keep > 0, c, 0.0))


def crossover_k(k, p):
    """Probability that an active slot with ``k`` backlogged users is a legitimate collision."""
    k = int(k)
    if k < 1:
        raise DomainError("crossover is undefined with no backlogged users")
    p = float(p)
    if not 0.0 < p < 1.0:
        raise DomainError(f"attempt probability must lie in (0, 1), got {p!r}")
    if k == 1:
        return 0.0
    if k == 2:
        return p / (2.0 - p)
    q = 1.0 - p
    idle = q**k
    lone = k * p * q ** (k - 1)
    return (1.0 - lone - idle) / (1.0 - idle)


def attempt_from_crossover(p_c):
    """Invert the two-user crossover: p = 2 p_c / (1 + p_c)."""
    pc = float(_as_prob(p_c, "p_c", upper_open=True))
    return 2.0 * pc / (1.0 + pc)
