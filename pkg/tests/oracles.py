"""Independent reference computations used as test oracles.

The chain here is built on the full (unlumped) lattice with dense linear
algebra, straight from the slot rules, sharing no code with the package.
"""

import itertools

import numpy as np


def full_lattice_occupancy(n, lam, p, jam, qmax):
    """Occupancy by backlog count of the queue chain capped at ``qmax``.

    ``jam[k]`` is the jam probability with ``k`` backlogged users.
    """
    states = list(itertools.product(range(qmax + 1), repeat=n))
    index = {s: i for i, s in enumerate(states)}
    P = np.zeros((len(states), len(states)))
    for s in states:
        busy = [i for i in range(n) if s[i] > 0]
        k = len(busy)
        outcomes = {}
        # every attempt pattern among the busy users
        for pattern in itertools.product((0, 1), repeat=k):
            pr = 1.0
            for b in pattern:
                pr *= p if b else 1 - p
            tx = [busy[j] for j, b in enumerate(pattern) if b]
            if len(tx) == 1:
                outcomes[tx[0]] = outcomes.get(tx[0], 0.0) + pr * (1 - jam[k])
                outcomes[None] = outcomes.get(None, 0.0) + pr * jam[k]
            else:
                outcomes[None] = outcomes.get(None, 0.0) + pr
        for who, po in outcomes.items():
            cur = list(s)
            if who is not None:
                cur[who] -= 1
            for arr in itertools.product((0, 1), repeat=n):
                pa = po
                nxt = list(cur)
                for i, a in enumerate(arr):
                    pa *= lam if a else 1 - lam
                    nxt[i] = min(qmax, nxt[i] + a)
                P[index[s], index[tuple(nxt)]] += pa
    A = P.T - np.eye(len(states))
    A[-1, :] = 1.0
    b = np.zeros(len(states))
    b[-1] = 1.0
    pi = np.linalg.solve(A, b)
    occ = np.zeros(n + 1)
    for s, v in zip(states, pi):
        occ[sum(1 for x in s if x > 0)] += v
    return occ


def z_rate_bruteforce(u, pc):
    """Mutual information of a Z-channel from its joint table.

    The weight-``u`` input is the one that flips with probability ``pc``.
    """
    joint = np.array([[1 - u, 0.0], [u * pc, u * (1 - pc)]])
    px = joint.sum(axis=1, keepdims=True)
    py = joint.sum(axis=0, keepdims=True)
    nz = joint > 0
    with np.errstate(divide="ignore"):
        lx, ly = np.log2(px), np.log2(py)
    ratio = np.log2(np.where(nz, joint, 1.0)) - lx - ly
    return float(np.sum(joint[nz] * ratio[nz]))


def z_argmax_root(pc):
    """Maximizer of the Z-channel rate as the root of its derivative in ``u``."""
    from scipy.optimize import brentq

    ph = 1.0 - pc
    h = 0.0 if pc in (0.0, 1.0) else -(pc * np.log2(pc) + ph * np.log2(ph))

    def slope(u):
        return ph * np.log2((1.0 - u * ph) / (u * ph)) - h

    return brentq(slope, 1e-15, 1.0 - 1e-15, xtol=1e-15, rtol=1e-15)
