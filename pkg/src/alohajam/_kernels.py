"""Inner loops: slot simulator, coupled simulator, truncated-chain kernel.

Every kernel exists twice: a numba version (``*_nb``) and a numpy/Python
version (``*_py``). The public names at the bottom dispatch on
``_jit.USE_NUMBA``. Simulation kernels take a block of uniforms laid out
per slot as ``[arrival_1..arrival_n, attempt_1..attempt_n, jam]``, so both
versions see the same coins and produce identical output.
"""

import numpy as np

from . import _jit
from ._jit import njit

# trace columns: slot, q_1..q_n, attempt mask, active, jam, collision, bob (-1 idle)
TRACE_EXTRA = 6


@njit
def _sim_chunk_nb(U, Q, lam, p, jamq, slot0, warmup, window_len, occ_w, joint_w, qmax_w,
                  active_k, jam_k, flow, qsum, trace, trace_on):
    n = Q.shape[0]
    n_windows = occ_w.shape[0]
    for t in range(U.shape[0]):
        slot = slot0 + t
        k = 0
        for i in range(n):
            if Q[i] > 0:
                k += 1
        if trace_on:
            trace[t, 0] = slot
            for i in range(n):
                trace[t, 1 + i] = Q[i]
        mask = 0
        na = 0
        lone = -1
        for i in range(n):
            if Q[i] > 0 and U[t, n + i] < p:
                na += 1
                lone = i
                mask |= 1 << i
        active = na > 0
        jam = active and U[t, 2 * n] < jamq[k]
        collision = active and (na >= 2 or jam)
        post = slot >= warmup
        if post:
            w = (slot - warmup) // window_len
            if w >= n_windows:
                w = n_windows - 1
            occ_w[w, k] += 1
            big = 0
            for i in range(n):
                qsum[0] += Q[i]
                if Q[i] > big:
                    big = Q[i]
            qmax_w[w] += big
            if big > flow[2]:
                flow[2] = big
            if active:
                active_k[k] += 1
                x = 1 if jam else 0
                y = 1 if collision else 0
                joint_w[w, 2 * x + y] += 1
                if jam:
                    jam_k[k] += 1
        if trace_on:
            trace[t, 1 + n] = mask
            trace[t, 2 + n] = 1 if active else 0
            trace[t, 3 + n] = 1 if jam else 0
            trace[t, 4 + n] = 1 if collision else 0
            trace[t, 5 + n] = (1 if collision else 0) if active else -1
        if na == 1 and not jam:
            Q[lone] -= 1
            flow[1] += 1
        for i in range(n):
            if U[t, i] < lam:
                Q[i] += 1
                flow[0] += 1


def _sim_chunk_py(U, Q, lam, p, jamq, slot0, warmup, window_len, occ_w, joint_w, qmax_w,
                  active_k, jam_k, flow, qsum, trace, trace_on):
    n = Q.shape[0]
    n_windows = occ_w.shape[0]
    arr = (U[:, :n] < lam).tolist()
    att = (U[:, n:2 * n] < p).tolist()
    jc = U[:, 2 * n].tolist()
    jq = jamq.tolist()
    q = Q.tolist()
    users = range(n)
    arrivals = departures = 0
    peak = int(flow[2])
    total = 0
    occ = np.zeros_like(occ_w)
    joint = np.zeros_like(joint_w)
    qmw = np.zeros_like(qmax_w)
    ak = [0] * (n + 1)
    jk = [0] * (n + 1)
    for t in range(len(jc)):
        slot = slot0 + t
        busy = [i for i in users if q[i] > 0]
        k = len(busy)
        if trace_on:
            trace[t, 0] = slot
            trace[t, 1:1 + n] = q
        a_t = att[t]
        tx = [i for i in busy if a_t[i]]
        na = len(tx)
        active = na > 0
        jam = active and jc[t] < jq[k]
        collision = active and (na >= 2 or jam)
        if slot >= warmup:
            w = min((slot - warmup) // window_len, n_windows - 1)
            occ[w, k] += 1
            big = max(q)
            total += sum(q)
            qmw[w] += big
            if big > peak:
                peak = big
            if active:
                ak[k] += 1
                joint[w, 2 * int(jam) + int(collision)] += 1
                if jam:
                    jk[k] += 1
        if trace_on:
            mask = 0
            for i in tx:
                mask |= 1 << i
            trace[t, 1 + n:] = (mask, int(active), int(jam), int(collision),
                                int(collision) if active else -1)
        if na == 1 and not jam:
            q[tx[0]] -= 1
            departures += 1
        a_r = arr[t]
        for i in users:
            if a_r[i]:
                q[i] += 1
                arrivals += 1
    Q[:] = q
    occ_w += occ
    joint_w += joint
    qmax_w += qmw
    active_k += np.asarray(ak, dtype=active_k.dtype)
    jam_k += np.asarray(jk, dtype=jam_k.dtype)
    flow[0] += arrivals
    flow[1] += departures
    flow[2] = peak
    qsum[0] += total


@njit
def _coupled_chunk_nb(U, QJ, QU, lam, p, jamq, slot0, warmup, counts):
    # counts: violations, busy_both_J, busy_both_U, post-warmup slots
    n = QJ.shape[0]
    for t in range(U.shape[0]):
        kj = 0
        ku = 0
        for i in range(n):
            if QJ[i] > 0:
                kj += 1
            if QU[i] > 0:
                ku += 1
        if slot0 + t >= warmup:
            counts[3] += 1
            if kj == n:
                counts[1] += 1
            if ku == n:
                counts[2] += 1
        naj = 0
        nau = 0
        lj = -1
        lu = -1
        for i in range(n):
            if U[t, n + i] < p:
                if QJ[i] > 0:
                    naj += 1
                    lj = i
                if QU[i] > 0:
                    nau += 1
                    lu = i
        jam = naj > 0 and U[t, 2 * n] < jamq[kj]
        if naj == 1 and not jam:
            QJ[lj] -= 1
        if nau == 1:
            QU[lu] -= 1
        bad = False
        for i in range(n):
            if U[t, i] < lam:
                QJ[i] += 1
                QU[i] += 1
            if QU[i] > QJ[i]:
                bad = True
        if bad:
            counts[0] += 1


def _coupled_chunk_py(U, QJ, QU, lam, p, jamq, slot0, warmup, counts):
    n = QJ.shape[0]
    arr = (U[:, :n] < lam).tolist()
    att = (U[:, n:2 * n] < p).tolist()
    jc = U[:, 2 * n].tolist()
    jq = jamq.tolist()
    qj = QJ.tolist()
    qu = QU.tolist()
    users = range(n)
    c = [int(x) for x in counts]
    for t in range(len(jc)):
        kj = sum(1 for x in qj if x > 0)
        ku = sum(1 for x in qu if x > 0)
        if slot0 + t >= warmup:
            c[3] += 1
            c[1] += kj == n
            c[2] += ku == n
        a_t = att[t]
        txj = [i for i in users if a_t[i] and qj[i] > 0]
        txu = [i for i in users if a_t[i] and qu[i] > 0]
        jam = len(txj) > 0 and jc[t] < jq[kj]
        if len(txj) == 1 and not jam:
            qj[txj[0]] -= 1
        if len(txu) == 1:
            qu[txu[0]] -= 1
        a_r = arr[t]
        bad = False
        for i in users:
            if a_r[i]:
                qj[i] += 1
                qu[i] += 1
            if qu[i] > qj[i]:
                bad = True
        c[0] += bad
    QJ[:] = qj
    QU[:] = qu
    counts[:] = c


@njit
def _chain_entries_nb(states, lookup, qmax, lam, p, jamq, rows, cols, vals):
    S, n = states.shape
    base = qmax + 1
    cur = np.empty(n, np.int64)
    nxt = np.empty(n, np.int64)
    m = 0
    for s in range(S):
        k = 0
        for i in range(n):
            if states[s, i] > 0:
                k += 1
        d = 0.0
        if k > 0:
            d = p * (1.0 - p) ** (k - 1) * (1.0 - jamq[k])
        # outcome -1 = nobody leaves, otherwise index of the departing user
        for o in range(-1, n):
            if o == -1:
                po = 1.0 - k * d
            elif states[s, o] > 0:
                po = d
            else:
                continue
            if po <= 0.0:
                continue
            for i in range(n):
                cur[i] = states[s, i]
            if o >= 0:
                cur[o] -= 1
            for a in range(1 << n):
                pa = po
                for i in range(n):
                    if (a >> i) & 1:
                        pa *= lam
                        v = cur[i] + 1
                        nxt[i] = v if v < qmax else qmax
                    else:
                        pa *= 1.0 - lam
                        nxt[i] = cur[i]
                if pa <= 0.0:
                    continue
                # insertion sort, n is small
                for i in range(1, n):
                    v = nxt[i]
                    j = i - 1
                    while j >= 0 and nxt[j] > v:
                        nxt[j + 1] = nxt[j]
                        j -= 1
                    nxt[j + 1] = v
                flat = 0
                for i in range(n):
                    flat = flat * base + nxt[i]
                rows[m] = s
                cols[m] = lookup[flat]
                vals[m] = pa
                m += 1
    return m


def _chain_entries_py(states, lookup, qmax, lam, p, jamq, rows, cols, vals):
    S, n = states.shape
    base = qmax + 1
    busy = states > 0
    k = busy.sum(axis=1)
    d = np.where(k > 0, p * (1.0 - p) ** np.maximum(k - 1, 0) * (1.0 - jamq[k]), 0.0)
    outcomes = [(states, 1.0 - k * d)]
    for o in range(n):
        moved = states.copy()
        moved[:, o] -= busy[:, o]
        outcomes.append((moved, np.where(busy[:, o], d, 0.0)))
    weights = base ** np.arange(n - 1, -1, -1)
    src = np.arange(S)
    m = 0
    for cur, po in outcomes:
        for a in range(1 << n):
            bits = np.array([(a >> i) & 1 for i in range(n)])
            pa = po * np.prod(np.where(bits == 1, lam, 1.0 - lam))
            keep = pa > 0.0
            if not keep.any():
                continue
            nxt = np.sort(np.minimum(cur[keep] + bits, qmax), axis=1)
            c = lookup[nxt @ weights]
            cnt = c.shape[0]
            rows[m:m + cnt] = src[keep]
            cols[m:m + cnt] = c
            vals[m:m + cnt] = pa[keep]
            m += cnt
    return m


def _pick(nb, py):
    return nb if _jit.USE_NUMBA else py


sim_chunk = _pick(_sim_chunk_nb, _sim_chunk_py)
coupled_chunk = _pick(_coupled_chunk_nb, _coupled_chunk_py)
chain_entries = _pick(_chain_entries_nb, _chain_entries_py)
