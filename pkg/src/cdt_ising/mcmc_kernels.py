"""Compiled kernels for the annealed (triangulation, spin) chain.

State layout, shared with :mod:`cdt_ising.mcmc`:

* ``types[i, j]``: 1 if position ``j`` of strip ``i`` is an up-triangle, else 0
* ``spins[i, j]``: +1/-1 on the same positions
* ``lengths[i]``: number of triangles in strip ``i``
* ``nsl[i]``: size of slice ``i``, the up count of strip ``i``

The geometry move acts on slice ``i``: strip ``i`` sits above it and strip
``i - 1`` below. Inserting an edge of rank ``r`` adds an up-triangle of rank
``r`` to the upper strip and a down-triangle of rank ``r`` to the lower strip;
deleting removes both. Moves need N >= 2 so the two strips are distinct.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

ENERGY_CHECK_INTERVAL = 10_000


@njit(cache=True)
def up_pos(trow, m, r):
    """Index of the up-triangle of rank r; -1 for r = -1 and m past the last one."""
    if r < 0:
        return -1
    k = 0
    for j in range(m):
        if trow[j] == 1:
            if k == r:
                return j
            k += 1
    return m


@njit(cache=True)
def down_pos(trow, m, r):
    if r < 0:
        return -1
    k = 0
    for j in range(m):
        if trow[j] == 0:
            if k == r:
                return j
            k += 1
    return m


@njit(cache=True)
def up_slots(trow, m, r):
    """(first index, count) of positions where a new rank-r up-triangle can go."""
    lo = up_pos(trow, m, r - 1) + 1
    return lo, up_pos(trow, m, r) - lo + 1


@njit(cache=True)
def down_slots(trow, m, r):
    """(first index, count) for a new rank-r down-triangle; never before the root."""
    lo = max(down_pos(trow, m, r - 1) + 1, 1)
    return lo, down_pos(trow, m, r) - lo + 1


@njit(cache=True)
def insert_at(trow, srow, m, j, t, s, out_t, out_s):
    for k in range(j):
        out_t[k] = trow[k]
        out_s[k] = srow[k]
    out_t[j] = t
    out_s[j] = s
    for k in range(j, m):
        out_t[k + 1] = trow[k]
        out_s[k + 1] = srow[k]


@njit(cache=True)
def delete_at(trow, srow, m, j, out_t, out_s):
    for k in range(j):
        out_t[k] = trow[k]
        out_s[k] = srow[k]
    for k in range(j + 1, m):
        out_t[k - 1] = trow[k]
        out_s[k - 1] = srow[k]


@njit(cache=True)
def strip_coupling(srow, m):
    tot = 0
    for j in range(m):
        tot += srow[j] * srow[(j + 1) % m]
    return tot


@njit(cache=True)
def cross_coupling(tl, sl, ml, tu, su, mu_):
    """Sum over ranks k of (k-th down spin of the lower strip) * (k-th up spin of the upper)."""
    tot = 0
    ju = 0
    for jl in range(ml):
        if tl[jl] == 0:
            while tu[ju] != 1:
                ju += 1
            tot += sl[jl] * su[ju]
            ju += 1
    return tot


@njit(cache=True)
def local_energy(tl, sl, ml, tu, su, mu_):
    return -(strip_coupling(sl, ml) + strip_coupling(su, mu_) + cross_coupling(tl, sl, ml, tu, su, mu_))


@njit(cache=True)
def total_energy(types, spins, lengths):
    n = lengths.shape[0]
    tot = 0
    for i in range(n):
        tot += strip_coupling(spins[i], lengths[i])
        k = (i + 1) % n
        tot += cross_coupling(types[i], spins[i], lengths[i], types[k], spins[k], lengths[k])
    return -tot


@njit(cache=True)
def _rows_equal(ta, sa, tb, sb, m):
    for k in range(m):
        if ta[k] != tb[k] or sa[k] != sb[k]:
            return False
    return True


@njit(cache=True)
def _reverse_weights(big_tl, big_sl, big_ml, big_tu, big_su, big_mu,
                     tl, sl, ml, tu, su, mu_, n_big, buf_t1, buf_s1, buf_t2, buf_s2):
    """Ranks whose deletion maps the big pair of strips to the small pair.

    Returns (their count, sum over them of 1 / (A B)), with A and B the slot
    counts an insertion at that rank has in the small state.
    """
    count = 0
    inv = 0.0
    for r in range(n_big):
        ju = up_pos(big_tu, big_mu, r)
        if ju == 0 and big_tu[1] == 0:
            continue
        jd = down_pos(big_tl, big_ml, r)
        delete_at(big_tu, big_su, big_mu, ju, buf_t1, buf_s1)
        delete_at(big_tl, big_sl, big_ml, jd, buf_t2, buf_s2)
        if _rows_equal(buf_t1, buf_s1, tu, su, mu_) and _rows_equal(buf_t2, buf_s2, tl, sl, ml):
            count += 1
            _, a = up_slots(tu, mu_, r)
            _, b = down_slots(tl, ml, r)
            inv += 1.0 / (a * b)
    return count, inv


@njit(cache=True)
def eval_insert(types, spins, lengths, nsl, i, r, a_off, b_off, s_up, s_dn, beta, mu,
                new_tl, new_sl, new_tu, new_su, buf_t1, buf_s1, buf_t2, buf_s2):
    """Build the insertion outcome in the ``new_*`` rows; returns (log acceptance, delta h)."""
    n_strips = lengths.shape[0]
    u = i
    l = (i - 1 + n_strips) % n_strips
    mu_, ml = lengths[u], lengths[l]
    ju0, _ = up_slots(types[u], mu_, r)
    jd0, _ = down_slots(types[l], ml, r)
    insert_at(types[u], spins[u], mu_, ju0 + a_off, 1, s_up, new_tu, new_su)
    insert_at(types[l], spins[l], ml, jd0 + b_off, 0, s_dn, new_tl, new_sl)
    h_old = local_energy(types[l], spins[l], ml, types[u], spins[u], mu_)
    h_new = local_energy(new_tl, new_sl, ml + 1, new_tu, new_su, mu_ + 1)
    dh = h_new - h_old
    cnt, inv = _reverse_weights(new_tl, new_sl, ml + 1, new_tu, new_su, mu_ + 1,
                                types[l], spins[l], ml, types[u], spins[u], mu_,
                                nsl[i] + 1, buf_t1, buf_s1, buf_t2, buf_s2)
    log_a = -2.0 * mu - beta * dh + math.log(4.0 * cnt / inv)
    return log_a, dh


@njit(cache=True)
def eval_delete(types, spins, lengths, nsl, i, r, beta, mu,
                new_tl, new_sl, new_tu, new_su, buf_t1, buf_s1, buf_t2, buf_s2):
    """Build the deletion outcome; returns (valid, log acceptance, delta h)."""
    n_strips = lengths.shape[0]
    u = i
    l = (i - 1 + n_strips) % n_strips
    mu_, ml = lengths[u], lengths[l]
    ju = up_pos(types[u], mu_, r)
    if ju == 0 and types[u][1] == 0:
        return False, -np.inf, 0
    jd = down_pos(types[l], ml, r)
    delete_at(types[u], spins[u], mu_, ju, new_tu, new_su)
    delete_at(types[l], spins[l], ml, jd, new_tl, new_sl)
    h_old = local_energy(types[l], spins[l], ml, types[u], spins[u], mu_)
    h_new = local_energy(new_tl, new_sl, ml - 1, new_tu, new_su, mu_ - 1)
    dh = h_new - h_old
    cnt, inv = _reverse_weights(types[l], spins[l], ml, types[u], spins[u], mu_,
                                new_tl, new_sl, ml - 1, new_tu, new_su, mu_ - 1,
                                nsl[i], buf_t1, buf_s1, buf_t2, buf_s2)
    log_a = 2.0 * mu - beta * dh + math.log(inv / (4.0 * cnt))
    return True, log_a, dh


@njit(cache=True)
def _commit(types, spins, lengths, i, new_tl, new_sl, new_tu, new_su, dm):
    n_strips = lengths.shape[0]
    u = i
    l = (i - 1 + n_strips) % n_strips
    lengths[u] += dm
    lengths[l] += dm
    for k in range(types.shape[1]):
        types[u, k] = new_tu[k] if k < lengths[u] else 0
        spins[u, k] = new_su[k] if k < lengths[u] else 1
        types[l, k] = new_tl[k] if k < lengths[l] else 0
        spins[l, k] = new_sl[k] if k < lengths[l] else 1


@njit(cache=True)
def geometry_attempt(types, spins, lengths, nsl, K_cap, beta, mu, rng, bufs):
    """One Metropolis insert/delete attempt at a uniformly chosen slice.

    Returns (accepted, delta h, delta n).
    """
    n_strips = lengths.shape[0]
    new_tl, new_sl, new_tu, new_su = bufs[0], bufs[1], bufs[2], bufs[3]
    b1t, b1s, b2t, b2s = bufs[4], bufs[5], bufs[6], bufs[7]
    i = int(rng.random() * n_strips)
    n = nsl[i]
    u = i
    l = (i - 1 + n_strips) % n_strips
    if rng.random() < 0.5:
        r = int(rng.random() * (n + 1))
        _, a = up_slots(types[u], lengths[u], r)
        _, b = down_slots(types[l], lengths[l], r)
        a_off = int(rng.random() * a)
        b_off = int(rng.random() * b)
        s_up = 1 if rng.random() < 0.5 else -1
        s_dn = 1 if rng.random() < 0.5 else -1
        if n + 1 > K_cap:
            return False, 0, 0
        log_a, dh = eval_insert(types, spins, lengths, nsl, i, r, a_off, b_off, s_up, s_dn,
                                beta, mu, new_tl, new_sl, new_tu, new_su, b1t, b1s, b2t, b2s)
        if log_a >= 0.0 or rng.random() < math.exp(log_a):
            _commit(types, spins, lengths, i, new_tl, new_sl, new_tu, new_su, 1)
            nsl[i] += 1
            return True, dh, 2
        return False, 0, 0
    r = int(rng.random() * n)
    if n - 1 < 1:
        return False, 0, 0
    valid, log_a, dh = eval_delete(types, spins, lengths, nsl, i, r, beta, mu,
                                   new_tl, new_sl, new_tu, new_su, b1t, b1s, b2t, b2s)
    if not valid:
        return False, 0, 0
    if log_a >= 0.0 or rng.random() < math.exp(log_a):
        _commit(types, spins, lengths, i, new_tl, new_sl, new_tu, new_su, -1)
        nsl[i] -= 1
        return True, dh, -2
    return False, 0, 0


@njit(cache=True)
def _find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


@njit(cache=True)
def cluster_flip(types, spins, lengths, p_open, rng):
    """Swendsen-Wang update on the dual graph; returns the number of flipped spins."""
    n_strips = lengths.shape[0]
    offsets = np.zeros(n_strips + 1, dtype=np.int64)
    for i in range(n_strips):
        offsets[i + 1] = offsets[i] + lengths[i]
    nv = offsets[n_strips]
    parent = np.arange(nv)
    size = np.ones(nv, dtype=np.int64)
    for i in range(n_strips):
        m = lengths[i]
        for j in range(m):
            k = (j + 1) % m
            if spins[i, j] == spins[i, k] and rng.random() < p_open:
                _union(parent, size, offsets[i] + j, offsets[i] + k)
    for i in range(n_strips):
        nxt = (i + 1) % n_strips
        ju = 0
        for jl in range(lengths[i]):
            if types[i, jl] == 0:
                while types[nxt, ju] != 1:
                    ju += 1
                if spins[i, jl] == spins[nxt, ju] and rng.random() < p_open:
                    _union(parent, size, offsets[i] + jl, offsets[nxt] + ju)
                ju += 1
    flip = np.zeros(nv, dtype=np.int8)
    for v in range(nv):
        if parent[v] == v:
            flip[v] = 1 if rng.random() < 0.5 else 0
    flipped = 0
    for i in range(n_strips):
        for j in range(lengths[i]):
            if flip[_find(parent, offsets[i] + j)]:
                spins[i, j] = -spins[i, j]
                flipped += 1
    return flipped


@njit(cache=True)
def state_key(types, spins, lengths, K_cap):
    """Injective integer code of a state with every slice size <= K_cap."""
    width = 2 * K_cap
    mbits = 0
    while (1 << mbits) < width - 1:
        mbits += 1
    key = 0
    for i in range(lengths.shape[0]):
        key = (key << mbits) | (lengths[i] - 2)
        for j in range(width):
            t = types[i, j] if j < lengths[i] else 0
            s = 1 if (j < lengths[i] and spins[i, j] < 0) else 0
            key = (key << 2) | (t << 1) | s
    return key


def key_bits(N: int, K_cap: int) -> int:
    width = 2 * K_cap
    mbits = max(0, (width - 2).bit_length())
    return N * (mbits + 2 * width)


@njit(cache=True)
def _magnetization(spins, lengths):
    tot = 0
    for i in range(lengths.shape[0]):
        for j in range(lengths[i]):
            tot += spins[i, j]
    return tot


@njit(cache=True)
def run_chain(types, spins, lengths, nsl, K_cap, beta, mu, steps, thin, rng,
              energy, out_energy, out_nt, out_mag, out_accg, out_accs):
    """Sweeps of (N geometry attempts, one cluster update); records every ``thin`` sweeps.

    Returns (final energy, number of cached-energy mismatches).
    """
    n_strips = lengths.shape[0]
    width = types.shape[1]
    bufs = np.zeros((8, width + 2), dtype=np.int8)
    p_open = -math.expm1(-2.0 * beta)
    nt = 0
    for i in range(n_strips):
        nt += lengths[i]
    mismatches = 0
    acc_g = 0
    try_g = 0
    flips = 0
    seen = 0
    rec = 0
    for step in range(steps):
        for _ in range(n_strips):
            ok, dh, dn = geometry_attempt(types, spins, lengths, nsl, K_cap, beta, mu, rng, bufs)
            try_g += 1
            if ok:
                acc_g += 1
                energy += dh
                nt += dn
        # energy so far is maintained from the geometry moves' local differences
        if (step + 1) % ENERGY_CHECK_INTERVAL == 0:
            if total_energy(types, spins, lengths) != energy:
                mismatches += 1
        flips += cluster_flip(types, spins, lengths, p_open, rng)
        seen += nt
        energy = total_energy(types, spins, lengths)
        if (step + 1) % thin == 0:
            out_energy[rec] = energy
            out_nt[rec] = nt
            out_mag[rec] = _magnetization(spins, lengths)
            out_accg[rec] = acc_g / try_g
            out_accs[rec] = flips / seen
            acc_g = 0
            try_g = 0
            flips = 0
            seen = 0
            rec += 1
    return energy, mismatches


@njit(cache=True)
def run_occupancy(types, spins, lengths, nsl, K_cap, beta, mu, sweeps, rng, trace):
    """Write ``state_key`` after every sweep into ``trace``."""
    n_strips = lengths.shape[0]
    bufs = np.zeros((8, types.shape[1] + 2), dtype=np.int8)
    p_open = -math.expm1(-2.0 * beta)
    for k in range(sweeps):
        for _ in range(n_strips):
            geometry_attempt(types, spins, lengths, nsl, K_cap, beta, mu, rng, bufs)
        cluster_flip(types, spins, lengths, p_open, rng)
        trace[k] = state_key(types, spins, lengths, K_cap)
