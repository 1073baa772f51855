"""Numba kernels for the continuous-time QMC sampling loop.

The chain state lives in flat arrays so the whole sweep runs in nopython
mode: per-site occupations at tau = 0 (``spin0``), per-site sorted kink
times in the rows of a shared 2-D buffer (``kinks``) with per-site counts
(``kcnt``), and the interaction table in CSR form.

One site update:
  1. draw candidate cut times on [0, beta) as a Poisson process with rate
     Omega/2 = 1/2 (exponential gaps; draws colliding with an existing kink
     time are redrawn);
  2. the cut set is the union of the line's kinks and the candidates; the
     maximal intervals between consecutive cuts (cyclically) are segments,
     on each of which n_i is constant;
  3. per segment S, the diagonal-action change on flipping n_i throughout S
     is dS = (1 - 2 n_i) * [ sum_j V_ij int_S n_j dtau - Delta |S| ],
     evaluated with exact interval arithmetic via cumulative occupation
     times of the neighbor lines;
  4. each segment flips independently, by default with heat-bath probability
     1/(1 + exp(dS)) (Metropolis min(1, exp(-dS)) is available, but it turns
     into a deterministic swap wherever dS = 0 exactly -- e.g. an isolated
     site at zero detuning -- which freezes the kink sector);
  5. the kink list is rebuilt: cuts between equal final values vanish, cuts
     between unequal values become kinks.  The even-parity invariant holds
     by construction (sign changes around a cycle come in pairs).

Kink-buffer overflow protocol: a site update that would need more kink
capacity than the buffer rows provide returns the needed capacity without
mutating anything; the caller restores the generator state, grows the
buffer, and retries, so the stream of random numbers (and hence the chain)
is unchanged.
"""

from __future__ import annotations

import numpy as np
from numba import njit

from rydqmc.rng import next_double, shuffle_in_place


@njit(cache=True, inline="always")
def _count_leq(arr, n, t):
    """Number of entries of sorted arr[:n] that are <= t."""
    lo, hi = 0, n
    while lo < hi:
        mid = (lo + hi) >> 1
        if arr[mid] <= t:
            lo = mid + 1
        else:
            hi = mid
    return lo


@njit(cache=True, inline="always")
def _contains(arr, n, t):
    k = _count_leq(arr, n, t)
    return k > 0 and arr[k - 1] == t


@njit(cache=True, inline="always")
def _flip_accepted(ds, metropolis, rng):
    if metropolis:
        return ds <= 0.0 or next_double(rng) < np.exp(-ds)
    if ds >= 0.0:
        e = np.exp(-ds)
        return next_double(rng) < e / (1.0 + e)
    return next_double(rng) < 1.0 / (1.0 + np.exp(ds))


@njit(cache=True, inline="always")
def _occupied_time(row, n, s0, beta):
    """int_0^beta n(tau) dtau for one line."""
    total = 0.0
    prev = 0.0
    occ = s0
    for k in range(n):
        if occ:
            total += row[k] - prev
        prev = row[k]
        occ ^= 1
    if occ:
        total += beta - prev
    return total


@njit(cache=True)
def site_update_kernel(
    i,
    beta,
    delta,
    metropolis,
    spin0,
    kinks,
    kcnt,
    nbr_ptr,
    nbr_idx,
    nbr_val,
    rng,
    cand_buf,
    cuts_buf,
    flag_buf,
    w_buf,
    val_buf,
):
    """Update the worldline of site i in place.

    Returns (needed_capacity, dS): needed_capacity == 0 on success, else the
    kink-row capacity required to commit the move (state untouched in that
    case).  dS is the total diagonal-action change of the accepted flips.
    """
    k0 = kcnt[i]
    row = kinks[i]

    cand = cand_buf
    nc = 0
    t = 0.0
    while True:
        u = next_double(rng)
        if u <= 0.0:
            continue
        t -= 2.0 * np.log(u)
        if t >= beta:
            break
        if _contains(row, k0, t):
            continue
        if nc == cand.shape[0]:
            bigger = np.empty(2 * cand.shape[0], dtype=np.float64)
            bigger[:nc] = cand[:nc]
            cand = bigger
        cand[nc] = t
        nc += 1

    m = k0 + nc
    if m == 0:
        # no cuts at all: the whole circle is one segment
        acc = 0.0
        for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
            j = nbr_idx[p]
            acc += nbr_val[p] * _occupied_time(kinks[j], kcnt[j], spin0[j], beta)
        ds = (1.0 - 2.0 * spin0[i]) * (acc - delta * beta)
        if _flip_accepted(ds, metropolis, rng):
            spin0[i] ^= 1
            return 0, ds
        return 0, 0.0

    cuts = cuts_buf if cuts_buf.shape[0] >= m else np.empty(m, dtype=np.float64)
    flags = flag_buf if flag_buf.shape[0] >= m else np.empty(m, dtype=np.uint8)
    a = 0
    b = 0
    for k in range(m):
        if a < k0 and (b >= nc or row[a] < cand[b]):
            cuts[k] = row[a]
            flags[k] = 1
            a += 1
        else:
            cuts[k] = cand[b]
            flags[k] = 0
            b += 1

    # w[k] = sum_j V_ij * C_j(cuts[k]) with C_j the cumulative occupied time
    w = w_buf if w_buf.shape[0] >= m else np.empty(m, dtype=np.float64)
    for k in range(m):
        w[k] = 0.0
    wtot = 0.0
    for p in range(nbr_ptr[i], nbr_ptr[i + 1]):
        j = nbr_idx[p]
        vij = nbr_val[p]
        nj = kcnt[j]
        rj = kinks[j]
        q = 0
        cum = 0.0
        prev = 0.0
        occ = spin0[j]
        for k in range(m):
            tk = cuts[k]
            while q < nj and rj[q] <= tk:
                if occ:
                    cum += rj[q] - prev
                prev = rj[q]
                occ ^= 1
                q += 1
            if occ:
                w[k] += vij * (cum + tk - prev)
            else:
                w[k] += vij * cum
        while q < nj:
            if occ:
                cum += rj[q] - prev
            prev = rj[q]
            occ ^= 1
            q += 1
        if occ:
            cum += beta - prev
        wtot += vij * cum

    vals = val_buf if val_buf.shape[0] >= m else np.empty(m, dtype=np.uint8)
    occ_i = spin0[i] ^ (flags[0] & 1)  # occupation on [cuts[0], cuts[1])
    ds_tot = 0.0
    for k in range(m):
        if k < m - 1:
            seg = cuts[k + 1] - cuts[k]
            integ = w[k + 1] - w[k]
        else:
            seg = beta - cuts[m - 1] + cuts[0]
            integ = wtot - w[m - 1] + w[0]
        ds = (1.0 - 2.0 * occ_i) * (integ - delta * seg)
        if _flip_accepted(ds, metropolis, rng):
            vals[k] = occ_i ^ 1
            ds_tot += ds
        else:
            vals[k] = occ_i
        if k < m - 1 and flags[k + 1]:
            occ_i ^= 1

    newk = 0
    prev_val = vals[m - 1]
    for k in range(m):
        if vals[k] != prev_val:
            newk += 1
        prev_val = vals[k]
    if newk > kinks.shape[1]:
        return newk, 0.0

    pos = 0
    prev_val = vals[m - 1]
    for k in range(m):
        if vals[k] != prev_val:
            row[pos] = cuts[k]
            pos += 1
        prev_val = vals[k]
    kcnt[i] = pos
    spin0[i] = vals[m - 1]
    return 0, ds_tot


@njit(cache=True)
def sweep_kernel(
    beta,
    delta,
    metropolis,
    spin0,
    kinks,
    kcnt,
    nbr_ptr,
    nbr_idx,
    nbr_val,
    rng,
    perm,
    start_pos,
    cand_buf,
    cuts_buf,
    flag_buf,
    w_buf,
    val_buf,
    rng_save,
):
    """One sweep: site_update once per site in a fresh uniform random order.

    Returns (pos, needed_capacity, dS_accum).  pos == -1 means the sweep
    completed; otherwise the kink buffer must be grown to needed_capacity
    and the sweep resumed at position pos (generator already rewound).
    """
    n = spin0.shape[0]
    if start_pos == 0:
        for k in range(n):
            perm[k] = k
        shuffle_in_place(rng, perm)
    ds_acc = 0.0
    for pos in range(start_pos, n):
        for k in range(4):
            rng_save[k] = rng[k]
        need, ds = site_update_kernel(
            perm[pos],
            beta,
            delta,
            metropolis,
            spin0,
            kinks,
            kcnt,
            nbr_ptr,
            nbr_idx,
            nbr_val,
            rng,
            cand_buf,
            cuts_buf,
            flag_buf,
            w_buf,
            val_buf,
        )
        if need > 0:
            for k in range(4):
                rng[k] = rng_save[k]
            return pos, need, ds_acc
        ds_acc += ds
    return -1, 0, ds_acc


@njit(cache=True)
def occupations_at(tau, spin0, kinks, kcnt, out):
    for s in range(spin0.shape[0]):
        out[s] = spin0[s] ^ (_count_leq(kinks[s], kcnt[s], tau) & 1)


@njit(cache=True)
def measure_kernel(beta, spin0, kinks, kcnt, n_slices, cos_a, sin_a, cos_b, sin_b, norms, occ_buf, out):
    """Slice-averaged order-parameter moments.

    For each momentum pair o and each of n_slices equally spaced imaginary
    times, F = |(F~_a + F~_b)/2| / norm; out[o] = (mean F, mean F^2, mean F^4).
    """
    n_orders = cos_a.shape[0]
    n = spin0.shape[0]
    for o in range(n_orders):
        out[o, 0] = 0.0
        out[o, 1] = 0.0
        out[o, 2] = 0.0
    for s_idx in range(n_slices):
        tau = beta * s_idx / n_slices
        occupations_at(tau, spin0, kinks, kcnt, occ_buf)
        for o in range(n_orders):
            re_a = 0.0
            im_a = 0.0
            re_b = 0.0
            im_b = 0.0
            for s in range(n):
                if occ_buf[s]:
                    re_a += cos_a[o, s]
                    im_a += sin_a[o, s]
                    re_b += cos_b[o, s]
                    im_b += sin_b[o, s]
            re = 0.5 * (re_a + re_b) / norms[o]
            im = 0.5 * (im_a + im_b) / norms[o]
            f2 = re * re + im * im
            f = np.sqrt(f2)
            out[o, 0] += f
            out[o, 1] += f2
            out[o, 2] += f2 * f2
    for o in range(n_orders):
        out[o, 0] /= n_slices
        out[o, 1] /= n_slices
        out[o, 2] /= n_slices


@njit(cache=True)
def occupied_time_total(beta, spin0, kinks, kcnt):
    total = 0.0
    for s in range(spin0.shape[0]):
        total += _occupied_time(kinks[s], kcnt[s], spin0[s], beta)
    return total


@njit(cache=True)
def total_kinks(kcnt):
    n = 0
    for s in range(kcnt.shape[0]):
        n += kcnt[s]
    return n


@njit(cache=True)
def pair_overlap(row_i, ni, s0_i, row_j, nj, s0_j, beta):
    """int_0^beta n_i n_j dtau by a two-pointer merge of the kink lists."""
    pi = 0
    pj = 0
    occ_i = s0_i
    occ_j = s0_j
    t = 0.0
    total = 0.0
    while True:
        ti = row_i[pi] if pi < ni else beta
        tj = row_j[pj] if pj < nj else beta
        tn = min(ti, tj)
        if occ_i and occ_j:
            total += tn - t
        if tn >= beta:
            break
        while pi < ni and row_i[pi] == tn:
            occ_i ^= 1
            pi += 1
        while pj < nj and row_j[pj] == tn:
            occ_j ^= 1
            pj += 1
        t = tn
    return total


@njit(cache=True)
def diagonal_action_kernel(beta, delta, spin0, kinks, kcnt, pair_i, pair_j, pair_v):
    """From-scratch S = int [sum_{i<j} V_ij n_i n_j - Delta sum_i n_i] dtau."""
    s = 0.0
    for p in range(pair_i.shape[0]):
        i = pair_i[p]
        j = pair_j[p]
        s += pair_v[p] * pair_overlap(
            kinks[i], kcnt[i], spin0[i], kinks[j], kcnt[j], spin0[j], beta
        )
    return s - delta * occupied_time_total(beta, spin0, kinks, kcnt)
