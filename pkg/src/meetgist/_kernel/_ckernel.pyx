# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, nonecheck=False
"""Compiled SampleRank chain kernel.

Mirrors ``_pykernel.run_chain`` operation for operation (RNG draw order,
sparse-entry emission order, float evaluation order), so the two backends
produce bit-identical training runs. See the pure module for the contract.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "compiled"

ctypedef unsigned long long u64
ctypedef unsigned int u32

cdef u64 _MULT = 6364136223846793005ULL


cdef inline u32 _pcg_next(u64 *state, u64 inc) noexcept nogil:
    cdef u64 old = state[0]
    state[0] = old * _MULT + inc
    cdef u32 x = <u32>((((old >> 18) ^ old) >> 27) & 0xFFFFFFFFULL)
    cdef u32 r = <u32>(old >> 59)
    return (x >> r) | (x << ((32 - r) & 31))


cdef inline double _f1(long tp, long fp, long fn) noexcept nogil:
    if tp == 0:
        return 0.0
    cdef double p = (<double>tp) / (<double>(tp + fp))
    cdef double r = (<double>tp) / (<double>(tp + fn))
    return 2.0 * p * r / (p + r)


def run_chain(view, weights, sums, rng_state, long rounds, double eta,
              double alpha, bint joint, long count, trace=None,
              snapshot_hook=None):
    """Run one chain; mutates weights/sums/rng_state in place.

    Same signature and semantics as the pure backend.
    """

    cdef cnp.int64_t[::1] parent = view.parent
    cdef cnp.int64_t[::1] nonroot = view.nonroot
    cdef cnp.int64_t[::1] children_ptr = view.children_ptr
    cdef cnp.int64_t[::1] children = view.children
    cdef cnp.int64_t[::1] dptr = view.dptr
    cdef cnp.int64_t[::1] dids = view.dids
    cdef cnp.float64_t[::1] dvals = view.dvals
    cdef cnp.int64_t[::1] cand_unit = view.cand_unit
    cdef cnp.int64_t[::1] cand_cluster = view.cand_cluster
    cdef cnp.int64_t[::1] cptr = view.cptr
    cdef cnp.int64_t[::1] cids = view.cids
    cdef cnp.float64_t[::1] cvals = view.cvals
    cdef cnp.int64_t[::1] clus_ptr = view.clus_ptr
    cdef cnp.int64_t[::1] clus_members = view.clus_members
    cdef cnp.int64_t[::1] cluster_size = view.cluster_size
    cdef cnp.int64_t[::1] unit_cand_ptr = view.unit_cand_ptr
    cdef cnp.int64_t[::1] unit_cands = view.unit_cands
    cdef cnp.int8_t[::1] gold_cluster = view.gold_cluster
    cdef cnp.int64_t[::1] gold_d = view.gold_d

    cdef long n_units = view.n_units
    cdef long L = view.n_labels
    cdef long G = view.n_clusters
    cdef long n_nonroot = nonroot.shape[0]

    cdef cnp.float64_t[::1] wc = weights.wc
    cdef cnp.float64_t[::1] wdf = weights.wd.reshape(-1)
    cdef cnp.float64_t[::1] wo2f = weights.wo2.reshape(-1)
    cdef cnp.float64_t[::1] wcdf = weights.wcd.reshape(-1)
    cdef cnp.float64_t[::1] sc = sums.wc
    cdef cnp.float64_t[::1] sdf = sums.wd.reshape(-1)
    cdef cnp.float64_t[::1] so2f = sums.wo2.reshape(-1)
    cdef cnp.float64_t[::1] scdf = sums.wcd.reshape(-1)
    cdef long n_wc = wc.shape[0]
    cdef long n_wd = wdf.shape[0]
    cdef long n_wo2 = wo2f.shape[0]
    cdef long n_wcd = wcdf.shape[0]

    cdef cnp.uint64_t[::1] rstate = rng_state
    cdef u64 state = rstate[0]
    cdef u64 inc = rstate[1]

    cdef bint has_trace = trace is not None
    cdef cnp.float64_t[::1] tr_dom
    cdef cnp.float64_t[::1] tr_margin
    cdef cnp.uint8_t[::1] tr_upd
    cdef cnp.uint8_t[::1] tr_acc
    if has_trace:
        tr_dom, tr_margin, tr_upd, tr_acc = trace

    # scratch
    cdef cnp.int64_t[::1] d = np.zeros(n_units, dtype=np.int64)
    cdef cnp.int64_t[::1] csel = np.zeros(max(G, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] gcount = np.zeros(max(L, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] pcount = np.zeros(max(L, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] tp_d = np.zeros(max(L, 1), dtype=np.int64)
    cdef cnp.float64_t[::1] f1l = np.zeros(max(L, 1), dtype=np.float64)
    cdef long cap = view.max_delta_entries
    cdef cnp.int64_t[::1] ent_blk = np.zeros(max(cap, 1), dtype=np.int64)
    cdef cnp.int64_t[::1] ent_idx = np.zeros(max(cap, 1), dtype=np.int64)
    cdef cnp.float64_t[::1] ent_val = np.zeros(max(cap, 1), dtype=np.float64)

    cdef long i, g, l, t, e, q, j, u, k, p
    cdef long l_old, l_new, r_draw, new_sel, sz, gl, dp, dc, du
    cdef long tp_c, fp_c, pos_total, tp_cn, fp_cn
    cdef long kg, tp_lo, pc_lo, tp_ln, pc_ln
    cdef long n_ent, updated, accepted
    cdef long fi
    cdef double val, sval, sign, acc, margin, s_dir, step
    cdef double f1c_cur, f1d_cur, om_cur, f1c_new, f1d_new, om_new
    cdef double dw, delta_omega, f_lo, f_ln, msum
    cdef bint can_move_d, tagged

    # ----- random chain init
    for i in range(n_units):
        d[i] = 0
    if L > 1:
        for e in range(n_nonroot):
            i = nonroot[e]
            d[i] = <long>(_pcg_next(&state, inc) % <u32>L)
    for g in range(G):
        csel[g] = <long>(_pcg_next(&state, inc) % 2u)

    # ----- objective bookkeeping
    tp_c = 0
    fp_c = 0
    pos_total = 0
    for g in range(G):
        sz = cluster_size[g]
        if gold_cluster[g] == 1:
            pos_total += sz
            if csel[g]:
                tp_c += sz
        elif csel[g]:
            fp_c += sz

    kg = 0
    f1d_cur = 0.0
    if joint:
        for l in range(L):
            gcount[l] = 0
            pcount[l] = 0
            tp_d[l] = 0
        for e in range(n_nonroot):
            i = nonroot[e]
            gl = gold_d[i]
            gcount[gl] += 1
            pcount[d[i]] += 1
            if gl == d[i]:
                tp_d[d[i]] += 1
        for l in range(L):
            if gcount[l]:
                kg += 1
                f1l[l] = _f1(tp_d[l], pcount[l] - tp_d[l],
                             gcount[l] - tp_d[l])
            else:
                f1l[l] = 0.0
        if kg:
            msum = 0.0
            for l in range(L):
                if gcount[l]:
                    msum += f1l[l]
            f1d_cur = msum / kg

    f1c_cur = _f1(tp_c, fp_c, pos_total - tp_c)
    if joint:
        om_cur = alpha * f1c_cur + (1.0 - alpha) * f1d_cur
    else:
        om_cur = f1c_cur

    can_move_d = n_nonroot > 0 and L > 1

    for t in range(rounds):
        # ----- proposal
        k = -1
        l_old = 0
        l_new = 0
        if can_move_d:
            k = nonroot[<long>(_pcg_next(&state, inc) % <u32>n_nonroot)]
            l_old = d[k]
            r_draw = <long>(_pcg_next(&state, inc) % <u32>(L - 1))
            l_new = r_draw + 1 if r_draw >= l_old else r_draw
        g = -1
        new_sel = 0
        if G:
            g = <long>(_pcg_next(&state, inc) % <u32>G)
            new_sel = 1 - csel[g]

        # ----- objective of the proposal
        tp_cn = tp_c
        fp_cn = fp_c
        if g >= 0:
            sz = cluster_size[g]
            if gold_cluster[g] == 1:
                tp_cn = tp_cn + sz if new_sel else tp_cn - sz
            else:
                fp_cn = fp_cn + sz if new_sel else fp_cn - sz
        f1c_new = _f1(tp_cn, fp_cn, pos_total - tp_cn)

        f_lo = 0.0
        f_ln = 0.0
        if joint:
            if k >= 0:
                gl = gold_d[k]
                tp_lo = tp_d[l_old] - (1 if gl == l_old else 0)
                pc_lo = pcount[l_old] - 1
                tp_ln = tp_d[l_new] + (1 if gl == l_new else 0)
                pc_ln = pcount[l_new] + 1
                f_lo = _f1(tp_lo, pc_lo - tp_lo, gcount[l_old] - tp_lo)
                f_ln = _f1(tp_ln, pc_ln - tp_ln, gcount[l_new] - tp_ln)
                msum = 0.0
                for l in range(L):
                    if gcount[l]:
                        if l == l_old:
                            msum += f_lo
                        elif l == l_new:
                            msum += f_ln
                        else:
                            msum += f1l[l]
                f1d_new = msum / kg if kg else 0.0
            else:
                f1d_new = f1d_cur
            om_new = alpha * f1c_new + (1.0 - alpha) * f1d_new
        else:
            om_new = f1c_new

        dw = om_new - om_cur
        delta_omega = dw if dw >= 0.0 else -dw

        # ----- sparse feature difference, fixed emission order
        n_ent = 0
        if k >= 0:
            for e in range(dptr[k], dptr[k + 1]):
                fi = dids[e]
                val = dvals[e]
                ent_blk[n_ent] = 1
                ent_idx[n_ent] = fi * L + l_old
                ent_val[n_ent] = -val
                n_ent += 1
                ent_blk[n_ent] = 1
                ent_idx[n_ent] = fi * L + l_new
                ent_val[n_ent] = val
                n_ent += 1
            p = parent[k]
            if p > 0:
                dp = d[p]
                ent_blk[n_ent] = 2
                ent_idx[n_ent] = l_old * L + dp
                ent_val[n_ent] = -1.0
                n_ent += 1
                ent_blk[n_ent] = 2
                ent_idx[n_ent] = l_new * L + dp
                ent_val[n_ent] = 1.0
                n_ent += 1
            for e in range(children_ptr[k], children_ptr[k + 1]):
                dc = d[children[e]]
                ent_blk[n_ent] = 2
                ent_idx[n_ent] = dc * L + l_old
                ent_val[n_ent] = -1.0
                n_ent += 1
                ent_blk[n_ent] = 2
                ent_idx[n_ent] = dc * L + l_new
                ent_val[n_ent] = 1.0
                n_ent += 1
            for e in range(unit_cand_ptr[k], unit_cand_ptr[k + 1]):
                j = unit_cands[e]
                if csel[cand_cluster[j]]:
                    for q in range(cptr[j], cptr[j + 1]):
                        fi = cids[q]
                        val = cvals[q]
                        ent_blk[n_ent] = 3
                        ent_idx[n_ent] = fi * L + l_old
                        ent_val[n_ent] = -val
                        n_ent += 1
                        ent_blk[n_ent] = 3
                        ent_idx[n_ent] = fi * L + l_new
                        ent_val[n_ent] = val
                        n_ent += 1
        if g >= 0:
            sign = 1.0 if new_sel else -1.0
            for e in range(clus_ptr[g], clus_ptr[g + 1]):
                j = clus_members[e]
                u = cand_unit[j]
                tagged = parent[u] >= 0
                du = 0
                if tagged:
                    du = l_new if u == k else d[u]
                for q in range(cptr[j], cptr[j + 1]):
                    fi = cids[q]
                    sval = sign * cvals[q]
                    ent_blk[n_ent] = 0
                    ent_idx[n_ent] = fi
                    ent_val[n_ent] = sval
                    n_ent += 1
                    if tagged:
                        ent_blk[n_ent] = 3
                        ent_idx[n_ent] = fi * L + du
                        ent_val[n_ent] = sval
                        n_ent += 1

        # ----- margin of the ranking gradient
        acc = 0.0
        for e in range(n_ent):
            i = ent_idx[e]
            if ent_blk[e] == 0:
                acc += wc[i] * ent_val[e]
            elif ent_blk[e] == 1:
                acc += wdf[i] * ent_val[e]
            elif ent_blk[e] == 2:
                acc += wo2f[i] * ent_val[e]
            else:
                acc += wcdf[i] * ent_val[e]
        s_dir = 1.0 if dw >= 0.0 else -1.0
        margin = s_dir * acc

        updated = 1 if (delta_omega != 0.0 and margin < delta_omega) else 0
        if updated:
            step = eta * s_dir
            for e in range(n_ent):
                i = ent_idx[e]
                if ent_blk[e] == 0:
                    wc[i] += step * ent_val[e]
                elif ent_blk[e] == 1:
                    wdf[i] += step * ent_val[e]
                elif ent_blk[e] == 2:
                    wo2f[i] += step * ent_val[e]
                else:
                    wcdf[i] += step * ent_val[e]
            for i in range(n_wc):
                sc[i] += wc[i]
            for i in range(n_wd):
                sdf[i] += wdf[i]
            for i in range(n_wo2):
                so2f[i] += wo2f[i]
            for i in range(n_wcd):
                scdf[i] += wcdf[i]
            count += 1
            if snapshot_hook is not None:
                snapshot_hook()

        accepted = 1 if dw >= 0.0 else 0
        if accepted:
            if k >= 0:
                d[k] = l_new
                if joint:
                    if gold_d[k] == l_old:
                        tp_d[l_old] -= 1
                    elif gold_d[k] == l_new:
                        tp_d[l_new] += 1
                    pcount[l_old] -= 1
                    pcount[l_new] += 1
                    f1l[l_old] = f_lo
                    f1l[l_new] = f_ln
                    f1d_cur = f1d_new
            if g >= 0:
                csel[g] = new_sel
                tp_c = tp_cn
                fp_c = fp_cn
            f1c_cur = f1c_new
            om_cur = om_new

        if has_trace:
            tr_dom[t] = dw
            tr_margin[t] = margin
            tr_upd[t] = <unsigned char>updated
            tr_acc[t] = <unsigned char>accepted

    rstate[0] = state
    return count
