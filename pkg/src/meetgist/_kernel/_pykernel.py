"""Pure-Python SampleRank chain kernel (fallback backend).

One call runs one chain on one compiled discussion: random (c, d) init, then
a fixed number of proposal rounds. Proposals are a single-unit relation
resample followed by a single-cluster selection flip; the better of
{current, proposal} under the objective drives a margin-rank weight update,
and the chain moves to the proposal exactly when the proposal is the better
one (ties prefer the proposal).

The compiled backend (`_ckernel`) implements the identical operation order,
including RNG draw order and floating-point evaluation order, so runs are
bit-identical across backends:

* draws: per chain, one label draw per non-root unit (increasing index,
  skipped entirely when only one label exists), one bit per cluster; per
  round, unit draw + replacement-label draw, then cluster draw;
* F1 values are recomputed from integer counts each round (no accumulated
  float state);
* the sparse feature-difference entries are emitted in a fixed order and
  summed left to right.
"""

from __future__ import annotations

BACKEND = "pure"

_M64 = (1 << 64) - 1
_MULT = 6364136223846793005


def _f1(tp: int, fp: int, fn: int) -> float:
    if tp == 0:
        return 0.0
    p = tp / (tp + fp)
    r = tp / (tp + fn)
    return 2.0 * p * r / (p + r)


def _lists(view):
    """Python-list mirror of the view's arrays, memoized on the view."""

    cached = getattr(view, "_pylists", None)
    if cached is not None:
        return cached
    lists = {
        "parent": view.parent.tolist(),
        "nonroot": view.nonroot.tolist(),
        "children_ptr": view.children_ptr.tolist(),
        "children": view.children.tolist(),
        "dptr": view.dptr.tolist(),
        "dids": view.dids.tolist(),
        "dvals": view.dvals.tolist(),
        "cand_unit": view.cand_unit.tolist(),
        "cand_cluster": view.cand_cluster.tolist(),
        "cptr": view.cptr.tolist(),
        "cids": view.cids.tolist(),
        "cvals": view.cvals.tolist(),
        "clus_ptr": view.clus_ptr.tolist(),
        "clus_members": view.clus_members.tolist(),
        "cluster_size": view.cluster_size.tolist(),
        "unit_cand_ptr": view.unit_cand_ptr.tolist(),
        "unit_cands": view.unit_cands.tolist(),
        "gold_cluster": view.gold_cluster.tolist(),
        "gold_d": view.gold_d.tolist(),
    }
    view._pylists = lists
    return lists


def run_chain(view, weights, sums, rng_state, rounds, eta, alpha, joint,
              count, trace=None, snapshot_hook=None):
    """Run one chain; mutates weights/sums/rng_state in place.

    ``weights``/``sums`` carry numpy blocks (wc, wd, wo2, wcd); ``rng_state``
    is a uint64[2] (state, increment) pair; ``trace``, when given, is a
    4-tuple of per-round arrays (signed objective delta, margin, updated
    flag, accepted flag). Returns the new snapshot count.
    """

    v = _lists(view)
    parent = v["parent"]
    nonroot = v["nonroot"]
    children_ptr = v["children_ptr"]
    children = v["children"]
    dptr = v["dptr"]
    dids = v["dids"]
    dvals = v["dvals"]
    cand_unit = v["cand_unit"]
    cand_cluster = v["cand_cluster"]
    cptr = v["cptr"]
    cids = v["cids"]
    cvals = v["cvals"]
    clus_ptr = v["clus_ptr"]
    clus_members = v["clus_members"]
    cluster_size = v["cluster_size"]
    unit_cand_ptr = v["unit_cand_ptr"]
    unit_cands = v["unit_cands"]
    gold_cluster = v["gold_cluster"]
    gold_d = v["gold_d"]

    n_units = view.n_units
    L = view.n_labels
    G = view.n_clusters
    n_nonroot = len(nonroot)

    wc = weights.wc
    wdf = weights.wd.reshape(-1)
    wo2f = weights.wo2.reshape(-1)
    wcdf = weights.wcd.reshape(-1)

    state = int(rng_state[0])
    inc = int(rng_state[1])

    def nxt() -> int:
        nonlocal state
        old = state
        state = (old * _MULT + inc) & _M64
        x = (((old >> 18) ^ old) >> 27) & 0xFFFFFFFF
        r = old >> 59
        return ((x >> r) | (x << ((32 - r) & 31))) & 0xFFFFFFFF

    # ----- random chain init
    d = [0] * n_units
    if L > 1:
        for i in nonroot:
            d[i] = nxt() % L
    csel = [0] * G
    for g in range(G):
        csel[g] = nxt() % 2

    # ----- objective bookkeeping (integer counts)
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

    if joint:
        gcount = [0] * L
        pcount = [0] * L
        tp_d = [0] * L
        for i in nonroot:
            gl = gold_d[i]
            pl = d[i]
            gcount[gl] += 1
            pcount[pl] += 1
            if gl == pl:
                tp_d[pl] += 1
        kg = sum(1 for c in gcount if c)
        f1l = [0.0] * L
        for l in range(L):
            if gcount[l]:
                f1l[l] = _f1(tp_d[l], pcount[l] - tp_d[l],
                             gcount[l] - tp_d[l])

        def macro(sub_old: int, f_old: float, sub_new: int,
                  f_new: float) -> float:
            s = 0.0
            for l in range(L):
                if gcount[l]:
                    if l == sub_old:
                        s += f_old
                    elif l == sub_new:
                        s += f_new
                    else:
                        s += f1l[l]
            return s / kg if kg else 0.0

        f1d_cur = macro(-1, 0.0, -1, 0.0)

    f1c_cur = _f1(tp_c, fp_c, pos_total - tp_c)
    if joint:
        om_cur = alpha * f1c_cur + (1.0 - alpha) * f1d_cur
    else:
        om_cur = f1c_cur

    if trace is not None:
        tr_dom, tr_margin, tr_upd, tr_acc = trace

    can_move_d = n_nonroot > 0 and L > 1

    for t in range(rounds):
        # ----- proposal: one relation resample, then one cluster flip
        k = -1
        l_old = l_new = 0
        if can_move_d:
            k = nonroot[nxt() % n_nonroot]
            l_old = d[k]
            r = nxt() % (L - 1)
            l_new = r + 1 if r >= l_old else r
        g = -1
        new_sel = 0
        if G:
            g = nxt() % G
            new_sel = 1 - csel[g]

        # ----- objective of the proposal
        tp_cn, fp_cn = tp_c, fp_c
        if g >= 0:
            sz = cluster_size[g]
            if gold_cluster[g] == 1:
                tp_cn = tp_cn + sz if new_sel else tp_cn - sz
            else:
                fp_cn = fp_cn + sz if new_sel else fp_cn - sz
        f1c_new = _f1(tp_cn, fp_cn, pos_total - tp_cn)

        if joint:
            if k >= 0:
                gl = gold_d[k]
                tp_lo = tp_d[l_old] - (1 if gl == l_old else 0)
                pc_lo = pcount[l_old] - 1
                tp_ln = tp_d[l_new] + (1 if gl == l_new else 0)
                pc_ln = pcount[l_new] + 1
                f_lo = _f1(tp_lo, pc_lo - tp_lo, gcount[l_old] - tp_lo)
                f_ln = _f1(tp_ln, pc_ln - tp_ln, gcount[l_new] - tp_ln)
                f1d_new = macro(l_old, f_lo, l_new, f_ln)
            else:
                f1d_new = f1d_cur
            om_new = alpha * f1c_new + (1.0 - alpha) * f1d_new
        else:
            om_new = f1c_new

        dw = om_new - om_cur
        plus_is_prop = dw >= 0.0
        delta_omega = dw if plus_is_prop else -dw

        # ----- sparse feature difference Phi(proposal) - Phi(current)
        blks: list[int] = []
        idxs: list[int] = []
        vals: list[float] = []
        if k >= 0:
            a, b = dptr[k], dptr[k + 1]
            for e in range(a, b):
                fi = dids[e]
                val = dvals[e]
                blks.append(1)
                idxs.append(fi * L + l_old)
                vals.append(-val)
                blks.append(1)
                idxs.append(fi * L + l_new)
                vals.append(val)
            p = parent[k]
            if p > 0:
                dp = d[p]
                blks.append(2)
                idxs.append(l_old * L + dp)
                vals.append(-1.0)
                blks.append(2)
                idxs.append(l_new * L + dp)
                vals.append(1.0)
            for e in range(children_ptr[k], children_ptr[k + 1]):
                dc = d[children[e]]
                blks.append(2)
                idxs.append(dc * L + l_old)
                vals.append(-1.0)
                blks.append(2)
                idxs.append(dc * L + l_new)
                vals.append(1.0)
            for e in range(unit_cand_ptr[k], unit_cand_ptr[k + 1]):
                j = unit_cands[e]
                if csel[cand_cluster[j]]:
                    a, b = cptr[j], cptr[j + 1]
                    for q in range(a, b):
                        fi = cids[q]
                        val = cvals[q]
                        blks.append(3)
                        idxs.append(fi * L + l_old)
                        vals.append(-val)
                        blks.append(3)
                        idxs.append(fi * L + l_new)
                        vals.append(val)
        if g >= 0:
            sign = 1.0 if new_sel else -1.0
            for e in range(clus_ptr[g], clus_ptr[g + 1]):
                j = clus_members[e]
                u = cand_unit[j]
                tagged = parent[u] >= 0
                if tagged:
                    du = l_new if u == k else d[u]
                a, b = cptr[j], cptr[j + 1]
                for q in range(a, b):
                    fi = cids[q]
                    sval = sign * cvals[q]
                    blks.append(0)
                    idxs.append(fi)
                    vals.append(sval)
                    if tagged:
                        blks.append(3)
                        idxs.append(fi * L + du)
                        vals.append(sval)

        # ----- margin of the ranking gradient
        acc = 0.0
        for e in range(len(blks)):
            blk = blks[e]
            i = idxs[e]
            if blk == 0:
                acc += wc.item(i) * vals[e]
            elif blk == 1:
                acc += wdf.item(i) * vals[e]
            elif blk == 2:
                acc += wo2f.item(i) * vals[e]
            else:
                acc += wcdf.item(i) * vals[e]
        s_dir = 1.0 if plus_is_prop else -1.0
        margin = s_dir * acc

        updated = 1 if (delta_omega != 0.0 and margin < delta_omega) else 0
        if updated:
            step = eta * s_dir
            for e in range(len(blks)):
                blk = blks[e]
                i = idxs[e]
                if blk == 0:
                    wc[i] += step * vals[e]
                elif blk == 1:
                    wdf[i] += step * vals[e]
                elif blk == 2:
                    wo2f[i] += step * vals[e]
                else:
                    wcdf[i] += step * vals[e]
            sums.wc += weights.wc
            sums.wd += weights.wd
            sums.wo2 += weights.wo2
            sums.wcd += weights.wcd
            count += 1
            if snapshot_hook is not None:
                snapshot_hook()

        accepted = 1 if plus_is_prop else 0
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
                tp_c, fp_c = tp_cn, fp_cn
            f1c_cur = f1c_new
            om_cur = om_new

        if trace is not None:
            tr_dom[t] = dw
            tr_margin[t] = margin
            tr_upd[t] = updated
            tr_acc[t] = accepted

    rng_state[0] = state
    return count
