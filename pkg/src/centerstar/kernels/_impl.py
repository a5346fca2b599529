"""Hot numeric kernels: DP fills, keyword-tree matching, anchor chaining.

Every kernel is written against plain numpy arrays so the same source runs
either JIT-compiled (numba, nogil, cached) or interpreted. The backend is
chosen once at import time: set CENTERSTAR_NO_NUMBA=1 to force the
interpreted fallback. Kernels release the GIL under numba, which is what
lets the thread-pool engine scale on multi-core hosts.

Conventions shared with the rest of the package (and with the independent
test oracles):
  * gap of length k costs W_k = gap_open + gap_extend * (k - 1)
  * op codes: 0 = diagonal, 1 = up (gap in row b), 2 = left (gap in row a)
  * ties resolve diagonal > up > left; gap runs close as early as possible
  * residue codes >= n_canonical are wildcards and are never indexed or
    matched by the k-mer automaton
"""

import os

import numpy as np


def _want_numba() -> bool:
    flag = os.environ.get("CENTERSTAR_NO_NUMBA", "").strip().lower()
    return flag not in {"1", "true", "yes", "on"}


NUMBA_ENABLED = False
if _want_numba():
    try:
        from numba import njit as _njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        NUMBA_ENABLED = False

if NUMBA_ENABLED:

    def _kernel(fn):
        return _njit(cache=True, nogil=True)(fn)

else:

    def _kernel(fn):
        return fn


NEG = -(1 << 29)  # "minus infinity" sentinel, safe against int32 underflow


@_kernel
def sw_fill_kernel(a, b, sub, gap_open, gap_extend):
    """Local-alignment fill with affine gaps and a zero floor.

    Returns full H, E, F matrices plus the lexicographically smallest cell
    attaining the global maximum of H.
    """
    n = a.shape[0]
    m = b.shape[0]
    H = np.zeros((n + 1, m + 1), dtype=np.int32)
    E = np.full((n + 1, m + 1), NEG, dtype=np.int32)
    F = np.full((n + 1, m + 1), NEG, dtype=np.int32)
    best = 0
    bi = 0
    bj = 0
    for i in range(1, n + 1):
        ai = a[i - 1]
        for j in range(1, m + 1):
            e = H[i, j - 1] - gap_open
            e2 = E[i, j - 1] - gap_extend
            if e2 > e:
                e = e2
            f = H[i - 1, j] - gap_open
            f2 = F[i - 1, j] - gap_extend
            if f2 > f:
                f = f2
            d = H[i - 1, j - 1] + sub[ai, b[j - 1]]
            h = 0
            if d > h:
                h = d
            if f > h:
                h = f
            if e > h:
                h = e
            H[i, j] = h
            E[i, j] = e
            F[i, j] = f
            if h > best:
                best = h
                bi = i
                bj = j
    return H, E, F, bi, bj


@_kernel
def nw_align_kernel(a, b, sub, gap_open, gap_extend):
    """Global alignment with affine gaps; returns (score, op codes).

    Value rows roll (two rows live at a time); traceback decisions are
    packed one byte per cell: bits 0-1 the H-lane source (0 diag, 1 up,
    2 left), bit 2 set when the up-gap closes, bit 3 when the left-gap
    closes.
    """
    n = a.shape[0]
    m = b.shape[0]
    ops = np.empty(n + m, dtype=np.uint8)
    if n == 0 and m == 0:
        return 0, ops[:0]
    if n == 0:
        for j in range(m):
            ops[j] = 2
        return -(gap_open + gap_extend * (m - 1)), ops[:m]
    if m == 0:
        for i in range(n):
            ops[i] = 1
        return -(gap_open + gap_extend * (n - 1)), ops[:n]

    tb = np.zeros((n + 1, m + 1), dtype=np.uint8)
    hprev = np.empty(m + 1, dtype=np.int64)
    fprev = np.empty(m + 1, dtype=np.int64)
    hcur = np.empty(m + 1, dtype=np.int64)
    fcur = np.empty(m + 1, dtype=np.int64)
    hprev[0] = 0
    fprev[0] = NEG
    for j in range(1, m + 1):
        hprev[j] = -(gap_open + gap_extend * (j - 1))
        fprev[j] = NEG
    for i in range(1, n + 1):
        hcur[0] = -(gap_open + gap_extend * (i - 1))
        fcur[0] = hcur[0]
        e_run = NEG
        ai = a[i - 1]
        for j in range(1, m + 1):
            f_close = hprev[j] - gap_open
            f_ext = fprev[j] - gap_extend
            if f_close >= f_ext:
                f_val = f_close
                byte = 4
            else:
                f_val = f_ext
                byte = 0
            e_close = hcur[j - 1] - gap_open
            e_ext = e_run - gap_extend
            if e_close >= e_ext:
                e_val = e_close
                byte |= 8
            else:
                e_val = e_ext
            diag = hprev[j - 1] + sub[ai, b[j - 1]]
            if diag >= f_val and diag >= e_val:
                h = diag
            elif f_val >= e_val:
                h = f_val
                byte |= 1
            else:
                h = e_val
                byte |= 2
            tb[i, j] = byte
            hcur[j] = h
            fcur[j] = f_val
            e_run = e_val
        tmp = hprev
        hprev = hcur
        hcur = tmp
        tmp = fprev
        fprev = fcur
        fcur = tmp
    score = hprev[m]

    pos = 0
    i = n
    j = m
    state = 0  # 0 = H, 1 = up-gap lane, 2 = left-gap lane
    while i > 0 or j > 0:
        if i == 0:
            ops[pos] = 2
            pos += 1
            j -= 1
        elif j == 0:
            ops[pos] = 1
            pos += 1
            i -= 1
        elif state == 0:
            src = tb[i, j] & 3
            if src == 0:
                ops[pos] = 0
                pos += 1
                i -= 1
                j -= 1
            elif src == 1:
                state = 1
            else:
                state = 2
        elif state == 1:
            closing = tb[i, j] & 4
            ops[pos] = 1
            pos += 1
            i -= 1
            if closing != 0:
                state = 0
        else:
            closing = tb[i, j] & 8
            ops[pos] = 2
            pos += 1
            j -= 1
            if closing != 0:
                state = 0
    out = ops[:pos]
    for t in range(pos // 2):
        tmp8 = out[t]
        out[t] = out[pos - 1 - t]
        out[pos - 1 - t] = tmp8
    return score, out


@_kernel
def trie_build_kernel(center, k, n_canonical):
    """Build the k-mer keyword tree of the center sequence.

    K-mers containing wildcard codes are skipped. Returns the child table,
    breadth-first failure links, and a CSR map from terminal (depth-k)
    nodes to the sorted center offsets of their k-mer.
    """
    clen = center.shape[0]
    n_kmers = clen - k + 1
    cap = 1 + n_kmers * k
    children = np.full((cap, n_canonical), -1, dtype=np.int32)
    parent = np.zeros(cap, dtype=np.int32)
    psym = np.zeros(cap, dtype=np.int32)
    depth = np.zeros(cap, dtype=np.int32)
    end_node = np.full(n_kmers, -1, dtype=np.int32)
    n_nodes = 1
    for off in range(n_kmers):
        ok = True
        for t in range(k):
            if center[off + t] >= n_canonical:
                ok = False
                break
        if not ok:
            continue
        node = 0
        for t in range(k):
            sym = center[off + t]
            nxt = children[node, sym]
            if nxt < 0:
                nxt = n_nodes
                children[node, sym] = nxt
                parent[nxt] = node
                psym[nxt] = sym
                depth[nxt] = depth[node] + 1
                n_nodes += 1
            node = nxt
        end_node[off] = node

    fail = np.zeros(n_nodes, dtype=np.int32)
    order = np.argsort(depth[:n_nodes])
    for oi in range(n_nodes):
        v = order[oi]
        if v == 0 or depth[v] <= 1:
            continue
        f = fail[parent[v]]
        sym = psym[v]
        while f != 0 and children[f, sym] < 0:
            f = fail[f]
        cand = children[f, sym]
        if cand >= 0 and cand != v:
            fail[v] = cand

    counts = np.zeros(n_nodes + 1, dtype=np.int64)
    for off in range(n_kmers):
        e = end_node[off]
        if e >= 0:
            counts[e + 1] += 1
    term_start = np.zeros(n_nodes + 1, dtype=np.int64)
    for v in range(n_nodes):
        term_start[v + 1] = term_start[v] + counts[v + 1]
    cursor = term_start.copy()
    term_off = np.empty(term_start[n_nodes], dtype=np.int64)
    for off in range(n_kmers):
        e = end_node[off]
        if e >= 0:
            term_off[cursor[e]] = off
            cursor[e] += 1
    return children[:n_nodes].copy(), fail, term_start, term_off, n_nodes


@_kernel
def ac_match_kernel(children, fail, term_start, term_off, q, k, n_canonical):
    """Stream a query through the automaton; report every shared k-mer.

    Returns (center_starts, query_starts, n_hits, transitions). A wildcard
    symbol resets the state. ``transitions`` counts goto and failure moves
    for the linear-pass bound.
    """
    qlen = q.shape[0]
    cap = 256
    cs = np.empty(cap, dtype=np.int64)
    qs = np.empty(cap, dtype=np.int64)
    n = 0
    transitions = 0
    state = 0
    for qi in range(qlen):
        sym = q[qi]
        if sym >= n_canonical:
            state = 0
            continue
        while state != 0 and children[state, sym] < 0:
            state = fail[state]
            transitions += 1
        nxt = children[state, sym]
        if nxt >= 0:
            state = nxt
            transitions += 1
        ts = term_start[state]
        te = term_start[state + 1]
        for t in range(ts, te):
            if n >= cap:
                cap *= 2
                ncs = np.empty(cap, dtype=np.int64)
                ncs[:n] = cs[:n]
                cs = ncs
                nqs = np.empty(cap, dtype=np.int64)
                nqs[:n] = qs[:n]
                qs = nqs
            cs[n] = term_off[t]
            qs[n] = qi - k + 1
            n += 1
    return cs[:n], qs[:n], n, transitions


@_kernel
def merge_hits_kernel(cs, qs, n_hits, k, center_len, query_len):
    """Merge diagonal-adjacent hits into maximal exact blocks.

    The automaton reports every match, so same-diagonal hits that overlap
    always arrive as an unbroken run of step-1 neighbours; merging those
    runs yields maximal blocks. Hits must arrive in stream (query) order.
    """
    nd = center_len + query_len + 1
    last_q = np.full(nd, -2, dtype=np.int64)
    blk_of_diag = np.full(nd, -1, dtype=np.int64)
    size = n_hits if n_hits > 0 else 1
    bc = np.empty(size, dtype=np.int64)
    bq = np.empty(size, dtype=np.int64)
    bl = np.empty(size, dtype=np.int64)
    nb = 0
    for h in range(n_hits):
        c = cs[h]
        qq = qs[h]
        d = c - qq + query_len
        if last_q[d] == qq - 1:
            bl[blk_of_diag[d]] += 1
            last_q[d] = qq
        else:
            bc[nb] = c
            bq[nb] = qq
            bl[nb] = k
            blk_of_diag[d] = nb
            last_q[d] = qq
            nb += 1
    return bc[:nb], bq[:nb], bl[:nb], nb


@_kernel
def chain_blocks_kernel(bc, bq, bl, nb, k):
    """Pick the co-linear chain of maximum total anchored length.

    Blocks overlapping their predecessor (micro-homology at indel edges)
    are chained with their head trimmed by the overlap; a trimmed block
    must keep length >= k. Ties resolve toward the block earliest in
    (center, query) order. Returns trimmed, strictly non-overlapping
    anchors as three arrays plus their count.
    """
    out_c = np.empty(nb if nb > 0 else 1, dtype=np.int64)
    out_q = np.empty(nb if nb > 0 else 1, dtype=np.int64)
    out_l = np.empty(nb if nb > 0 else 1, dtype=np.int64)
    if nb == 0:
        return out_c[:0], out_q[:0], out_l[:0], 0
    key = bc * 4294967296 + bq
    order = np.argsort(key)
    dp = np.zeros(nb, dtype=np.int64)
    pred = np.full(nb, -1, dtype=np.int64)
    trim = np.zeros(nb, dtype=np.int64)
    best_i = -1
    best_v = 0
    for oi in range(nb):
        i = order[oi]
        dp[i] = bl[i]
        for oj in range(oi):
            j = order[oj]
            ovc = bc[j] + bl[j] - bc[i]
            ovq = bq[j] + bl[j] - bq[i]
            ov = ovc if ovc > ovq else ovq
            if ov < 0:
                ov = 0
            gain = bl[i] - ov
            if gain < k:
                continue
            v = dp[j] + gain
            if v > dp[i]:
                dp[i] = v
                pred[i] = j
                trim[i] = ov
        if dp[i] > best_v:
            best_v = dp[i]
            best_i = i
    cnt = 0
    node = best_i
    while node >= 0:
        out_c[cnt] = bc[node] + trim[node]
        out_q[cnt] = bq[node] + trim[node]
        out_l[cnt] = bl[node] - trim[node]
        cnt += 1
        node = pred[node]
    for t in range(cnt // 2):
        tc = out_c[t]
        out_c[t] = out_c[cnt - 1 - t]
        out_c[cnt - 1 - t] = tc
        tq = out_q[t]
        out_q[t] = out_q[cnt - 1 - t]
        out_q[cnt - 1 - t] = tq
        tl = out_l[t]
        out_l[t] = out_l[cnt - 1 - t]
        out_l[cnt - 1 - t] = tl
    return out_c[:cnt], out_q[:cnt], out_l[:cnt], cnt


@_kernel
def align_query_kernel(
    center, q, children, fail, term_start, term_off, k, margin, sub,
    gap_open, gap_extend, use_trie, n_canonical,
):
    """Align one query to the center and return its gap runs.

    Anchored path: chained exact blocks longer than 2*margin lock their
    interior (no DP there); everything between locked interiors, including
    a margin-wide strip inside each flanking anchor, is aligned by the
    canonical global DP. The margins absorb gap-placement ambiguity that
    straddles anchor boundaries, so the composition reproduces the
    canonical full-DP alignment on anchor-worthy data. Queries shorter
    than k, or runs without a usable trie, take the full DP.

    Returns (ins_off, ins_len, del_off, del_len, score, dp_cells) where
    insertion runs are query residues placed before the given center
    offset and deletion runs are center offsets covered by gaps in the
    query row. Offset == center length means trailing.
    """
    clen = center.shape[0]
    qlen = q.shape[0]
    ac = np.empty(0, dtype=np.int64)
    aq = np.empty(0, dtype=np.int64)
    al_ = np.empty(0, dtype=np.int64)
    ns = 0
    if use_trie != 0 and qlen >= k:
        cs, qs, nh, _trans = ac_match_kernel(
            children, fail, term_start, term_off, q, k, n_canonical
        )
        bc, bq, bl, nb = merge_hits_kernel(cs, qs, nh, k, clen, qlen)
        ac, aq, al_, ns = chain_blocks_kernel(bc, bq, bl, nb, k)

    ops_all = np.empty(clen + qlen, dtype=np.uint8)
    pos = 0
    score = 0
    cells = 0
    pc = 0
    pq = 0
    for si in range(ns + 1):
        if si < ns:
            al = al_[si]
            if al <= 2 * margin:
                continue
            lc = ac[si] + margin
            lq = aq[si] + margin
            ll = al - 2 * margin
            rc_end = lc
            rq_end = lq
        else:
            rc_end = clen
            rq_end = qlen
        rscore, rops = nw_align_kernel(
            center[pc:rc_end], q[pq:rq_end], sub, gap_open, gap_extend
        )
        cells += (rc_end - pc + 1) * (rq_end - pq + 1)
        score += rscore
        for t in range(rops.shape[0]):
            ops_all[pos] = rops[t]
            pos += 1
        if si < ns:
            for t in range(ll):
                ch = center[lc + t]
                score += sub[ch, ch]
                ops_all[pos] = 0
                pos += 1
            pc = lc + ll
            pq = lq + ll
        else:
            pc = rc_end
            pq = rq_end

    ins_off = np.empty(pos + 1, dtype=np.int64)
    ins_len = np.empty(pos + 1, dtype=np.int64)
    del_off = np.empty(pos + 1, dtype=np.int64)
    del_len = np.empty(pos + 1, dtype=np.int64)
    n_ins = 0
    n_del = 0
    c_off = 0
    t = 0
    while t < pos:
        op = ops_all[t]
        if op == 0:
            c_off += 1
            t += 1
        elif op == 1:
            start = c_off
            run = 0
            while t < pos and ops_all[t] == 1:
                run += 1
                t += 1
                c_off += 1
            del_off[n_del] = start
            del_len[n_del] = run
            n_del += 1
        else:
            run = 0
            while t < pos and ops_all[t] == 2:
                run += 1
                t += 1
            ins_off[n_ins] = c_off
            ins_len[n_ins] = run
            n_ins += 1
    return (
        ins_off[:n_ins],
        ins_len[:n_ins],
        del_off[:n_del],
        del_len[:n_del],
        score,
        cells,
    )


@_kernel
def align_chunk_kernel(
    center, qflat, qstarts, children, fail, term_start, term_off, k, margin,
    sub, gap_open, gap_extend, use_trie, n_canonical,
):
    """Align a chunk of queries in one call (one GIL release under numba).

    Queries are concatenated in ``qflat`` with boundaries in ``qstarts``.
    Gap runs come back flattened with per-query counts.
    """
    nq = qstarts.shape[0] - 1
    cap = 64
    i_off = np.empty(cap, dtype=np.int64)
    i_len = np.empty(cap, dtype=np.int64)
    d_off = np.empty(cap, dtype=np.int64)
    d_len = np.empty(cap, dtype=np.int64)
    n_ins = np.zeros(nq, dtype=np.int64)
    n_del = np.zeros(nq, dtype=np.int64)
    scores = np.zeros(nq, dtype=np.int64)
    cells = np.zeros(nq, dtype=np.int64)
    ti = 0
    td = 0
    for w in range(nq):
        q = qflat[qstarts[w] : qstarts[w + 1]]
        io, il, do_, dl, sc, ce = align_query_kernel(
            center, q, children, fail, term_start, term_off, k, margin, sub,
            gap_open, gap_extend, use_trie, n_canonical,
        )
        scores[w] = sc
        cells[w] = ce
        n_ins[w] = io.shape[0]
        n_del[w] = do_.shape[0]
        need = ti + io.shape[0]
        while need > i_off.shape[0]:
            ncap = i_off.shape[0] * 2
            tmp = np.empty(ncap, dtype=np.int64)
            tmp[:ti] = i_off[:ti]
            i_off = tmp
            tmp = np.empty(ncap, dtype=np.int64)
            tmp[:ti] = i_len[:ti]
            i_len = tmp
        for t in range(io.shape[0]):
            i_off[ti] = io[t]
            i_len[ti] = il[t]
            ti += 1
        need = td + do_.shape[0]
        while need > d_off.shape[0]:
            ncap = d_off.shape[0] * 2
            tmp = np.empty(ncap, dtype=np.int64)
            tmp[:td] = d_off[:td]
            d_off = tmp
            tmp = np.empty(ncap, dtype=np.int64)
            tmp[:td] = d_len[:td]
            d_len = tmp
        for t in range(do_.shape[0]):
            d_off[td] = do_[t]
            d_len[td] = dl[t]
            td += 1
    return (
        i_off[:ti],
        i_len[:ti],
        n_ins,
        d_off[:td],
        d_len[:td],
        n_del,
        scores,
        cells,
    )
