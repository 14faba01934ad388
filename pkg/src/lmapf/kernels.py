"""Compiled inner loops shared by the solvers.

Everything in here operates on flat arrays (cell index = row * width + col)
so it can be jitted. The Python-facing modules own the array layout and pass
views in; nothing in this module allocates per step beyond tiny scratch
buffers.

Direction indices follow grid.Direction: 0 right, 1 up, 2 left, 3 down,
4 wait/self. ``nbr`` is the (num_cells, 5) neighbor table with -1 for
invalid targets.
"""
from __future__ import annotations

import numpy as np
from numba import njit

INF = np.inf
UNREACHABLE = np.int64(1 << 60)

# opposite direction lookup, wait maps to itself
OPP4 = np.array([2, 3, 0, 1, 4], dtype=np.int64)

_U64_1 = np.uint64(0x9E3779B97F4A7C15)
_U64_2 = np.uint64(0xBF58476D1CE4E5B9)
_U64_3 = np.uint64(0x94D049BB133111EB)


@njit(cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _U64_2
    z = (z ^ (z >> np.uint64(27))) * _U64_3
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def _rng_from(seed, t, agent):
    s = _mix64(np.uint64(seed) + _U64_1)
    s = _mix64(s ^ (np.uint64(t) * _U64_2))
    s = _mix64(s ^ (np.uint64(agent) * _U64_3))
    return s


# -- binary min-heap on parallel (cost, node) arrays --------------------------


@njit(cache=True)
def _heap_push(hc, hn, hl, cost, node):
    hc[hl] = cost
    hn[hl] = node
    j = hl
    while j > 0:
        p = (j - 1) >> 1
        if hc[p] <= hc[j]:
            break
        hc[p], hc[j] = hc[j], hc[p]
        hn[p], hn[j] = hn[j], hn[p]
        j = p
    return hl + 1


@njit(cache=True)
def _heap_pop(hc, hn, hl):
    c = hc[0]
    v = hn[0]
    hl -= 1
    if hl > 0:
        hc[0] = hc[hl]
        hn[0] = hn[hl]
        j = 0
        while True:
            l = 2 * j + 1
            r = l + 1
            b = j
            if l < hl and hc[l] < hc[b]:
                b = l
            if r < hl and hc[r] < hc[b]:
                b = r
            if b == j:
                break
            hc[b], hc[j] = hc[j], hc[b]
            hn[b], hn[j] = hn[j], hn[b]
            j = b
    return c, v, hl


# -- lazily expanded reverse-Dijkstra distance trees ---------------------------
#
# One tree per goal. State per slot: dist (best known cost-to-goal), state
# (0 unseen / 1 open / 2 settled), a heap, and meta = [heap_len, expansions].
# Wait self-edges never participate: only the four move directions are relaxed.


@njit(cache=True)
def tree_reset(slot, goal, t_dist, t_state, t_hc, t_hn, t_meta):
    n = t_dist.shape[1]
    for i in range(n):
        t_dist[slot, i] = INF
        t_state[slot, i] = 0
    t_dist[slot, goal] = 0.0
    t_state[slot, goal] = 1
    t_hc[slot, 0] = 0.0
    t_hn[slot, 0] = goal
    t_meta[slot, 0] = 1
    t_meta[slot, 1] = 0


@njit(cache=True)
def tree_query(slot, v, w5, nbr, t_dist, t_state, t_hc, t_hn, t_meta):
    if t_state[slot, v] == 2:
        return t_dist[slot, v]
    hc = t_hc[slot]
    hn = t_hn[slot]
    hl = t_meta[slot, 0]
    while hl > 0:
        c, u, hl = _heap_pop(hc, hn, hl)
        if t_state[slot, u] == 2:
            continue
        t_state[slot, u] = 2
        t_meta[slot, 1] += 1
        du = t_dist[slot, u]
        for d in range(4):
            p = nbr[u, OPP4[d]]
            if p < 0 or t_state[slot, p] == 2:
                continue
            nc = du + w5[d, p]
            if nc < t_dist[slot, p]:
                t_dist[slot, p] = nc
                t_state[slot, p] = 1
                hl = _heap_push(hc, hn, hl, nc, p)
        if u == v:
            t_meta[slot, 0] = hl
            return du
    t_meta[slot, 0] = 0
    return t_dist[slot, v] if t_state[slot, v] == 2 else INF


# -- lazily expanded multi-source BFS to a guide-path suffix -------------------
#
# Per agent: dist/stamp arrays (stamp equal to the agent's epoch marks a valid
# entry), a FIFO queue, and the epoch counter. Reseeding bumps the epoch.


@njit(cache=True)
def suffix_seed(a, path, plen, ptr, sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt):
    sf_epoch[a] += 1
    e = sf_epoch[a]
    qt = 0
    start = ptr + 1
    if start >= plen:
        start = plen - 1  # suffix exhausted: keep steering toward the goal cell
    for j in range(start, plen):
        v = path[j]
        if sf_stamp[a, v] != e:
            sf_stamp[a, v] = e
            sf_dist[a, v] = 0
            sf_q[a, qt] = v
            qt += 1
    sf_qh[a] = 0
    sf_qt[a] = qt


@njit(cache=True)
def suffix_query(a, v, nbr, sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt):
    e = sf_epoch[a]
    if sf_stamp[a, v] == e:
        return np.int64(sf_dist[a, v])
    qh = sf_qh[a]
    qt = sf_qt[a]
    while qh < qt:
        u = sf_q[a, qh]
        qh += 1
        du = sf_dist[a, u]
        found = False
        for d in range(4):
            w = nbr[u, d]
            if w >= 0 and sf_stamp[a, w] != e:
                sf_stamp[a, w] = e
                sf_dist[a, w] = du + 1
                sf_q[a, qt] = w
                qt += 1
                if w == v:
                    found = True
        if found:
            sf_qh[a] = qh
            sf_qt[a] = qt
            return np.int64(sf_dist[a, v])
    sf_qh[a] = qh
    sf_qt[a] = qt
    return UNREACHABLE


@njit(cache=True)
def _metric(mode, a, v, w5, nbr,
            agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
            sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt):
    """Cost-to-target of cell v under the ranking metric of agent a."""
    if mode == 0:
        return tree_query(agent_tree[a], v, w5, nbr, t_dist, t_state, t_hc, t_hn, t_meta)
    d = suffix_query(a, v, nbr, sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    return float(d)


@njit(cache=True)
def rank_candidates(mode, a, pa, seed, t, w5, nbr,
                    agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                    sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt,
                    cells, dirs):
    """Fill cells/dirs (len >= 5) with a's candidate cells, best first.

    Candidates are enumerated in fixed direction order, shuffled with the
    per-(seed, t, agent) stream, then stably sorted by score, so equal-score
    groups end up in the shuffled order.
    """
    k = 0
    for d in range(4):
        u = nbr[pa, d]
        if u >= 0:
            cells[k] = u
            dirs[k] = d
            k += 1
    cells[k] = pa
    dirs[k] = 4
    k += 1

    st = _rng_from(seed, t, a)
    for i in range(k - 1, 0, -1):
        st = _mix64(st + _U64_1)
        j = np.int64(st % np.uint64(i + 1))
        cells[i], cells[j] = cells[j], cells[i]
        dirs[i], dirs[j] = dirs[j], dirs[i]

    scores = np.empty(5, np.float64)
    for i in range(k):
        base = w5[dirs[i], pa] if mode == 0 else 0.0
        scores[i] = base + _metric(mode, a, cells[i], w5, nbr,
                                   agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)

    for i in range(1, k):
        sc = scores[i]
        cc = cells[i]
        dd = dirs[i]
        j = i - 1
        while j >= 0 and scores[j] > sc:
            scores[j + 1] = scores[j]
            cells[j + 1] = cells[j]
            dirs[j + 1] = dirs[j]
            j -= 1
        scores[j + 1] = sc
        cells[j + 1] = cc
        dirs[j + 1] = dd
    return k


# -- corridor-swap detection (pull-and-rotate at degree-limited vertices) -----


@njit(cache=True)
def _is_swap_required(mode, pusher, puller, vp0, vl0, pos, goal, occupied_now,
                      deg, w5, nbr,
                      agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                      sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt):
    vp = vp0
    vl = vl0
    dp_l = _metric(mode, pusher, vl, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    dp_p = _metric(mode, pusher, vp, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    while dp_l < dp_p:
        cnt = deg[vl]
        tmp = -1
        for d in range(4):
            u = nbr[vl, d]
            if u < 0:
                continue
            occ = occupied_now[u]
            if u == vp or (deg[u] == 1 and occ >= 0 and pos[occ] == goal[occ]):
                cnt -= 1
            else:
                tmp = u
        if cnt >= 2:
            return False
        if cnt <= 0:
            break
        vp = vl
        vl = tmp
        dp_l = _metric(mode, pusher, vl, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                       sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
        dp_p = _metric(mode, pusher, vp, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                       sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    du_p = _metric(mode, puller, vp, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    du_l = _metric(mode, puller, vl, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    dp_p = _metric(mode, pusher, vp, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    dp_l = _metric(mode, pusher, vl, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                   sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
    return du_p < du_l and (dp_p == 0.0 or dp_l < dp_p)


@njit(cache=True)
def _is_swap_possible(vp0, vl0, pos, goal, occupied_now, deg, nbr):
    vp = vp0
    vl = vl0
    while vl != vp0:
        cnt = deg[vl]
        tmp = -1
        for d in range(4):
            u = nbr[vl, d]
            if u < 0:
                continue
            occ = occupied_now[u]
            if u == vp or (deg[u] == 1 and occ >= 0 and pos[occ] == goal[occ]):
                cnt -= 1
            else:
                tmp = u
        if cnt >= 2:
            return True
        if cnt <= 0:
            return False
        vp = vl
        vl = tmp
    return False


@njit(cache=True)
def _swap_target(mode, a, best, pos, goal, v_next, occupied_now, deg, w5, nbr,
                 agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                 sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt):
    if best == pos[a]:
        return -1
    aj = occupied_now[best]
    if aj >= 0 and v_next[aj] == -1:
        if _is_swap_required(mode, a, aj, pos[a], pos[aj], pos, goal, occupied_now,
                             deg, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                             sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt) \
                and _is_swap_possible(pos[aj], pos[a], pos, goal, occupied_now, deg, nbr):
            return aj
    for d in range(4):
        u = nbr[pos[a], d]
        if u < 0:
            continue
        ak = occupied_now[u]
        if ak < 0 or best == pos[ak]:
            continue
        if _is_swap_required(mode, ak, a, pos[a], best, pos, goal, occupied_now,
                             deg, w5, nbr, agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                             sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt) \
                and _is_swap_possible(best, pos[a], pos, goal, occupied_now, deg, nbr):
            return ak
    return -1


# -- one-step joint planning: priority inheritance with backtracking ----------


@njit(cache=True)
def joint_step(mode, seed, t, pos, goal, order,
               deg, w5, nbr,
               agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
               sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt,
               occupied_now, occupied_next, v_next,
               st_agent, st_ci, st_k, st_sa, st_cands, st_dirs):
    """Plan one synchronized step for all agents; fills v_next.

    ``order`` gives agents in descending priority. occupied_now/occupied_next
    are caller-provided scratch filled with -1 and are restored on exit.
    """
    num = pos.shape[0]
    for i in range(num):
        v_next[i] = -1
    for i in range(num):
        occupied_now[pos[i]] = i

    for oi in range(num):
        root = order[oi]
        if v_next[root] != -1:
            continue
        sp = 0
        st_agent[0] = root
        st_ci[0] = -1
        child_ret = -2
        while sp >= 0:
            a = st_agent[sp]
            if st_ci[sp] == -1:
                k = rank_candidates(mode, a, pos[a], seed, t, w5, nbr,
                                    agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                                    sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt,
                                    st_cands[sp], st_dirs[sp])
                sa = _swap_target(mode, a, st_cands[sp, 0], pos, goal, v_next,
                                  occupied_now, deg, w5, nbr,
                                  agent_tree, t_dist, t_state, t_hc, t_hn, t_meta,
                                  sf_dist, sf_stamp, sf_epoch, sf_q, sf_qh, sf_qt)
                if sa >= 0:
                    i0 = 0
                    i1 = k - 1
                    while i0 < i1:
                        st_cands[sp, i0], st_cands[sp, i1] = st_cands[sp, i1], st_cands[sp, i0]
                        st_dirs[sp, i0], st_dirs[sp, i1] = st_dirs[sp, i1], st_dirs[sp, i0]
                        i0 += 1
                        i1 -= 1
                st_k[sp] = k
                st_sa[sp] = sa
                st_ci[sp] = 0
            elif child_ret != -2:
                if child_ret == 1:
                    sa = st_sa[sp]
                    if sa >= 0 and v_next[sa] == -1 and occupied_next[pos[a]] == -1:
                        v_next[sa] = pos[a]
                        occupied_next[pos[a]] = sa
                    sp -= 1
                    continue
                st_ci[sp] += 1
                child_ret = -2
            advanced = False
            while st_ci[sp] < st_k[sp]:
                u = st_cands[sp, st_ci[sp]]
                if occupied_next[u] != -1:
                    st_ci[sp] += 1
                    continue
                ak = occupied_now[u]
                if ak != -1 and v_next[ak] == pos[a]:
                    st_ci[sp] += 1
                    continue
                occupied_next[u] = a
                v_next[a] = u
                if ak != -1 and ak != a and v_next[ak] == -1:
                    sp += 1
                    st_agent[sp] = ak
                    st_ci[sp] = -1
                    advanced = True
                    break
                sa = st_sa[sp]
                if sa >= 0 and v_next[sa] == -1 and occupied_next[pos[a]] == -1:
                    v_next[sa] = pos[a]
                    occupied_next[pos[a]] = sa
                child_ret = 1
                sp -= 1
                advanced = True
                break
            if advanced:
                continue
            occupied_next[pos[a]] = a
            v_next[a] = pos[a]
            child_ret = 0
            sp -= 1

    for i in range(num):
        occupied_now[pos[i]] = -1
    for i in range(num):
        occupied_next[v_next[i]] = -1


# -- guide-path search: best-first with per-expansion edge costs --------------
#
# Weight providers (wmode):
#   0 windowed quadratic policy: theta over a (4, swin, swin) usage window
#     around the expanded cell plus adjacent-pair contra-flow products
#   1 fixed contra-flow + outflow closed form
#   2 reduced quadratic policy (48 coefficients, neighbor-slot indexed)
#   3 dense tensor lookup (offline / periodically refreshed weights)
# Providers 0-2 read the live usage field; all produced costs are >= 1.


@njit(cache=True)
def _edge_costs(wmode, u, theta, usage4, static_w4, H, W, swin, nbr, win, out):
    if wmode == 3:
        for d in range(4):
            out[d] = static_w4[d, u]
        return
    if wmode == 1:
        for d in range(4):
            v = nbr[u, d]
            if v < 0:
                out[d] = INF
                continue
            uv = usage4[d, u]
            vu = usage4[OPP4[d], v]
            s = 0.0
            for d2 in range(4):
                if nbr[v, d2] >= 0:
                    s += usage4[d2, v]
            out[d] = uv * vu + vu + 0.5 * s + 1.0
        return
    if wmode == 2:
        for i_dir in range(4):
            v = nbr[u, i_dir]
            if v < 0:
                out[i_dir] = INF
                continue
            om = 0.0
            for j in range(4):
                uj = nbr[v, OPP4[j]]
                if uj < 0:
                    continue
                into_v = usage4[j, uj]
                out_of_v = usage4[OPP4[j], v]
                base = (i_dir * 4 + j) * 3
                om += theta[base] * into_v * out_of_v
                om += theta[base + 1] * out_of_v
                om += theta[base + 2] * out_of_v
            out[i_dir] = (om if om > 0.0 else 0.0) + 1.0
        return
    # wmode == 0: windowed quadratic
    r0 = u // W
    c0 = u % W
    half = swin // 2
    for ch in range(4):
        for i in range(swin):
            rr = r0 - half + i
            for j in range(swin):
                cc = c0 - half + j
                if 0 <= rr < H and 0 <= cc < W:
                    win[ch, i, j] = usage4[ch, rr * W + cc]
                else:
                    win[ch, i, j] = 0.0
    per_dir = 4 * swin * swin + 2 * swin * (swin - 1)
    for d in range(4):
        v = nbr[u, d]
        if v < 0:
            out[d] = INF
            continue
        idx = d * per_dir
        s = 0.0
        for ch in range(4):
            for i in range(swin):
                for j in range(swin):
                    s += theta[idx] * win[ch, i, j]
                    idx += 1
        for i in range(swin):
            for j in range(swin - 1):
                s += theta[idx] * (win[0, i, j] * win[2, i, j + 1])
                idx += 1
        for i in range(swin - 1):
            for j in range(swin):
                s += theta[idx] * (win[3, i, j] * win[1, i + 1, j])
                idx += 1
        out[d] = (s if s > 0.0 else 0.0) + 1.0


@njit(cache=True)
def guide_path_search(start, goal, wmode, theta, usage4, static_w4, H, W, swin,
                      nbr, g, state, parent, hc, hn, win, out_path):
    """Best-first search from start to goal; returns path length (cells) or -1.

    Uses a constant unit heuristic, so expansion order matches cost order and
    the returned path cost is optimal for the weight function. Edge costs are
    evaluated once per expanded cell against the usage field as it stands at
    call time.
    """
    n = H * W
    for i in range(n):
        g[i] = INF
        state[i] = 0
        parent[i] = -1
    g[start] = 0.0
    state[start] = 1
    hl = _heap_push(hc, hn, 0, 1.0, start)
    costs = np.empty(4, np.float64)
    while hl > 0:
        _, u, hl = _heap_pop(hc, hn, hl)
        if state[u] == 2:
            continue
        state[u] = 2
        if u == goal:
            break
        _edge_costs(wmode, u, theta, usage4, static_w4, H, W, swin, nbr, win, costs)
        gu = g[u]
        for d in range(4):
            v = nbr[u, d]
            if v < 0 or state[v] == 2:
                continue
            ng = gu + costs[d]
            if ng < g[v]:
                g[v] = ng
                parent[v] = u
                state[v] = 1
                hl = _heap_push(hc, hn, hl, ng + 1.0, v)
    if state[goal] != 2:
        return -1
    plen = 0
    v = goal
    while v != -1:
        out_path[plen] = v
        plen += 1
        v = parent[v]
    i0 = 0
    i1 = plen - 1
    while i0 < i1:
        out_path[i0], out_path[i1] = out_path[i1], out_path[i0]
        i0 += 1
        i1 -= 1
    return plen


@njit(cache=True)
def edge_costs_at(wmode, u, theta, usage4, static_w4, H, W, swin, nbr):
    """Single-cell edge-cost evaluation (test and inspection hook)."""
    win = np.zeros((4, swin, swin), np.float64)
    out = np.empty(4, np.float64)
    _edge_costs(wmode, u, theta, usage4, static_w4, H, W, swin, nbr, win, out)
    return out
