"""Numerical kernels behind the transport solvers and dump checksums.

Everything here is deliberately loop-structured so :func:`kvmargin._accel.maybe_jit`
can compile it with numba.  Without numba the same bodies run interpreted,
except for the two pairwise-distance helpers which get numpy-blocked
fallbacks (an interpreted O(n*m*d) loop would be unusable even at benchmark
sizes).

Solver determinism: both the assignment kernel and the transport simplex
break every tie by smallest index, so repeated runs on identical inputs
return identical plans bit for bit.
"""

import numpy as np

from ._accel import NUMBA_ENABLED, maybe_jit

INFEASIBLE = 1e30  # sentinel larger than any real cost we produce


@maybe_jit
def lsap_min_cost(cost):
    """Exact minimum-cost assignment (Jonker-Volgenant style, square input).

    Returns ``col4row`` where row i is matched to column ``col4row[i]``.
    Shortest augmenting paths with dual updates; ties resolved by column
    scan order, so the result is deterministic.
    """
    n = cost.shape[0]
    u = np.zeros(n)
    v = np.zeros(n)
    col4row = np.full(n, -1, np.int64)
    row4col = np.full(n, -1, np.int64)
    shortest = np.empty(n)
    path = np.empty(n, np.int64)
    seen_row = np.zeros(n, np.bool_)
    seen_col = np.zeros(n, np.bool_)

    for cur in range(n):
        for t in range(n):
            shortest[t] = np.inf
            path[t] = -1
            seen_row[t] = False
            seen_col[t] = False
        minval = 0.0
        i = cur
        sink = -1
        while sink == -1:
            seen_row[i] = True
            lowest = np.inf
            jlow = -1
            for j in range(n):
                if seen_col[j]:
                    continue
                r = minval + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    shortest[j] = r
                    path[j] = i
                if shortest[j] < lowest:
                    lowest = shortest[j]
                    jlow = j
            minval = lowest
            seen_col[jlow] = True
            if row4col[jlow] == -1:
                sink = jlow
            else:
                i = row4col[jlow]
        u[cur] += minval
        for ii in range(n):
            if seen_row[ii] and ii != cur:
                u[ii] += minval - shortest[col4row[ii]]
        for j in range(n):
            if seen_col[j]:
                v[j] -= minval - shortest[j]
        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur:
                break
    return col4row


@maybe_jit
def _northwest_corner(a, b):
    """Initial basic feasible flow for the transport simplex.

    Produces exactly n + m - 1 basic cells (some possibly at zero flow when
    partial sums tie), which keeps the basis a spanning tree.
    """
    n = a.shape[0]
    m = b.shape[0]
    flow = np.zeros((n, m))
    bas_i = np.empty(n + m - 1, np.int64)
    bas_j = np.empty(n + m - 1, np.int64)
    ra = a.copy()
    rb = b.copy()
    i = 0
    j = 0
    for t in range(n + m - 1):
        q = ra[i] if ra[i] < rb[j] else rb[j]
        flow[i, j] = q
        bas_i[t] = i
        bas_j[t] = j
        ra[i] -= q
        rb[j] -= q
        if ra[i] <= rb[j]:
            if i < n - 1:
                i += 1
            else:
                j += 1
        else:
            if j < m - 1:
                j += 1
            else:
                i += 1
    return flow, bas_i, bas_j


@maybe_jit
def _tree_structures(bas_i, bas_j, n, m):
    """CSR adjacency of the basis tree over n row-nodes and m column-nodes."""
    nb = bas_i.shape[0]
    nodes = n + m
    deg = np.zeros(nodes, np.int64)
    for t in range(nb):
        deg[bas_i[t]] += 1
        deg[n + bas_j[t]] += 1
    ptr = np.zeros(nodes + 1, np.int64)
    for node in range(nodes):
        ptr[node + 1] = ptr[node] + deg[node]
    adj_node = np.empty(2 * nb, np.int64)
    adj_edge = np.empty(2 * nb, np.int64)
    fill = ptr[:nodes].copy()
    for t in range(nb):
        i = bas_i[t]
        jn = n + bas_j[t]
        adj_node[fill[i]] = jn
        adj_edge[fill[i]] = t
        fill[i] += 1
        adj_node[fill[jn]] = i
        adj_edge[fill[jn]] = t
        fill[jn] += 1
    return ptr, adj_node, adj_edge


@maybe_jit
def transport_simplex(cost, a, b, max_iter):
    """Dense transportation simplex for min-cost mass transport.

    Starts from the northwest-corner basis, prices all cells each iteration
    (Dantzig rule), and permanently switches to Bland's smallest-index rule
    after an iteration budget to guarantee termination on degenerate
    instances.  Entering threshold scales with the cost magnitude so that
    rounding noise in the duals never admits a spurious pivot.

    Returns ``(flow, status)`` with status 0 on optimality, 1 if the
    iteration cap was hit (callers treat that as an internal failure).
    """
    n, m = cost.shape
    flow, bas_i, bas_j = _northwest_corner(a, b)
    nb = n + m - 1

    cmax = 0.0
    for i in range(n):
        for j in range(m):
            c = cost[i, j]
            if c > cmax:
                cmax = c
    tol = 1e-11 * (cmax if cmax > 1.0 else 1.0)

    u = np.zeros(n)
    v = np.zeros(m)
    visited = np.zeros(n + m, np.bool_)
    queue = np.empty(n + m, np.int64)
    parent_node = np.empty(n + m, np.int64)
    parent_edge = np.empty(n + m, np.int64)
    path_edges = np.empty(nb, np.int64)

    bland_after = 2000 + 20 * (n + m)
    bland = False
    it = 0
    while it < max_iter:
        it += 1
        if not bland and it > bland_after:
            bland = True

        ptr, adj_node, adj_edge = _tree_structures(bas_i, bas_j, n, m)

        # duals: fix u[0] = 0, propagate c = u + v along tree edges
        for t in range(n + m):
            visited[t] = False
        u[0] = 0.0
        visited[0] = True
        queue[0] = 0
        head = 0
        tail = 1
        while head < tail:
            node = queue[head]
            head += 1
            for p in range(ptr[node], ptr[node + 1]):
                nxt = adj_node[p]
                if visited[nxt]:
                    continue
                e = adj_edge[p]
                c = cost[bas_i[e], bas_j[e]]
                if node < n:
                    v[nxt - n] = c - u[node]
                else:
                    u[nxt] = c - v[node - n]
                visited[nxt] = True
                queue[tail] = nxt
                tail += 1

        # entering arc
        ei = -1
        ej = -1
        if bland:
            done = False
            for i in range(n):
                if done:
                    break
                for j in range(m):
                    if cost[i, j] - u[i] - v[j] < -tol:
                        ei = i
                        ej = j
                        done = True
                        break
        else:
            best = -tol
            for i in range(n):
                for j in range(m):
                    r = cost[i, j] - u[i] - v[j]
                    if r < best:
                        best = r
                        ei = i
                        ej = j
        if ei < 0:
            return flow, 0  # dual feasible: optimal

        # cycle: tree path from row-node ei to column-node n + ej
        for t in range(n + m):
            visited[t] = False
        parent_node[ei] = -1
        parent_edge[ei] = -1
        visited[ei] = True
        queue[0] = ei
        head = 0
        tail = 1
        target = n + ej
        while head < tail and not visited[target]:
            node = queue[head]
            head += 1
            for p in range(ptr[node], ptr[node + 1]):
                nxt = adj_node[p]
                if visited[nxt]:
                    continue
                visited[nxt] = True
                parent_node[nxt] = node
                parent_edge[nxt] = adj_edge[p]
                queue[tail] = nxt
                tail += 1

        length = 0
        node = target
        while node != ei:
            path_edges[length] = parent_edge[node]
            length += 1
            node = parent_node[node]

        # walking from the entering column back to the entering row, cells at
        # even positions lose theta, odd positions gain it
        theta = np.inf
        leave_pos = -1
        leave_key = -1
        for p in range(0, length, 2):
            e = path_edges[p]
            f = flow[bas_i[e], bas_j[e]]
            key = bas_i[e] * m + bas_j[e]
            if f < theta or (f == theta and key < leave_key):
                theta = f
                leave_pos = p
                leave_key = key

        flow[ei, ej] += theta
        for p in range(length):
            e = path_edges[p]
            if p % 2 == 0:
                flow[bas_i[e], bas_j[e]] -= theta
            else:
                flow[bas_i[e], bas_j[e]] += theta

        leave_edge = path_edges[leave_pos]
        flow[bas_i[leave_edge], bas_j[leave_edge]] = 0.0
        bas_i[leave_edge] = ei
        bas_j[leave_edge] = ej

    return flow, 1


@maybe_jit
def w1_coupled_1d(x, wx, y, wy):
    """W1 between sorted weighted 1-D samples via the quantile coupling."""
    nx = x.shape[0]
    ny = y.shape[0]
    cost = 0.0
    i = 0
    j = 0
    ra = wx[0]
    rb = wy[0]
    while True:
        q = ra if ra < rb else rb
        d = x[i] - y[j]
        if d < 0.0:
            d = -d
        cost += q * d
        ra -= q
        rb -= q
        if ra <= 0.0:
            i += 1
            if i >= nx:
                break
            ra = wx[i]
        if rb <= 0.0:
            j += 1
            if j >= ny:
                break
            rb = wy[j]
    return cost


def _pairwise_euclidean_loops(a, b):
    """Exact per-pair Euclidean distances, loop form for numba."""
    n = a.shape[0]
    m = b.shape[0]
    d = a.shape[1]
    out = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            s = 0.0
            for t in range(d):
                diff = a[i, t] - b[j, t]
                s += diff * diff
            out[i, j] = np.sqrt(s)
    return out


def _pairwise_euclidean_numpy(a, b, block=256):
    """Blocked broadcast fallback; identical arithmetic per pair."""
    n = a.shape[0]
    out = np.empty((n, b.shape[0]))
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = a[start:stop, None, :] - b[None, :, :]
        out[start:stop] = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    return out


def _max_pairwise_loops(x):
    """Largest pairwise distance inside one cloud, loop form for numba."""
    n = x.shape[0]
    d = x.shape[1]
    best = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            s = 0.0
            for t in range(d):
                diff = x[i, t] - x[j, t]
                s += diff * diff
            if s > best:
                best = s
    return np.sqrt(best)


def _max_pairwise_numpy(x, block=256):
    n = x.shape[0]
    best = 0.0
    for start in range(0, n, block):
        stop = min(start + block, n)
        diff = x[start:stop, None, :] - x[None, :, :]
        sq = np.einsum("ijk,ijk->ij", diff, diff)
        best = max(best, float(sq.max()))
    return float(np.sqrt(best))


if NUMBA_ENABLED:
    pairwise_euclidean = maybe_jit(_pairwise_euclidean_loops)
    max_pairwise_distance = maybe_jit(_max_pairwise_loops)
else:
    pairwise_euclidean = _pairwise_euclidean_numpy
    max_pairwise_distance = _max_pairwise_numpy


def _make_crc32c_table() -> np.ndarray:
    """Byte-indexed lookup table for the Castagnoli polynomial (reflected)."""
    poly = np.uint64(0x82F63B78)
    table = np.empty(256, np.uint64)
    for byte in range(256):
        c = np.uint64(byte)
        for _ in range(8):
            if c & np.uint64(1):
                c = (c >> np.uint64(1)) ^ poly
            else:
                c >>= np.uint64(1)
        table[byte] = c
    return table


CRC32C_TABLE = _make_crc32c_table()


@maybe_jit
def crc32c_update(crc, data, table):
    """Fold ``data`` (uint8 array) into a running CRC-32C value."""
    c = crc
    for k in range(data.shape[0]):
        c = ((c >> np.uint64(8)) ^ table[(c ^ np.uint64(data[k])) & np.uint64(0xFF)]) & np.uint64(
            0xFFFFFFFF
        )
    return c


def crc32c(data: bytes | np.ndarray, value: int = 0) -> int:
    """CRC-32C (Castagnoli) of a byte buffer, standard init/final XOR."""
    buf = np.frombuffer(data, np.uint8) if isinstance(data, (bytes, bytearray, memoryview)) else data
    c = np.uint64(value ^ 0xFFFFFFFF)
    c = crc32c_update(c, buf, CRC32C_TABLE)
    return int(c) ^ 0xFFFFFFFF
