"""Hot per-point kernels: orthogonality-mask statistics and DBSCAN expansion.

Two interchangeable backends produce bit-identical results:

- "numba": JIT-compiled loops (default when numba imports cleanly);
- "numpy": plain Python/numpy fallback, used automatically when numba is
  unavailable or when the environment variable REBARTIE_NO_NUMBA is set
  to a non-empty value.

Per-point randomness comes from a splitmix64 stream seeded with
(seed XOR point_index), so results do not depend on evaluation order and
parallel execution is safe. Both backends implement the identical
generator and identical float arithmetic (same association order, no
FMA), which the test suite checks for exact equality.
"""

import os

import numpy as np
from scipy.spatial import cKDTree

try:
    from numba import njit, prange
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    HAS_NUMBA = False

ENV_FLAG = "REBARTIE_NO_NUMBA"

_MASK64 = 0xFFFFFFFFFFFFFFFF
_SM_GAMMA = 0x9E3779B97F4A7C15
_SM_MIX1 = 0xBF58476D1CE4E5B9
_SM_MIX2 = 0x94D049BB133111EB


def active_backend(backend=None) -> str:
    """Resolve the backend name: explicit argument > env flag > numba."""
    if backend is not None:
        if backend not in ("numba", "numpy"):
            raise ValueError(f"unknown backend {backend!r}")
        if backend == "numba" and not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not installed")
        return backend
    if os.environ.get(ENV_FLAG) or not HAS_NUMBA:
        return "numpy"
    return "numba"


# ---------------------------------------------------------------------------
# splitmix64, python flavor (python ints, explicit 64-bit masking)
# ---------------------------------------------------------------------------

def _splitmix_next_py(state):
    state = (state + _SM_GAMMA) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * _SM_MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _SM_MIX2) & _MASK64
    z = z ^ (z >> 31)
    return z, state


def _shuffled_order_py(k, state):
    order = list(range(k))
    for i in range(k - 1, 0, -1):
        z, state = _splitmix_next_py(state)
        j = z % (i + 1)
        order[i], order[j] = order[j], order[i]
    return order


def _ortho_mask_numpy(points, indptr, indices, r_res, p_res, min_neighbors, seed):
    n = points.shape[0]
    out = np.zeros(n, dtype=bool)
    px = points[:, 0]
    py = points[:, 1]
    pz = points[:, 2]
    for i in range(n):
        nbr = indices[indptr[i]:indptr[i + 1]]
        nbr = nbr[nbr != i]
        dx = px[nbr] - px[i]
        dy = py[nbr] - py[i]
        dz = pz[nbr] - pz[i]
        norm2 = dx * dx + dy * dy + dz * dz
        keep = norm2 >= 1e-24
        if not np.all(keep):
            dx, dy, dz, norm2 = dx[keep], dy[keep], dz[keep], norm2[keep]
        k = dx.shape[0]
        if k < min_neighbors:
            continue
        inv = 1.0 / np.sqrt(norm2)
        vx = dx * inv
        vy = dy * inv
        vz = dz * inv
        order = np.array(_shuffled_order_py(k, (seed ^ i) & _MASK64), dtype=np.int64)
        m = k // 2
        ia = order[:m]
        ib = order[m:2 * m]
        d = np.abs(vx[ia] * vx[ib] + vy[ia] * vy[ib] + vz[ia] * vz[ib])
        c0 = int(np.count_nonzero(d < r_res))
        c1 = int(np.count_nonzero(d > p_res))
        out[i] = (2 * c0 >= m) and (3 * c1 >= m)
    return out


def _neighbor_csr_scipy(points, radius):
    tree = cKDTree(points)
    lists = tree.query_ball_point(points, radius, return_sorted=True)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
    indptr = np.zeros(points.shape[0] + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    indices = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists]) \
        if points.shape[0] else np.empty(0, dtype=np.int64)
    return indptr, indices


def _dbscan_labels_numpy(indptr, indices, core):
    n = core.shape[0]
    labels = np.full(n, -1, dtype=np.int64)
    stack = np.empty(n, dtype=np.int64)
    next_label = 0
    for i in range(n):
        if not core[i] or labels[i] >= 0:
            continue
        labels[i] = next_label
        stack[0] = i
        top = 1
        while top > 0:
            top -= 1
            j = stack[top]
            for m in indices[indptr[j]:indptr[j + 1]]:
                if core[m] and labels[m] < 0:
                    labels[m] = next_label
                    stack[top] = m
                    top += 1
        next_label += 1
    # border points join the cluster of their lowest-index core neighbor
    for i in range(n):
        if core[i]:
            continue
        best = -1
        for m in indices[indptr[i]:indptr[i + 1]]:
            if core[m] and (best < 0 or m < best):
                best = m
        if best >= 0:
            labels[i] = labels[best]
    return labels


# ---------------------------------------------------------------------------
# numba flavor
# ---------------------------------------------------------------------------

if HAS_NUMBA:

    @njit(cache=True)
    def _splitmix_next_nb(state):
        state = state + np.uint64(_SM_GAMMA)
        z = state
        z = (z ^ (z >> np.uint64(30))) * np.uint64(_SM_MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(_SM_MIX2)
        z = z ^ (z >> np.uint64(31))
        return z, state

    @njit(cache=True, parallel=True)
    def _ortho_mask_nb(points, indptr, indices, r_res, p_res, min_neighbors, seed):
        n = points.shape[0]
        out = np.zeros(n, dtype=np.bool_)
        for i in prange(n):
            start = indptr[i]
            end = indptr[i + 1]
            cap = end - start
            vx = np.empty(cap)
            vy = np.empty(cap)
            vz = np.empty(cap)
            k = 0
            for idx in range(start, end):
                j = indices[idx]
                if j == i:
                    continue
                dx = points[j, 0] - points[i, 0]
                dy = points[j, 1] - points[i, 1]
                dz = points[j, 2] - points[i, 2]
                norm2 = dx * dx + dy * dy + dz * dz
                if norm2 < 1e-24:
                    continue
                inv = 1.0 / np.sqrt(norm2)
                vx[k] = dx * inv
                vy[k] = dy * inv
                vz[k] = dz * inv
                k += 1
            if k < min_neighbors:
                continue
            order = np.arange(k)
            state = seed ^ np.uint64(i)
            for a in range(k - 1, 0, -1):
                z, state = _splitmix_next_nb(state)
                b = int(z % np.uint64(a + 1))
                tmp = order[a]
                order[a] = order[b]
                order[b] = tmp
            m = k // 2
            c0 = 0
            c1 = 0
            for p in range(m):
                ia = order[p]
                ib = order[m + p]
                d = abs(vx[ia] * vx[ib] + vy[ia] * vy[ib] + vz[ia] * vz[ib])
                if d < r_res:
                    c0 += 1
                if d > p_res:
                    c1 += 1
            out[i] = (2 * c0 >= m) and (3 * c1 >= m)
        return out

    @njit(cache=True, parallel=True)
    def _neighbor_csr_nb(points, radius):
        # uniform-cell bucket search; rows come out sorted ascending so
        # the CSR matches the kd-tree route entry for entry
        n = points.shape[0]
        r2 = radius * radius
        cx = np.empty(n, np.int64)
        cy = np.empty(n, np.int64)
        cz = np.empty(n, np.int64)
        for i in range(n):
            cx[i] = np.int64(np.floor(points[i, 0] / radius))
            cy[i] = np.int64(np.floor(points[i, 1] / radius))
            cz[i] = np.int64(np.floor(points[i, 2] / radius))
        x0, y0, z0 = cx.min(), cy.min(), cz.min()
        nx = cx.max() - x0 + 1
        ny = cy.max() - y0 + 1
        nz = cz.max() - z0 + 1
        keys = np.empty(n, np.int64)
        for i in range(n):
            keys[i] = ((cx[i] - x0) * ny + (cy[i] - y0)) * nz + (cz[i] - z0)
        order = np.argsort(keys)
        skeys = keys[order]
        nu = 1
        for t in range(1, n):
            if skeys[t] != skeys[t - 1]:
                nu += 1
        ukeys = np.empty(nu, np.int64)
        ustart = np.empty(nu + 1, np.int64)
        u = 0
        for t in range(n):
            if t == 0 or skeys[t] != skeys[t - 1]:
                ukeys[u] = skeys[t]
                ustart[u] = t
                u += 1
        ustart[nu] = n
        counts = np.zeros(n, np.int64)
        for i in prange(n):
            c = 0
            for ox in range(-1, 2):
                gx = cx[i] - x0 + ox
                if gx < 0 or gx >= nx:
                    continue
                for oy in range(-1, 2):
                    gy = cy[i] - y0 + oy
                    if gy < 0 or gy >= ny:
                        continue
                    for oz in range(-1, 2):
                        gz = cz[i] - z0 + oz
                        if gz < 0 or gz >= nz:
                            continue
                        key = (gx * ny + gy) * nz + gz
                        pos = np.searchsorted(ukeys, key)
                        if pos >= nu or ukeys[pos] != key:
                            continue
                        for t in range(ustart[pos], ustart[pos + 1]):
                            j = order[t]
                            dx = points[j, 0] - points[i, 0]
                            dy = points[j, 1] - points[i, 1]
                            dz = points[j, 2] - points[i, 2]
                            if dx * dx + dy * dy + dz * dz <= r2:
                                c += 1
            counts[i] = c
        indptr = np.zeros(n + 1, np.int64)
        for i in range(n):
            indptr[i + 1] = indptr[i] + counts[i]
        indices = np.empty(indptr[n], np.int64)
        for i in prange(n):
            w = indptr[i]
            for ox in range(-1, 2):
                gx = cx[i] - x0 + ox
                if gx < 0 or gx >= nx:
                    continue
                for oy in range(-1, 2):
                    gy = cy[i] - y0 + oy
                    if gy < 0 or gy >= ny:
                        continue
                    for oz in range(-1, 2):
                        gz = cz[i] - z0 + oz
                        if gz < 0 or gz >= nz:
                            continue
                        key = (gx * ny + gy) * nz + gz
                        pos = np.searchsorted(ukeys, key)
                        if pos >= nu or ukeys[pos] != key:
                            continue
                        for t in range(ustart[pos], ustart[pos + 1]):
                            j = order[t]
                            dx = points[j, 0] - points[i, 0]
                            dy = points[j, 1] - points[i, 1]
                            dz = points[j, 2] - points[i, 2]
                            if dx * dx + dy * dy + dz * dz <= r2:
                                indices[w] = j
                                w += 1
            row = indices[indptr[i]:indptr[i + 1]]
            row.sort()
        return indptr, indices

    @njit(cache=True)
    def _dbscan_labels_nb(indptr, indices, core):
        n = core.shape[0]
        labels = np.full(n, -1, dtype=np.int64)
        stack = np.empty(n, dtype=np.int64)
        next_label = 0
        for i in range(n):
            if not core[i] or labels[i] >= 0:
                continue
            labels[i] = next_label
            stack[0] = i
            top = 1
            while top > 0:
                top -= 1
                j = stack[top]
                for idx in range(indptr[j], indptr[j + 1]):
                    m = indices[idx]
                    if core[m] and labels[m] < 0:
                        labels[m] = next_label
                        stack[top] = m
                        top += 1
            next_label += 1
        for i in range(n):
            if core[i]:
                continue
            best = -1
            for idx in range(indptr[i], indptr[i + 1]):
                m = indices[idx]
                if core[m] and (best < 0 or m < best):
                    best = m
            if best >= 0:
                labels[i] = labels[best]
        return labels


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------

def neighbor_csr(points, radius, backend=None):
    """All-pairs fixed-radius neighbor lists in CSR form.

    Rows are sorted ascending and include the point itself; the closed
    ball (distance <= radius) matches the kd-tree convention, so both
    backends return the same arrays.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    if float(radius) <= 0.0:
        raise ValueError(f"radius must be > 0, got {radius}")
    if points.shape[0] == 0:
        return np.zeros(1, dtype=np.int64), np.empty(0, dtype=np.int64)
    if active_backend(backend) == "numba":
        return _neighbor_csr_nb(points, float(radius))
    return _neighbor_csr_scipy(points, float(radius))


def ortho_mask(points, indptr, indices, r_res, p_res, min_neighbors, seed,
               backend=None):
    """Per-point orthogonality statistic over CSR neighbor lists.

    For each point: unit vectors to its neighbors (self and coincident
    points dropped), a seeded shuffle, a half/half split into pairs, and
    the two count tests on |a_i . b_i| (at least half below r_res, at
    least a third above p_res). Points with fewer than min_neighbors
    usable neighbors fail the mask outright.
    """
    points = np.ascontiguousarray(points, dtype=np.float64)
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if active_backend(backend) == "numba":
        return _ortho_mask_nb(points, indptr, indices, float(r_res),
                              float(p_res), int(min_neighbors),
                              np.uint64(int(seed) & _MASK64))
    return _ortho_mask_numpy(points, indptr, indices, float(r_res),
                             float(p_res), int(min_neighbors),
                             int(seed) & _MASK64)


def dbscan_labels(indptr, indices, core, backend=None):
    """Connected components of core points plus deterministic border pass.

    Clusters are numbered in order of their lowest core point index, so
    labels are dense and independent of traversal details. Border points
    take the label of their lowest-index core neighbor; everything else
    stays -1 (noise).
    """
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    core = np.ascontiguousarray(core, dtype=bool)
    if active_backend(backend) == "numba":
        return _dbscan_labels_nb(indptr, indices, core)
    return _dbscan_labels_numpy(indptr, indices, core)
