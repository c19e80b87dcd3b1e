"""Backend equality and oracle checks for the hot kernels.

The numba and numpy flavors must return bit-identical arrays; the
neighbor search is additionally checked against a brute-force O(n^2)
oracle that shares no code with either backend.
"""
import numpy as np
import pytest

from rebartie import _kernels
from rebartie._kernels import (
    HAS_NUMBA,
    active_backend,
    dbscan_labels,
    neighbor_csr,
    ortho_mask,
    _splitmix_next_py,
)

BACKENDS = ["numpy"] + (["numba"] if HAS_NUMBA else [])
needs_numba = pytest.mark.skipif(not HAS_NUMBA, reason="numba not installed")


def brute_csr(points, radius):
    """Quadratic all-pairs oracle: closed ball, self included, sorted rows."""
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=2)
    rows = [np.flatnonzero(d2[i] <= radius * radius) for i in range(len(points))]
    indptr = np.zeros(len(points) + 1, dtype=np.int64)
    np.cumsum([len(r) for r in rows], out=indptr[1:])
    indices = (np.concatenate(rows).astype(np.int64)
               if len(points) else np.empty(0, np.int64))
    return indptr, indices


def random_cloud(rng, n, with_duplicates=False):
    pts = rng.uniform(-1.0, 1.0, (n, 3))
    if with_duplicates and n >= 8:
        pts[n // 2] = pts[0]
        pts[-1] = pts[1]
    return pts


# ------------------------------------------------------------------ splitmix

def test_splitmix_reference_vector():
    # First outputs of splitmix64 seeded with 0, from the published
    # reference implementation.
    expected = [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]
    state = 0
    for want in expected:
        z, state = _splitmix_next_py(state)
        assert z == want


def test_splitmix_wraps_at_64_bits():
    z, state = _splitmix_next_py(2 ** 64 - 1)
    assert 0 <= z < 2 ** 64
    assert 0 <= state < 2 ** 64


@needs_numba
def test_splitmix_backends_agree():
    states = [0, 1, 12345, 2 ** 63, 2 ** 64 - 1]
    for s0 in states:
        z_py, s_py = _splitmix_next_py(s0)
        z_nb, s_nb = _kernels._splitmix_next_nb(np.uint64(s0))
        assert int(z_nb) == z_py
        assert int(s_nb) == s_py


# -------------------------------------------------------------- neighbor csr

@pytest.mark.parametrize("backend", BACKENDS)
def test_neighbor_csr_matches_brute_force(backend, rng):
    for n in (1, 2, 17, 120):
        pts = random_cloud(rng, n, with_duplicates=True)
        for radius in (0.05, 0.3, 1.0):
            indptr, indices = neighbor_csr(pts, radius, backend=backend)
            optr, oidx = brute_csr(pts, radius)
            np.testing.assert_array_equal(indptr, optr)
            np.testing.assert_array_equal(indices, oidx)


@pytest.mark.parametrize("backend", BACKENDS)
def test_neighbor_csr_rows_sorted_and_include_self(backend, rng):
    pts = random_cloud(rng, 60)
    indptr, indices = neighbor_csr(pts, 0.4, backend=backend)
    for i in range(60):
        row = indices[indptr[i]:indptr[i + 1]]
        assert i in row
        assert np.all(np.diff(row) > 0)


@pytest.mark.parametrize("backend", BACKENDS)
def test_neighbor_csr_closed_ball_boundary(backend):
    # distance exactly equal to the radius is a hit (0.25 is exact in
    # binary, so no rounding slack is needed)
    pts = np.array([[0.0, 0.0, 0.0], [0.25, 0.0, 0.0], [0.5001, 0.0, 0.0]])
    indptr, indices = neighbor_csr(pts, 0.25, backend=backend)
    np.testing.assert_array_equal(indices[indptr[0]:indptr[1]], [0, 1])
    np.testing.assert_array_equal(indices[indptr[1]:indptr[2]], [0, 1])
    np.testing.assert_array_equal(indices[indptr[2]:indptr[3]], [2])


@pytest.mark.parametrize("backend", BACKENDS)
def test_neighbor_csr_coincident_points(backend):
    pts = np.zeros((5, 3))
    indptr, indices = neighbor_csr(pts, 0.1, backend=backend)
    for i in range(5):
        np.testing.assert_array_equal(indices[indptr[i]:indptr[i + 1]],
                                      np.arange(5))


@pytest.mark.parametrize("backend", BACKENDS)
def test_neighbor_csr_negative_coordinates(backend, rng):
    # cells straddling the origin exercise the grid offset logic
    pts = np.concatenate([rng.uniform(-2.0, -1.5, (40, 3)),
                          rng.uniform(1.5, 2.0, (40, 3))])
    indptr, indices = neighbor_csr(pts, 0.35, backend=backend)
    optr, oidx = brute_csr(pts, 0.35)
    np.testing.assert_array_equal(indptr, optr)
    np.testing.assert_array_equal(indices, oidx)


def test_neighbor_csr_empty_and_bad_radius():
    indptr, indices = neighbor_csr(np.empty((0, 3)), 0.1)
    np.testing.assert_array_equal(indptr, [0])
    assert indices.size == 0
    with pytest.raises(ValueError):
        neighbor_csr(np.zeros((3, 3)), 0.0)
    with pytest.raises(ValueError):
        neighbor_csr(np.zeros((3, 3)), -1.0)


@needs_numba
def test_neighbor_csr_backends_bit_identical(rng):
    for _ in range(6):
        pts = random_cloud(rng, int(rng.integers(5, 200)), with_duplicates=True)
        radius = float(rng.uniform(0.05, 0.8))
        p_nb, i_nb = neighbor_csr(pts, radius, backend="numba")
        p_np, i_np = neighbor_csr(pts, radius, backend="numpy")
        np.testing.assert_array_equal(p_nb, p_np)
        np.testing.assert_array_equal(i_nb, i_np)


# --------------------------------------------------------------- ortho mask

def ideal_cross(n_arm=8, arm_len=0.05):
    """Center point plus four straight arms along +-x and +-y."""
    pts = [np.zeros(3)]
    for d in ([1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0]):
        for k in range(1, n_arm + 1):
            pts.append(np.asarray(d, dtype=float) * (arm_len * k / n_arm))
    return np.asarray(pts)


@pytest.mark.parametrize("backend", BACKENDS)
def test_ortho_mask_ideal_cross_center_passes(backend):
    pts = ideal_cross()
    indptr, indices = neighbor_csr(pts, 0.2, backend=backend)
    mask = ortho_mask(pts, indptr, indices, 0.1, 0.9, 4, seed=0,
                      backend=backend)
    assert mask[0]


@pytest.mark.parametrize("backend", BACKENDS)
def test_ortho_mask_isolated_point_fails(backend):
    pts = np.array([[0.0, 0.0, 0.0], [5.0, 5.0, 5.0]])
    indptr, indices = neighbor_csr(pts, 0.2, backend=backend)
    mask = ortho_mask(pts, indptr, indices, 0.1, 0.9, 4, seed=0,
                      backend=backend)
    assert not mask.any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_ortho_mask_coincident_neighbors_dropped(backend):
    # ten copies of the same point: no usable directions, mask all false
    pts = np.zeros((10, 3))
    indptr, indices = neighbor_csr(pts, 0.2, backend=backend)
    mask = ortho_mask(pts, indptr, indices, 0.1, 0.9, 4, seed=0,
                      backend=backend)
    assert not mask.any()


@pytest.mark.parametrize("backend", BACKENDS)
def test_ortho_mask_straight_line_fails(backend):
    # collinear neighbors: every pair is parallel, M1 can never hold
    pts = np.linspace([0, 0, 0], [0.1, 0, 0], 20)
    indptr, indices = neighbor_csr(pts, 0.2, backend=backend)
    mask = ortho_mask(pts, indptr, indices, 0.1, 0.9, 4, seed=0,
                      backend=backend)
    assert not mask.any()


def test_ortho_mask_deterministic_in_seed(rng):
    pts = random_cloud(rng, 80)
    indptr, indices = neighbor_csr(pts, 0.5, backend="numpy")
    a = ortho_mask(pts, indptr, indices, 0.3, 0.8, 4, seed=42, backend="numpy")
    b = ortho_mask(pts, indptr, indices, 0.3, 0.8, 4, seed=42, backend="numpy")
    np.testing.assert_array_equal(a, b)


@needs_numba
def test_ortho_mask_backends_bit_identical(rng):
    for trial in range(6):
        pts = random_cloud(rng, int(rng.integers(10, 150)),
                           with_duplicates=True)
        indptr, indices = neighbor_csr(pts, 0.45, backend="numpy")
        for seed in (0, 7, 2 ** 63):
            a = ortho_mask(pts, indptr, indices, 0.3, 0.8, 4, seed,
                           backend="numba")
            b = ortho_mask(pts, indptr, indices, 0.3, 0.8, 4, seed,
                           backend="numpy")
            np.testing.assert_array_equal(a, b)


# ------------------------------------------------------------------- dbscan

def chain_csr(points, eps):
    return neighbor_csr(points, eps, backend="numpy")


@pytest.mark.parametrize("backend", BACKENDS)
def test_dbscan_two_blobs_and_noise(backend, rng):
    a = rng.normal(0.0, 0.02, (30, 3))
    b = rng.normal(0.0, 0.02, (30, 3)) + [5.0, 0.0, 0.0]
    noise = np.array([[2.5, 2.5, 2.5]])
    pts = np.concatenate([a, b, noise])
    indptr, indices = chain_csr(pts, 0.2)
    counts = np.diff(indptr)
    core = counts >= 5
    labels = dbscan_labels(indptr, indices, core, backend=backend)
    assert set(labels[:30]) == {0}
    assert set(labels[30:60]) == {1}
    assert labels[60] == -1


@pytest.mark.parametrize("backend", BACKENDS)
def test_dbscan_border_point_takes_lowest_core_neighbor(backend):
    # two tight cores 1.9*eps apart with a lone border point in between,
    # within eps of one core point on each side
    eps = 1.0
    left = np.array([[0.0, 0.0, 0.0], [0.0, 0.1, 0.0], [0.1, 0.0, 0.0]])
    right = left + [1.9, 0.0, 0.0]
    border = np.array([[0.95, 0.0, 0.0]])
    pts = np.concatenate([left, right, border])
    indptr, indices = chain_csr(pts, eps)
    core = np.array([True] * 6 + [False])
    labels = dbscan_labels(indptr, indices, core, backend=backend)
    assert labels[6] == labels[0]
    assert labels[0] != labels[3]


@needs_numba
def test_dbscan_backends_bit_identical(rng):
    for _ in range(6):
        pts = random_cloud(rng, int(rng.integers(20, 200)))
        indptr, indices = chain_csr(pts, float(rng.uniform(0.1, 0.5)))
        counts = np.diff(indptr)
        core = counts >= int(rng.integers(2, 8))
        a = dbscan_labels(indptr, indices, core, backend="numba")
        b = dbscan_labels(indptr, indices, core, backend="numpy")
        np.testing.assert_array_equal(a, b)


# ----------------------------------------------------------------- dispatch

def test_active_backend_explicit_and_invalid():
    assert active_backend("numpy") == "numpy"
    with pytest.raises(ValueError):
        active_backend("cython")


def test_active_backend_env_flag(monkeypatch):
    monkeypatch.setenv(_kernels.ENV_FLAG, "1")
    assert active_backend() == "numpy"
    monkeypatch.delenv(_kernels.ENV_FLAG)
    assert active_backend() == ("numba" if HAS_NUMBA else "numpy")


def test_active_backend_numba_missing(monkeypatch):
    monkeypatch.setattr(_kernels, "HAS_NUMBA", False)
    assert active_backend() == "numpy"
    with pytest.raises(RuntimeError):
        active_backend("numba")
