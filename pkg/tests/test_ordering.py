"""PCA frames, frame assembly and the quantized tying order."""
import numpy as np
import pytest

from rebartie.errors import AmbiguousAxis, DegenerateCloud
from rebartie.extraction import OrthoFilterParams, extract_nodes
from rebartie.geometry import Pose, quat_from_axis_angle, quat_to_matrix
from rebartie.ordering import (
    Frame,
    OrderedNodes,
    build_frame,
    order_nodes,
    pca,
    quantized_lex_order,
    refine_frame,
)
from rebartie.scenes import RebarGridSpec, SceneSpec, generate_scene


def anisotropic_cloud(rng, n=300):
    return rng.normal(size=(n, 3)) * [3.0, 1.0, 0.2]


def axis_angle_deg(a, b):
    d = min(1.0, abs(float(np.dot(a, b))))
    return np.degrees(np.arccos(d))


# --------------------------------------------------------------------- pca

def test_pca_needs_four_points(rng):
    with pytest.raises(DegenerateCloud):
        pca(rng.normal(size=(3, 3)))


def test_pca_axes_orthonormal_descending(rng):
    res = pca(anisotropic_cloud(rng))
    np.testing.assert_allclose(res.axes @ res.axes.T, np.eye(3), atol=1e-9)
    assert res.eigenvalues[0] >= res.eigenvalues[1] >= res.eigenvalues[2]
    assert not res.degenerate
    # sign convention: largest-magnitude component positive
    for ax in res.axes:
        assert ax[np.argmax(np.abs(ax))] > 0


def test_pca_mean_and_leading_axis(rng):
    pts = anisotropic_cloud(rng) + [5.0, -2.0, 1.0]
    res = pca(pts)
    np.testing.assert_allclose(res.mean, pts.mean(axis=0), atol=1e-12)
    assert axis_angle_deg(res.axes[0], [1, 0, 0]) < 5.0


def test_pca_planar_grid_axes_match_bars():
    # rectangular mat: the two leading axes land on the bar directions
    grid = RebarGridSpec(rows=2, cols=3, spacing=0.25)
    cloud, _, _ = generate_scene(SceneSpec(grid=grid, seed=0))
    res = pca(cloud.points)
    assert axis_angle_deg(res.axes[0], [1, 0, 0]) < 5.0
    assert axis_angle_deg(res.axes[1], [0, 1, 0]) < 5.0
    assert axis_angle_deg(res.axes[2], [0, 0, 1]) < 5.0


def test_pca_degenerate_flag_on_isotropic_cloud():
    # cube corners: all three eigenvalues coincide
    corners = np.array([[x, y, z] for x in (-1, 1) for y in (-1, 1)
                        for z in (-1, 1)], dtype=float)
    assert pca(corners).degenerate


def test_pca_rotation_equivariance(rng):
    pts = anisotropic_cloud(rng)
    base = pca(pts)
    for _ in range(20):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        R = quat_to_matrix(quat_from_axis_angle(axis, rng.uniform(0, np.pi)))
        rot = pca(pts @ R.T)
        np.testing.assert_allclose(rot.eigenvalues, base.eigenvalues,
                                   rtol=1e-9, atol=1e-12)
        for i in range(3):
            # equal up to the per-axis sign convention
            assert abs(np.dot(rot.axes[i], R @ base.axes[i])) > 1 - 1e-9


# ------------------------------------------------------------------- frame

def test_frame_validation():
    e = np.eye(3)
    with pytest.raises(ValueError):
        Frame(np.zeros(3), 2.0 * e[0], e[1], e[2])
    with pytest.raises(ValueError):
        Frame(np.zeros(3), e[0], e[1], -e[2])  # left-handed


def test_frame_to_frame_roundtrip(rng):
    f = Frame(np.array([1.0, 2.0, 3.0]),
              np.array([0.0, 1.0, 0.0]),
              np.array([0.0, 0.0, 1.0]),
              np.array([1.0, 0.0, 0.0]))
    pts = rng.normal(size=(10, 3))
    local = f.to_frame(pts)
    back = local @ f.rotation().T + f.origin
    np.testing.assert_allclose(back, pts, atol=1e-12)


def flat_cloud(rng, n=200):
    """Anisotropic planar cloud in the xy plane, long axis x."""
    return rng.normal(size=(n, 3)) * [2.0, 1.0, 0.01]


def test_build_frame_canonical_alignment(rng):
    res = pca(flat_cloud(rng))
    f = build_frame(res, Pose(t=np.array([0.0, -5.0, 0.0])), res.mean,
                    np.array([0.0, 0.0, 1.0]))
    assert axis_angle_deg(f.z_axis, [0, 0, 1]) < 2.0
    assert f.z_axis[2] > 0
    assert f.y_axis[1] > 0.9  # toward the cloud from behind
    np.testing.assert_allclose(np.cross(f.y_axis, f.z_axis), f.x_axis,
                               atol=1e-9)
    np.testing.assert_array_equal(f.origin, res.mean)


def test_build_frame_sign_follows_references(rng):
    res = pca(flat_cloud(rng))
    up_down = np.array([0.0, 0.0, -1.0])
    f = build_frame(res, Pose(t=np.array([0.0, 5.0, 0.0])), res.mean, up_down)
    assert f.z_axis[2] < 0
    assert f.y_axis[1] < -0.9


def test_build_frame_ambiguous_y(rng):
    res = pca(flat_cloud(rng))
    # approach along the exact diagonal of the two in-plane axes
    diag = res.axes[0] + res.axes[1]
    diag /= np.linalg.norm(diag)
    prev = Pose(t=res.mean - diag)
    with pytest.raises(AmbiguousAxis):
        build_frame(res, prev, res.mean, np.array([0.0, 0.0, 1.0]))


def test_build_frame_prev_at_mean_raises(rng):
    res = pca(flat_cloud(rng))
    with pytest.raises(AmbiguousAxis):
        build_frame(res, Pose(t=res.mean.copy()), res.mean,
                    np.array([0.0, 0.0, 1.0]))


# ------------------------------------------------------------ refine_frame

@pytest.fixture(scope="module")
def clean_nodes():
    cloud, _, truth = generate_scene(
        SceneSpec(grid=RebarGridSpec(rows=2, cols=2), seed=0))
    return extract_nodes(cloud, OrthoFilterParams()), truth


def test_refine_frame_recovers_mat_frame(clean_nodes):
    nodes, truth = clean_nodes
    prev = Pose(t=np.array([0.0, -0.6, 0.1]))
    f = refine_frame(nodes.crops, prev, truth.up_axis)
    assert axis_angle_deg(f.z_axis, [0, 0, 1]) < 2.0
    assert axis_angle_deg(f.y_axis, [0, 1, 0]) < 3.0
    assert f.y_axis[1] > 0
    # origin is the mean of the kept crop means, near the mat center
    assert np.linalg.norm(f.origin) < 0.02


def test_refine_frame_skips_bad_crops(clean_nodes, rng):
    nodes, truth = clean_nodes
    prev = Pose(t=np.array([0.0, -0.6, 0.1]))
    tiny = rng.normal(size=(3, 3))  # too small for pca, skipped
    f_ref = refine_frame(nodes.crops, prev, truth.up_axis)
    f = refine_frame(list(nodes.crops) + [tiny], prev, truth.up_axis)
    np.testing.assert_allclose(f.z_axis, f_ref.z_axis, atol=1e-12)
    np.testing.assert_allclose(f.origin, f_ref.origin, atol=1e-12)


def test_refine_frame_all_bad_raises(rng):
    with pytest.raises(DegenerateCloud):
        refine_frame([rng.normal(size=(3, 3))], Pose.identity(),
                     np.array([0.0, 0.0, 1.0]))


# ------------------------------------------------------------------- order

def test_quantized_lex_order_hand_case():
    coords = np.array([
        [0.0, 1.0, 0.0],   # back row, left, low
        [0.0, 0.0, 0.0],   # front row
        [1.0, 1.0, 0.0],   # back row, right, low
        [0.0, 1.0, 1.0],   # back row, high
    ])
    np.testing.assert_array_equal(quantized_lex_order(coords, 0.0),
                                  [0, 2, 3, 1])


def test_quantized_lex_order_jitter_stable(rng):
    coords = np.array([[float(x), float(y), 0.0]
                       for y in (1, 0) for x in range(3)])
    base = quantized_lex_order(coords, 0.25)
    jittered = coords + rng.uniform(-0.05, 0.05, coords.shape)
    np.testing.assert_array_equal(quantized_lex_order(jittered, 0.25), base)


def test_quantized_lex_order_ties_keep_index_order():
    coords = np.zeros((5, 3))
    np.testing.assert_array_equal(quantized_lex_order(coords, 0.1),
                                  np.arange(5))


def test_order_nodes_matches_canonical(clean_nodes):
    nodes, truth = clean_nodes
    frame = Frame(np.zeros(3), np.array([1.0, 0.0, 0.0]),
                  np.array([0.0, 1.0, 0.0]), np.array([0.0, 0.0, 1.0]))
    out = order_nodes(nodes, frame, quantum=0.05)
    assert isinstance(out, OrderedNodes)
    assert sorted(out.order) == list(range(len(nodes)))
    # back row (max y) first, x ascending within a row
    coords = nodes.centroids[out.order]
    assert coords[0, 1] > 0 and coords[1, 1] > 0
    assert coords[0, 0] < coords[1, 0]
    assert coords[2, 1] < 0 and coords[2, 0] < coords[3, 0]


def test_canonical_order_is_back_row_first():
    grid = RebarGridSpec(rows=2, cols=3, spacing=0.25)
    _, _, truth = generate_scene(SceneSpec(grid=grid, seed=0))
    assert list(truth.canonical_order) == [3, 4, 5, 0, 1, 2]
