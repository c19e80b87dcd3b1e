"""Principal-axis frames over rebar clouds and the tying-order sort.

The mat frame is built from PCA axes: z is the axis best aligned with
the configured up direction, y the remaining axis best aligned with the
direction from the previous end-effector position toward the cloud
mean, and x completes a right-handed triad. Nodes are then visited in
lexicographic order along (-y, +z, +x) of that frame, with projected
coordinates quantized into bins so small centroid jitter cannot flip
the sequence.
"""

from dataclasses import dataclass

import numpy as np

from .errors import AmbiguousAxis, DegenerateCloud
from .geometry import Pose

__all__ = [
    "PcaResult",
    "Frame",
    "OrderedNodes",
    "pca",
    "build_frame",
    "refine_frame",
    "order_nodes",
    "quantized_lex_order",
]

# Two axis candidates whose alignment scores differ by less than this are
# considered tied, which makes the frame ill-defined.
AXIS_TIE_TOL = 1e-6

# Adjacent eigenvalues closer than this mark a degenerate principal basis.
EIGEN_GAP_TOL = 1e-9

ORTHONORMAL_TOL = 1e-9


@dataclass
class PcaResult:
    """mean (3,), axes (3, 3) with axes[i] the i-th principal direction
    (descending eigenvalue order), eigenvalues (3,), degenerate flag."""

    mean: np.ndarray
    axes: np.ndarray
    eigenvalues: np.ndarray
    degenerate: bool


@dataclass
class Frame:
    """Right-handed orthonormal frame anchored at origin."""

    origin: np.ndarray
    x_axis: np.ndarray
    y_axis: np.ndarray
    z_axis: np.ndarray

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=float).reshape(3)
        self.x_axis = np.asarray(self.x_axis, dtype=float).reshape(3)
        self.y_axis = np.asarray(self.y_axis, dtype=float).reshape(3)
        self.z_axis = np.asarray(self.z_axis, dtype=float).reshape(3)
        for a in (self.x_axis, self.y_axis, self.z_axis):
            if abs(np.linalg.norm(a) - 1.0) > 1e-6:
                raise ValueError("frame axes must be unit length")
        if np.linalg.norm(np.cross(self.x_axis, self.y_axis) - self.z_axis) > 1e-6:
            raise ValueError("frame must be right-handed (x cross y = z)")

    def rotation(self) -> np.ndarray:
        """Matrix with the axes as columns (frame coords -> world)."""
        return np.stack([self.x_axis, self.y_axis, self.z_axis], axis=1)

    def to_frame(self, points: np.ndarray) -> np.ndarray:
        """Project world points into frame coordinates."""
        rel = np.asarray(points, dtype=float) - self.origin
        return rel @ self.rotation()


@dataclass
class OrderedNodes:
    """Visiting order (a permutation of node indices), the frame used,
    and the node set it refers to."""

    order: list
    frame: Frame
    nodes: object


def pca(points: np.ndarray) -> PcaResult:
    """Principal axes of a point cloud.

    Covariance is (1/N) sum (p - mean)(p - mean)^T. Each axis sign is
    fixed so its largest-magnitude component is positive. When two
    eigenvalues coincide within EIGEN_GAP_TOL the basis of their
    eigenspace is arbitrary; the result is returned with the degenerate
    flag set instead of failing.
    """
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if points.shape[0] < 4:
        raise DegenerateCloud(f"need at least 4 points, got {points.shape[0]}")
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / points.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    evals = evals[::-1]
    axes = evecs[:, ::-1].T.copy()
    for i in range(3):
        j = int(np.argmax(np.abs(axes[i])))
        if axes[i, j] < 0.0:
            axes[i] = -axes[i]
    degenerate = bool(np.min(np.abs(np.diff(evals))) <= EIGEN_GAP_TOL)
    return PcaResult(mean=mean, axes=axes, eigenvalues=evals, degenerate=degenerate)


def _pick_axis(candidates, direction, what):
    """Index and sign of the candidate axis most aligned with direction."""
    dots = np.array([float(np.dot(c, direction)) for c in candidates])
    scores = np.abs(dots)
    order = np.argsort(scores)[::-1]
    if len(candidates) > 1 and scores[order[0]] - scores[order[1]] < AXIS_TIE_TOL:
        raise AmbiguousAxis(
            f"{what}-axis candidates tie: |dots| {scores[order[0]]:.9f} "
            f"vs {scores[order[1]]:.9f}")
    i = int(order[0])
    return i, (1.0 if dots[i] >= 0.0 else -1.0)


def build_frame(pca_result: PcaResult, pose_prev: Pose, cloud_mean: np.ndarray,
                up: np.ndarray) -> Frame:
    """Assemble the mat frame from principal axes.

    z: principal axis best aligned with up (sign matched). y: remaining
    axis best aligned with (cloud_mean - pose_prev translation). x
    completes the right-handed triad. Raises AmbiguousAxis on ties.
    """
    up = np.asarray(up, dtype=float)
    up = up / np.linalg.norm(up)
    cloud_mean = np.asarray(cloud_mean, dtype=float)
    axes = [pca_result.axes[i] for i in range(3)]
    zi, zs = _pick_axis(axes, up, "z")
    z = zs * axes[zi]
    rest = [axes[i] for i in range(3) if i != zi]
    approach = cloud_mean - pose_prev.t
    norm = np.linalg.norm(approach)
    if norm < 1e-9:
        raise AmbiguousAxis("pose_prev coincides with the cloud mean")
    yi, ysign = _pick_axis(rest, approach / norm, "y")
    y = ysign * rest[yi]
    # re-orthonormalize: z exact, y projected clean, x closes the triad
    z = z / np.linalg.norm(z)
    y = y - np.dot(y, z) * z
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return Frame(origin=cloud_mean, x_axis=x, y_axis=y, z_axis=z)


def refine_frame(crops, pose_prev: Pose, up: np.ndarray) -> Frame:
    """Average per-crop frames into one refined frame.

    Each crop gets its own PCA frame; crops with a degenerate basis or
    an ambiguous axis pick are skipped. Every crop aligns its y-axis
    against the shared cloud mean rather than its own: the per-crop
    direction turns sideways for crops far off the pose_prev axis,
    which would flip y onto the other bar direction. Axis vectors are
    averaged componentwise and re-orthonormalized (z first, then y,
    then x). Fails only when every crop was skipped.
    """
    results = []
    for crop in crops:
        pts = crop.points if hasattr(crop, "points") else np.asarray(crop)
        try:
            res = pca(pts)
        except DegenerateCloud:
            continue
        if res.degenerate:
            continue
        results.append(res)
    if not results:
        raise DegenerateCloud("all crops degenerate or ambiguous")
    anchor = np.mean([res.mean for res in results], axis=0)
    zs, ys, means = [], [], []
    for res in results:
        try:
            f = build_frame(res, pose_prev, anchor, up)
        except AmbiguousAxis:
            continue
        zs.append(f.z_axis)
        ys.append(f.y_axis)
        means.append(res.mean)
    if not zs:
        raise DegenerateCloud("all crops degenerate or ambiguous")
    z = np.mean(zs, axis=0)
    z = z / np.linalg.norm(z)
    y = np.mean(ys, axis=0)
    y = y - np.dot(y, z) * z
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    return Frame(origin=np.mean(means, axis=0), x_axis=x, y_axis=y, z_axis=z)


def quantized_lex_order(coords: np.ndarray, quantum: float) -> np.ndarray:
    """Stable permutation sorting rows by (-y, +z, +x), binned by quantum.

    quantum <= 0 compares raw coordinates. Ties fall back to original
    index order (the underlying sorts are stable).
    """
    coords = np.asarray(coords, dtype=float).reshape(-1, 3)
    if quantum > 0.0:
        keys = np.round(coords / quantum)
    else:
        keys = coords
    return np.lexsort((keys[:, 0], keys[:, 2], -keys[:, 1]))


def order_nodes(nodes, frame: Frame, quantum: float = 0.0) -> OrderedNodes:
    """Sort node centroids along (-y, +z, +x) of the given frame."""
    coords = frame.to_frame(nodes.centroids)
    perm = quantized_lex_order(coords, quantum)
    return OrderedNodes(order=[int(i) for i in perm], frame=frame, nodes=nodes)
