"""Intersection-point extraction via the orthogonality feature filter.

Near a rebar crossing the unit vectors from a point to its neighbors
split between two perpendicular bar directions, so randomly paired
vectors produce |dot| values piling up near 0 and near 1. Mid-span
points see a single direction (everything near 1), flat or blobby
clutter sees a broad spread, and both fail the two count tests. Points
passing the mask are density-clustered; each cluster is one node.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .clustering import DbscanParams, dbscan
from .errors import NoNodesFound
from .scenes import PointCloud

__all__ = [
    "OrthoFilterParams",
    "NodeSet",
    "orthogonal_feature_mask",
    "extract_nodes",
]


@dataclass
class OrthoFilterParams:
    """r_eps: neighborhood radius. r_res / p_res: the near-zero and
    near-one |dot| thresholds. min_neighbors: below this count a point
    fails outright. rng_seed: base seed for the per-point pair shuffle."""

    # Thresholds sit well off the ideal 0/1 because bar width spreads the
    # dot products; these defaults hold up to 5 mm noise while rejecting
    # flat obstacle surfaces.
    r_eps: float = 0.07
    r_res: float = 0.7
    p_res: float = 0.85
    min_neighbors: int = 8
    rng_seed: int = 0

    def __post_init__(self):
        if self.r_eps <= 0.0:
            raise ValueError(f"r_eps must be > 0, got {self.r_eps}")
        if not (0.0 <= self.r_res < self.p_res <= 1.0):
            raise ValueError(
                f"need 0 <= r_res < p_res <= 1, got {self.r_res}, {self.p_res}")
        if self.min_neighbors < 4:
            raise ValueError(f"min_neighbors must be >= 4, got {self.min_neighbors}")


@dataclass
class NodeSet:
    """centroids: (K, 3) intersection estimates, one per node cluster.
    crops: the original-cloud neighborhoods around each centroid.
    sizes: surviving (mask-passing) point count per node."""

    centroids: np.ndarray
    crops: list
    sizes: list

    def __len__(self) -> int:
        return self.centroids.shape[0]


def orthogonal_feature_mask(cloud: PointCloud, params: OrthoFilterParams,
                            backend=None) -> np.ndarray:
    """Boolean mask of points whose neighborhoods look like crossings.

    Per point: neighbors within r_eps (self and coincident points are
    skipped), unit vectors to them, a shuffle seeded by
    rng_seed XOR point_index, a half/half split into pairs, and
    D = |a_i . b_i|. The point passes iff at least half of D is below
    r_res and at least a third is above p_res.
    """
    points = cloud.points
    if points.shape[0] == 0:
        return np.zeros(0, dtype=bool)
    indptr, indices = _kernels.neighbor_csr(points, params.r_eps,
                                            backend=backend)
    return _kernels.ortho_mask(points, indptr, indices, params.r_res,
                               params.p_res, params.min_neighbors,
                               params.rng_seed, backend=backend)


def extract_nodes(cloud: PointCloud, params: OrthoFilterParams,
                  split_params: DbscanParams = None,
                  crop_radius: float = 0.09,
                  backend=None) -> NodeSet:
    """Mask, cluster the survivors, crop the original cloud per node.

    Node centroids are the means of the surviving clusters (noise
    discarded); each crop is every original point within crop_radius of
    its centroid. Nodes come out in cluster-id order, which is itself
    deterministic. Raises NoNodesFound when nothing survives the mask
    or all survivors are noise.
    """
    if split_params is None:
        split_params = DbscanParams(eps=0.03, min_pts=8)
    mask = orthogonal_feature_mask(cloud, params, backend=backend)
    if not mask.any():
        raise NoNodesFound("orthogonality mask rejected every point")
    survivors = cloud.points[mask]
    labeling = dbscan(PointCloud(survivors), split_params, backend=backend)
    if labeling.n_clusters == 0:
        raise NoNodesFound("all mask survivors are density noise")
    centroids = np.empty((labeling.n_clusters, 3))
    sizes = []
    for k in range(labeling.n_clusters):
        member = survivors[labeling.labels == k]
        centroids[k] = member.mean(axis=0)
        sizes.append(int(member.shape[0]))
    tree = cKDTree(cloud.points)
    crops = []
    for k in range(labeling.n_clusters):
        idx = np.asarray(sorted(tree.query_ball_point(centroids[k], crop_radius)),
                         dtype=np.int64)
        colors = cloud.colors[idx] if cloud.colors is not None else None
        crops.append(PointCloud(cloud.points[idx], colors))
    return NodeSet(centroids=centroids, crops=crops, sizes=sizes)
