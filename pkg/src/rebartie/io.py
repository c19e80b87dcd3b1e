"""File formats: ASCII PLY and CSV clouds, JSON poses and ground truth."""

import json

import numpy as np

from .geometry import Pose, pose_from_dict, pose_to_dict
from .scenes import GroundTruth, PointCloud

__all__ = [
    "write_ply",
    "read_ply",
    "write_csv",
    "read_csv",
    "write_cloud",
    "read_cloud",
    "write_labels_csv",
    "save_truth",
    "load_truth",
    "save_pose",
    "load_pose",
]


def write_ply(path, cloud: PointCloud):
    pts = cloud.points
    with open(path, "w") as f:
        f.write("ply\n")
        f.write("format ascii 1.0\n")
        f.write(f"element vertex {pts.shape[0]}\n")
        f.write("property float x\n")
        f.write("property float y\n")
        f.write("property float z\n")
        if cloud.colors is not None:
            f.write("property uchar red\n")
            f.write("property uchar green\n")
            f.write("property uchar blue\n")
        f.write("end_header\n")
        if cloud.colors is not None:
            for p, c in zip(pts, cloud.colors):
                f.write(f"{p[0]:.8f} {p[1]:.8f} {p[2]:.8f} {c[0]} {c[1]} {c[2]}\n")
        else:
            for p in pts:
                f.write(f"{p[0]:.8f} {p[1]:.8f} {p[2]:.8f}\n")


def read_ply(path) -> PointCloud:
    """ASCII PLY reader for vertex elements with x/y/z and optional rgb."""
    with open(path) as f:
        line = f.readline().strip()
        if line != "ply":
            raise ValueError(f"{path}: not a PLY file")
        n_vertex = None
        props = []
        in_vertex = False
        while True:
            line = f.readline()
            if not line:
                raise ValueError(f"{path}: unterminated header")
            line = line.strip()
            if line.startswith("format"):
                if "ascii" not in line:
                    raise ValueError(f"{path}: only ascii PLY is supported")
            elif line.startswith("element"):
                parts = line.split()
                in_vertex = parts[1] == "vertex"
                if in_vertex:
                    n_vertex = int(parts[2])
            elif line.startswith("property") and in_vertex:
                props.append(line.split()[-1])
            elif line == "end_header":
                break
        for need in ("x", "y", "z"):
            if need not in props:
                raise ValueError(f"{path}: vertex element lacks property {need}")
        cols = {name: i for i, name in enumerate(props)}
        if n_vertex:
            data = np.loadtxt(f, max_rows=n_vertex, ndmin=2)
        else:
            data = np.empty((0, len(props)))
        if data.shape[0] != n_vertex:
            raise ValueError(f"{path}: expected {n_vertex} vertices, "
                             f"got {data.shape[0]}")
    pts = data[:, [cols["x"], cols["y"], cols["z"]]] if n_vertex else np.empty((0, 3))
    colors = None
    if all(c in cols for c in ("red", "green", "blue")) and n_vertex:
        colors = data[:, [cols["red"], cols["green"], cols["blue"]]].astype(np.uint8)
    return PointCloud(pts, colors)


def write_csv(path, cloud: PointCloud):
    with open(path, "w") as f:
        if cloud.colors is not None:
            f.write("x,y,z,r,g,b\n")
            for p, c in zip(cloud.points, cloud.colors):
                f.write(f"{p[0]:.8f},{p[1]:.8f},{p[2]:.8f},{c[0]},{c[1]},{c[2]}\n")
        else:
            f.write("x,y,z\n")
            for p in cloud.points:
                f.write(f"{p[0]:.8f},{p[1]:.8f},{p[2]:.8f}\n")


def read_csv(path) -> PointCloud:
    with open(path) as f:
        first = f.readline()
        skip = 1 if any(c.isalpha() for c in first) else 0
    data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
    if data.size == 0:
        return PointCloud(np.empty((0, 3)))
    if data.shape[1] < 3:
        raise ValueError(f"{path}: need at least 3 columns")
    colors = data[:, 3:6].astype(np.uint8) if data.shape[1] >= 6 else None
    return PointCloud(data[:, :3], colors)


def write_cloud(path, cloud: PointCloud, fmt: str = None):
    fmt = fmt or ("csv" if str(path).endswith(".csv") else "ply")
    if fmt == "ply":
        write_ply(path, cloud)
    elif fmt == "csv":
        write_csv(path, cloud)
    else:
        raise ValueError(f"unknown cloud format {fmt!r}")


def read_cloud(path) -> PointCloud:
    if str(path).endswith(".csv"):
        return read_csv(path)
    return read_ply(path)


def write_labels_csv(path, cloud: PointCloud, labels):
    """Point CSV with a trailing cluster-label column (-1 = noise)."""
    labels = np.asarray(labels)
    with open(path, "w") as f:
        if cloud.colors is not None:
            f.write("x,y,z,r,g,b,cluster\n")
            for p, c, l in zip(cloud.points, cloud.colors, labels):
                f.write(f"{p[0]:.8f},{p[1]:.8f},{p[2]:.8f},"
                        f"{c[0]},{c[1]},{c[2]},{int(l)}\n")
        else:
            f.write("x,y,z,cluster\n")
            for p, l in zip(cloud.points, labels):
                f.write(f"{p[0]:.8f},{p[1]:.8f},{p[2]:.8f},{int(l)}\n")


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "node_positions": [[float(v) for v in p] for p in truth.node_positions],
        "tying_poses": [pose_to_dict(g) for g in truth.tying_poses],
        "canonical_order": [int(i) for i in truth.canonical_order],
        "up_axis": [float(v) for v in truth.up_axis],
        "meta": truth.meta,
    }


def truth_from_dict(d: dict) -> GroundTruth:
    return GroundTruth(
        node_positions=np.asarray(d["node_positions"], dtype=float).reshape(-1, 3),
        tying_poses=[pose_from_dict(p) for p in d["tying_poses"]],
        canonical_order=[int(i) for i in d["canonical_order"]],
        up_axis=np.asarray(d["up_axis"], dtype=float),
        meta=d.get("meta", {}),
    )


def save_truth(path, truth: GroundTruth):
    with open(path, "w") as f:
        json.dump(truth_to_dict(truth), f, indent=1)


def load_truth(path) -> GroundTruth:
    with open(path) as f:
        return truth_from_dict(json.load(f))


def save_pose(path, pose: Pose):
    with open(path, "w") as f:
        json.dump(pose_to_dict(pose), f)


def load_pose(path) -> Pose:
    with open(path) as f:
        return pose_from_dict(json.load(f))
