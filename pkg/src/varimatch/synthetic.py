"""Generators for the synthetic curve-tree protocol.

A smooth tree of labeled 3D polyline branches is built, a trimmed copy keeps
a subset of the branches bit-for-bit, and a known diffeomorphic deformation
(Gaussian momenta pushed through the shooting engine) produces the shape the
registration should undo. Everything is deterministic per seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import DiscreteShape, Polylines, bbox_diagonal
from .kernels import ConfigError, DeformationKernelConfig
from .deformation import ShootingConfig, shoot, velocity_at


@dataclass(frozen=True)
class TreeSpec:
    branches: int = 6
    points_per_branch: int = 25
    depth: int = 3
    length: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.branches < 1 or self.points_per_branch < 2 or self.depth < 1:
            raise ConfigError("tree spec counts must be positive (>= 2 points per branch)")
        if not (self.length > 0):
            raise ConfigError("branch length must be positive")


@dataclass(frozen=True)
class GroundTruth:
    """Deformation bookkeeping: the momenta applied and both vertex sets."""

    momenta: np.ndarray
    original_vertices: np.ndarray
    deformed_vertices: np.ndarray


def _unit(v):
    return v / np.linalg.norm(v)


def _perp_basis(direction):
    """Two unit vectors orthogonal to ``direction``."""
    helper = np.array([1.0, 0.0, 0.0])
    if abs(direction @ helper) > 0.9:
        helper = np.array([0.0, 1.0, 0.0])
    e1 = _unit(np.cross(direction, helper))
    return e1, np.cross(direction, e1)


def _branch_points(start, direction, length, n_points, rng):
    """Smooth branch: cubic spline through gently offset control points."""
    e1, e2 = _perp_basis(direction)
    t_ctrl = np.array([0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0])
    ctrl = start[None, :] + t_ctrl[:, None] * (length * direction)[None, :]
    bend = 0.12 * length
    for i in (1, 2):
        a, b = rng.uniform(-bend, bend, size=2)
        ctrl[i] += a * e1 + b * e2
    spline = CubicSpline(t_ctrl, ctrl, axis=0)
    return spline(np.linspace(0.0, 1.0, n_points))


def make_tree(spec: TreeSpec) -> Polylines:
    """Connected tree of labeled polyline branches, breadth first from a trunk."""
    rng = np.random.default_rng(spec.seed)
    trunk_dir = np.array([0.0, 0.0, 1.0])
    # (start, direction, length, depth) of branches still to grow
    queue = [(np.zeros(3), trunk_dir, spec.length, 0)]
    vertices: list[np.ndarray] = []
    edges: list[tuple[int, int]] = []
    labels: list[int] = []
    grown = 0
    while queue and grown < spec.branches:
        start, direction, length, depth = queue.pop(0)
        pts = _branch_points(start, direction, length, spec.points_per_branch, rng)
        base = sum(len(v) for v in vertices)
        vertices.append(pts)
        for i in range(len(pts) - 1):
            edges.append((base + i, base + i + 1))
            labels.append(grown)
        tip = pts[-1]
        tip_dir = _unit(pts[-1] - pts[-2])
        grown += 1
        if depth + 1 < spec.depth:
            e1, e2 = _perp_basis(tip_dir)
            azimuth = rng.uniform(0.0, 2.0 * np.pi)
            for side in (0.0, np.pi):
                angle = rng.uniform(0.6, 0.9)  # ~35-52 degrees off the parent
                radial = np.cos(azimuth + side) * e1 + np.sin(azimuth + side) * e2
                child_dir = _unit(np.cos(angle) * tip_dir + np.sin(angle) * radial)
                queue.append((tip, child_dir, 0.65 * length, depth + 1))
    return Polylines(np.vstack(vertices), np.array(edges), np.array(labels))


def trim_tree(tree: Polylines, keep) -> Polylines:
    """Keep only the branches whose label is in ``keep``; vertex data unchanged."""
    if tree.labels is None:
        raise ValueError("tree has no branch labels to trim on")
    keep = set(int(k) for k in keep)
    if not keep:
        raise ValueError("keep set is empty")
    missing = keep - set(int(l) for l in tree.labels)
    if missing:
        raise ValueError(f"labels not present in tree: {sorted(missing)}")
    mask = np.array([int(l) in keep for l in tree.labels])
    kept_edges = tree.edges[mask]
    used = np.unique(kept_edges)
    remap = np.full(tree.vertices.shape[0], -1, dtype=int)
    remap[used] = np.arange(used.size)
    return Polylines(tree.vertices[used], remap[kept_edges], tree.labels[mask])


def random_diffeo(
    shape: Polylines,
    magnitude: float = 0.05,
    seed: int = 0,
    kernel: DeformationKernelConfig | None = None,
    time_steps: int = 10,
):
    """Deform a curve set by shooting random momenta drawn at its vertices.

    Momenta are Gaussian, rescaled so the initial mean speed is ``magnitude``
    times the bounding-box diagonal; the resulting mean displacement then
    lands near that fraction. Returns the deformed shape and the ground
    truth.
    """
    if not (magnitude > 0):
        raise ConfigError("magnitude must be positive")
    vertices = shape.vertices
    diag = bbox_diagonal(vertices)
    if kernel is None:
        kernel = DeformationKernelConfig(sigma0=0.5 * diag)
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal(vertices.shape)
    speeds = np.linalg.norm(velocity_at(vertices, vertices, raw, kernel), axis=1)
    momenta = raw * (magnitude * diag / max(speeds.mean(), 1e-30))
    trajectory = shoot(vertices, momenta, ShootingConfig(kernel, time_steps))
    deformed_vertices = trajectory.positions[-1]
    if not np.all(np.isfinite(deformed_vertices)):
        raise ValueError("deformation produced non-finite vertices; lower the magnitude")
    deformed = shape.with_vertices(deformed_vertices)
    truth = GroundTruth(momenta, vertices.copy(), deformed_vertices.copy())
    return deformed, truth


def tree_shape(spec: TreeSpec) -> DiscreteShape:
    return DiscreteShape(make_tree(spec))
