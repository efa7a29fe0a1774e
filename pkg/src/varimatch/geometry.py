"""Shape containers and their discretization into oriented particles.

Curve sets (:class:`Polylines`) and triangle meshes (:class:`TriMesh`) are
turned into weighted oriented atoms: one atom per edge (midpoint, unit
tangent, length) or per face (centroid, unit normal, area). All shapes live
in R^3. Containers are immutable after construction; moving vertices means
building a new shape, which recomputes the atoms.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

# Degeneracy tolerances are relative to the bounding-box diagonal so the same
# config works across shape scales.
EDGE_LENGTH_REL_TOL = 1e-12
FACE_AREA_REL_TOL = 1e-12


class ShapeError(ValueError):
    """Invalid shape data (bad indices, degenerate elements, empty input)."""


def _as_vertices(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float)
    if v.ndim != 2 or v.shape[1] != 3:
        raise ShapeError(f"vertices must be (n, 3), got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ShapeError("vertices contain non-finite values")
    return v


def bbox_diagonal(vertices: np.ndarray) -> float:
    """Length of the axis-aligned bounding-box diagonal of a vertex set."""
    v = np.asarray(vertices, dtype=float)
    if v.size == 0:
        return 0.0
    return float(np.linalg.norm(v.max(axis=0) - v.min(axis=0)))


class Atom(NamedTuple):
    """One discrete varifold particle."""

    position: np.ndarray
    direction: np.ndarray
    weight: float


@dataclass(frozen=True)
class Atoms:
    """Struct-of-arrays collection of atoms.

    positions (n, 3), directions (n, 3) unit rows, weights (n,) positive.
    """

    positions: np.ndarray
    directions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.positions, dtype=float)
        d = np.asarray(self.directions, dtype=float)
        w = np.asarray(self.weights, dtype=float)
        if p.shape != d.shape or p.ndim != 2 or p.shape[1] != 3 or w.shape != (p.shape[0],):
            raise ShapeError("inconsistent atom array shapes")
        norms = np.linalg.norm(d, axis=1)
        if p.shape[0] and np.max(np.abs(norms - 1.0)) > 1e-9:
            raise ShapeError("atom directions must be unit vectors")
        if np.any(w <= 0):
            raise ShapeError("atom weights must be positive")
        object.__setattr__(self, "positions", p)
        object.__setattr__(self, "directions", d)
        object.__setattr__(self, "weights", w)

    def __len__(self) -> int:
        return self.positions.shape[0]

    def __getitem__(self, i: int) -> Atom:
        return Atom(self.positions[i], self.directions[i], float(self.weights[i]))

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def subset(self, indices) -> "Atoms":
        idx = np.asarray(indices, dtype=int)
        return Atoms(self.positions[idx], self.directions[idx], self.weights[idx])


@dataclass(frozen=True)
class Polylines:
    """Union of 3D polylines: vertices plus vertex-index edge pairs.

    ``labels`` optionally tags each edge with the curve it belongs to, which
    is what tree trimming operates on. Orientation follows edge vertex order.
    """

    vertices: np.ndarray
    edges: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        e = np.asarray(self.edges, dtype=int)
        if e.size == 0:
            e = e.reshape(0, 2)
        if e.ndim != 2 or e.shape[1] != 2:
            raise ShapeError(f"edges must be (n, 2), got shape {e.shape}")
        if v.shape[0] > 0 and e.shape[0] == 0:
            raise ShapeError("non-empty curve shape must have at least one edge")
        if e.size and (e.min() < 0 or e.max() >= v.shape[0]):
            raise ShapeError("edge index out of range")
        tol = EDGE_LENGTH_REL_TOL * max(bbox_diagonal(v), 1.0e-300)
        lengths = np.linalg.norm(v[e[:, 1]] - v[e[:, 0]], axis=1) if e.size else np.zeros(0)
        bad = np.nonzero(lengths <= tol)[0]
        if bad.size:
            raise ShapeError(f"degenerate edge {int(bad[0])}: endpoints coincide")
        lab = self.labels
        if lab is not None:
            lab = np.asarray(lab)
            if lab.shape != (e.shape[0],):
                raise ShapeError("labels must have one entry per edge")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "edges", e)
        object.__setattr__(self, "labels", lab)

    def with_vertices(self, vertices) -> "Polylines":
        return Polylines(vertices, self.edges, self.labels)


@dataclass(frozen=True)
class TriMesh:
    """Triangle mesh: vertices plus vertex-index face triples.

    Face normals follow the vertex order (right-hand rule). Consistent
    orientation across faces is the caller's responsibility.
    """

    vertices: np.ndarray
    faces: np.ndarray

    def __post_init__(self):
        v = _as_vertices(self.vertices)
        f = np.asarray(self.faces, dtype=int)
        if f.size == 0:
            f = f.reshape(0, 3)
        if f.ndim != 2 or f.shape[1] != 3:
            raise ShapeError(f"faces must be (n, 3), got shape {f.shape}")
        if v.shape[0] > 0 and f.shape[0] == 0:
            raise ShapeError("non-empty mesh must have at least one face")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise ShapeError("face index out of range")
        cross = np.cross(v[f[:, 1]] - v[f[:, 0]], v[f[:, 2]] - v[f[:, 0]]) if f.size else np.zeros((0, 3))
        areas = 0.5 * np.linalg.norm(cross, axis=1)
        tol = FACE_AREA_REL_TOL * max(bbox_diagonal(v), 1.0e-300) ** 2
        bad = np.nonzero(areas <= tol)[0]
        if bad.size:
            raise ShapeError(f"degenerate face {int(bad[0])}: area below tolerance")
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "faces", f)

    def with_vertices(self, vertices) -> "TriMesh":
        return TriMesh(vertices, self.faces)


Geometry = Polylines | TriMesh


def discretize_curves(shape: Polylines) -> Atoms:
    """One atom per edge: midpoint, normalized edge vector, edge length."""
    v, e = shape.vertices, shape.edges
    a, b = v[e[:, 0]], v[e[:, 1]]
    vec = b - a
    lengths = np.linalg.norm(vec, axis=1)
    return Atoms((a + b) / 2.0, vec / lengths[:, None], lengths)


def discretize_mesh(shape: TriMesh) -> Atoms:
    """One atom per face: centroid, unit normal from vertex order, area."""
    v, f = shape.vertices, shape.faces
    a, b, c = v[f[:, 0]], v[f[:, 1]], v[f[:, 2]]
    cross = np.cross(b - a, c - a)
    norms = np.linalg.norm(cross, axis=1)
    return Atoms((a + b + c) / 3.0, cross / norms[:, None], norms / 2.0)


def discretize(geometry: Geometry) -> Atoms:
    if isinstance(geometry, Polylines):
        return discretize_curves(geometry)
    if isinstance(geometry, TriMesh):
        return discretize_mesh(geometry)
    raise TypeError(f"cannot discretize {type(geometry).__name__}")


@dataclass(frozen=True)
class DiscreteShape:
    """A geometry together with its cached atom discretization."""

    geometry: Geometry
    atoms: Atoms = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "atoms", discretize(self.geometry))

    @property
    def vertices(self) -> np.ndarray:
        return self.geometry.vertices

    @property
    def is_mesh(self) -> bool:
        return isinstance(self.geometry, TriMesh)

    def with_vertices(self, vertices) -> "DiscreteShape":
        return DiscreteShape(self.geometry.with_vertices(vertices))

    def translated(self, offset) -> "DiscreteShape":
        return self.with_vertices(self.vertices + np.asarray(offset, dtype=float))


def barycenter(shape: DiscreteShape) -> np.ndarray:
    """Mass-weighted mean of atom positions."""
    atoms = shape.atoms
    if len(atoms) == 0:
        raise ShapeError("barycenter of an empty shape")
    return atoms.weights @ atoms.positions / atoms.total_mass


def align_barycenters(source: DiscreteShape, target: DiscreteShape) -> DiscreteShape:
    """Translate the source so its barycenter matches the target's."""
    return source.translated(barycenter(target) - barycenter(source))


def apply_rigid(shape: DiscreteShape, rotation, translation) -> DiscreteShape:
    """Map vertices through x -> R x + t. R must be a proper rotation."""
    rot = np.asarray(rotation, dtype=float)
    t = np.asarray(translation, dtype=float)
    if rot.shape != (3, 3):
        raise ShapeError("rotation must be a 3x3 matrix")
    if np.max(np.abs(rot.T @ rot - np.eye(3))) > 1e-9 or abs(np.linalg.det(rot) - 1.0) > 1e-9:
        raise ShapeError("rotation must be orthogonal with determinant +1")
    return shape.with_vertices(shape.vertices @ rot.T + t)


def curve_shape(vertices, edges, labels=None) -> DiscreteShape:
    return DiscreteShape(Polylines(vertices, edges, labels))


def mesh_shape(vertices, faces) -> DiscreteShape:
    return DiscreteShape(TriMesh(vertices, faces))


def polyline_from_points(points: Sequence, label=None) -> Polylines:
    """Single open polyline through consecutive points."""
    pts = np.asarray(points, dtype=float)
    n = pts.shape[0]
    edges = np.column_stack([np.arange(n - 1), np.arange(1, n)])
    labels = None if label is None else np.full(n - 1, label)
    return Polylines(pts, edges, labels)
