"""Triangle meshes: structured generation, validation and a plain-text format."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .errors import UsageError


@dataclass
class TriangleMesh:
    """Conforming triangulation with tagged boundary edges.

    Triangles are stored counterclockwise; boundary edges are stored with the
    domain on their left, so ``(dy, -dx)`` is the outward normal.
    """

    vertices: np.ndarray  # (nv, 2)
    triangles: np.ndarray  # (nt, 3)
    boundary_edges: np.ndarray  # (nbe, 2)
    boundary_tags: np.ndarray  # (nbe,) str
    element_region: np.ndarray  # (nt,) int

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        self.boundary_edges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        self.boundary_tags = np.asarray(self.boundary_tags, dtype=object)
        self.element_region = np.asarray(self.element_region, dtype=np.int64)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def incidence(self):
        """Sparse ``(nt, nv)`` element-vertex incidence matrix."""
        nt = self.n_triangles
        rows = np.repeat(np.arange(nt), 3)
        return sp.csr_matrix(
            (np.ones(3 * nt, dtype=np.int8), (rows, self.triangles.ravel())),
            shape=(nt, self.n_vertices),
        )

    def validate(self):
        areas = self.signed_areas()
        if np.any(areas <= 0):
            raise UsageError(f"{np.sum(areas <= 0)} triangles are degenerate or clockwise")
        if len(self.element_region) != self.n_triangles:
            raise UsageError("element_region length does not match triangle count")
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise UsageError("boundary_tags length does not match boundary edge count")
        edges, counts = edge_counts(self.triangles)
        boundary = {tuple(e) for e in edges[counts == 1]}
        for a, b in self.boundary_edges:
            if (min(a, b), max(a, b)) not in boundary:
                raise UsageError(f"boundary edge ({a}, {b}) is not on exactly one triangle")
        return self

    def tags(self):
        return sorted(set(self.boundary_tags.tolist()))

    def edges_with_tag(self, tag):
        return self.boundary_edges[self.boundary_tags == tag]


def edge_counts(triangles):
    """Sorted unique edges of ``triangles`` and how many triangles own each."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    e = np.sort(e, axis=1)
    return np.unique(e, axis=0, return_counts=True)


def oriented_boundary_edges(triangles):
    """Edges owned by a single triangle, oriented with that triangle on the left."""
    e = np.concatenate([triangles[:, [0, 1]], triangles[:, [1, 2]], triangles[:, [2, 0]]])
    key = np.sort(e, axis=1)
    _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    return e[counts[inv] == 1]


def build_rect_mesh(nx, ny, x_range=(0.0, 1.0), y_range=(0.0, 1.0)):
    """Structured mesh of ``nx * ny`` cells, each cut into two triangles.

    The cut diagonal alternates with the parity of the cell index, which keeps the
    mesh symmetric under reflections about the box midlines when ``nx``, ``ny``
    are even.  Boundary edges are tagged ``left``, ``right``, ``bottom``, ``top``.
    """
    if nx < 1 or ny < 1:
        raise UsageError("nx and ny must be at least 1")
    (x0, x1), (y0, y1) = x_range, y_range
    if not (x1 > x0 and y1 > y0):
        raise UsageError("degenerate coordinate range")
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    a, b, c, d = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    flip = (I + J) % 2 == 1
    # even cells cut along a-c, odd cells along b-d
    t1 = np.where(flip[:, None], np.column_stack([a, b, d]), np.column_stack([a, b, c]))
    t2 = np.where(flip[:, None], np.column_stack([b, c, d]), np.column_stack([a, c, d]))
    triangles = np.empty((2 * len(I), 3), dtype=np.int64)
    triangles[0::2] = t1
    triangles[1::2] = t2

    i = np.arange(nx)
    j = np.arange(ny)
    edges = [
        (np.column_stack([vid(i, 0), vid(i + 1, 0)]), "bottom"),
        (np.column_stack([vid(nx, j), vid(nx, j + 1)]), "right"),
        (np.column_stack([vid(i + 1, ny), vid(i, ny)]), "top"),
        (np.column_stack([vid(0, j + 1), vid(0, j)]), "left"),
    ]
    boundary_edges = np.concatenate([e for e, _ in edges])
    tags = np.concatenate([[t] * len(e) for e, t in edges]).astype(object)
    return TriangleMesh(vertices, triangles, boundary_edges, tags,
                        np.zeros(len(triangles), dtype=np.int64))


def assign_regions_by_radius(mesh, radius, center=(0.0, 0.0), inner=0, outer=1):
    """Set ``element_region`` to ``inner`` for triangles whose centroid is inside the circle."""
    r = np.linalg.norm(mesh.centroids() - np.asarray(center), axis=1)
    mesh.element_region = np.where(r < radius, inner, outer).astype(np.int64)
    return mesh


def write_mesh(mesh, path):
    """Plain-text mesh: ``nv nt nbe`` header, then vertex, triangle, boundary lines."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}\n")
        for x, y in mesh.vertices:
            fh.write(f"{x:.17g} {y:.17g}\n")
        for (i, j, k), r in zip(mesh.triangles, mesh.element_region):
            fh.write(f"{i} {j} {k} {r}\n")
        for (i, j), tag in zip(mesh.boundary_edges, mesh.boundary_tags):
            fh.write(f"{i} {j} {tag}\n")
    return path


def read_mesh(path):
    lines = Path(path).read_text().split("\n")
    nv, nt, nbe = (int(v) for v in lines[0].split())
    body = lines[1:]
    verts = np.array([[float(v) for v in line.split()] for line in body[:nv]]).reshape(-1, 2)
    tri = np.array([[int(v) for v in line.split()] for line in body[nv:nv + nt]]).reshape(-1, 4)
    bnd = [line.split() for line in body[nv + nt:nv + nt + nbe]]
    edges = np.array([[int(a), int(b)] for a, b, _ in bnd], dtype=np.int64).reshape(-1, 2)
    tags = np.array([t for _, _, t in bnd], dtype=object)
    return TriangleMesh(verts, tri[:, :3], edges, tags, tri[:, 3])
