"""P1 vector finite elements for the time-harmonic Navier equations.

The weak form is ``a(u, v) - omega^2 (rho u, v) - i <sigma_n u, v>_abc = (f, v) + <g, v>``
with ``a`` the linear-elastic stiffness and ``sigma_n`` the impedance
``omega rho (cp n n^T + cs t t^T)`` on absorbing edges.  Degrees of freedom are
interleaved: vertex ``v`` owns ``2 v`` (x component) and ``2 v + 1`` (y component).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .errors import UsageError
from .symbols import ElasticMedium

BC_KINDS = ("dirichlet", "absorbing", "taylor0", "natural")

# 3-point Gauss rule on [0, 1]
_GAUSS_T = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_GAUSS_W = np.array([5 / 18, 8 / 18, 5 / 18])


class VectorP1Space:
    """Interleaved two-component P1 dof numbering."""

    def __init__(self, n_vertices):
        self.n_vertices = int(n_vertices)
        self.n_dofs = 2 * self.n_vertices

    @staticmethod
    def dof(vertex, component):
        return 2 * np.asarray(vertex) + np.asarray(component)

    def dofs_of_vertices(self, vertices):
        v = np.unique(np.asarray(vertices, dtype=np.int64))
        return np.column_stack([2 * v, 2 * v + 1]).ravel()

    def element_dofs(self, triangles):
        t = np.asarray(triangles)
        return np.stack([2 * t, 2 * t + 1], axis=-1).reshape(len(t), -1)


def impedance(normal, medium, omega):
    """``omega rho (cp n n^T + cs t t^T)`` for unit normals of shape ``(..., 2)``."""
    n = np.asarray(normal, dtype=float)
    t = np.stack([-n[..., 1], n[..., 0]], axis=-1)
    nn = n[..., :, None] * n[..., None, :]
    tt = t[..., :, None] * t[..., None, :]
    return omega * medium.rho * (medium.cp * nn + medium.cs * tt)


def stress(grad, medium):
    """Cauchy stress from displacement gradients ``grad[..., i, j] = d_j u_i``."""
    eps = 0.5 * (grad + np.swapaxes(grad, -1, -2))
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    eye = np.eye(2)
    return medium.lam * tr[..., None, None] * eye + 2 * medium.mu * eps


class PlaneWave:
    """Superposed P and S plane waves ``d e^{i kp x.d} + d_perp e^{i ks x.d}``.

    ``direction`` need not be unit length; :meth:`body_force` returns the load
    that makes the field an exact solution in that case (it vanishes for unit
    directions).
    """

    def __init__(self, omega, medium, direction=(np.cos(np.pi / 3), np.cos(np.pi / 3))):
        d = np.asarray(direction, dtype=float)
        if not np.linalg.norm(d) > 0:
            raise UsageError("plane-wave direction must be nonzero")
        self.omega, self.medium, self.d = omega, medium, d
        self.d_perp = np.array([-d[1], d[0]])
        self.kp = omega / medium.cp
        self.ks = omega / medium.cs

    def _phases(self, points):
        xd = np.asarray(points, dtype=float) @ self.d
        return np.exp(1j * self.kp * xd), np.exp(1j * self.ks * xd)

    def value(self, points):
        ep, es = self._phases(points)
        return ep[:, None] * self.d + es[:, None] * self.d_perp

    def gradient(self, points):
        ep, es = self._phases(points)
        gp = 1j * self.kp * np.outer(self.d, self.d)
        gs = 1j * self.ks * np.outer(self.d_perp, self.d)
        return ep[:, None, None] * gp + es[:, None, None] * gs

    def traction(self, points, normals, medium=None):
        s = stress(self.gradient(points), medium or self.medium)
        return np.einsum("nij,nj->ni", s, normals)

    def body_force(self, points):
        # f = -(div sigma + omega^2 rho u) for each plane-wave component
        m = self.medium
        ep, es = self._phases(points)
        dd = self.d @ self.d
        out = np.zeros((len(ep), 2), dtype=complex)
        for a, kappa, e in ((self.d, self.kp, ep), (self.d_perp, self.ks, es)):
            vec = kappa**2 * (m.mu * dd * a + (m.lam + m.mu) * (a @ self.d) * self.d)
            out += e[:, None] * (vec - m.rho * self.omega**2 * a)
        return out


def plane_wave(point, omega, medium, direction=(np.cos(np.pi / 3), np.cos(np.pi / 3))):
    """Value of :class:`PlaneWave` at a single point."""
    return PlaneWave(omega, medium, direction).value(np.atleast_2d(point))[0]


@dataclass
class BoundaryCondition:
    """Condition on one boundary tag.

    ``field`` optionally supplies data: Dirichlet values ``u``, or traction data
    ``g = T u - i sigma_n u`` (absorbing/taylor0) and ``g = T u`` (natural).
    """

    kind: str
    field: Optional[PlaneWave] = None

    def __post_init__(self):
        if self.kind not in BC_KINDS:
            raise UsageError(f"unknown boundary condition kind {self.kind!r}")


@dataclass
class AssembledSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    exact_solution: Optional[np.ndarray] = None
    dirichlet_dofs: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    mass: Optional[sp.csr_matrix] = None

    @property
    def n_dofs(self):
        return self.matrix.shape[0]

    def l2_norm(self, v):
        if self.mass is None:
            return float(np.linalg.norm(v))
        return float(np.sqrt(abs(np.vdot(v, self.mass @ v))))


def _p1_element_data(points):
    d1 = points[:, 1] - points[:, 0]
    d2 = points[:, 2] - points[:, 0]
    area = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    x, y = points[..., 0], points[..., 1]
    bx = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    by = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    return area, bx / (2 * area[:, None]), by / (2 * area[:, None])


def element_stiffness_mass(points, lam, mu, rho):
    """Per-element 6x6 stiffness and mass matrices for arrays of triangles."""
    area, bx, by = _p1_element_data(points)
    nt = len(area)
    B = np.zeros((nt, 3, 6))
    B[:, 0, 0::2] = bx
    B[:, 1, 1::2] = by
    B[:, 2, 0::2] = by
    B[:, 2, 1::2] = bx
    lam = np.broadcast_to(lam, (nt,))
    mu = np.broadcast_to(mu, (nt,))
    C = np.zeros((nt, 3, 3))
    C[:, 0, 0] = C[:, 1, 1] = lam + 2 * mu
    C[:, 0, 1] = C[:, 1, 0] = lam
    C[:, 2, 2] = mu
    K = area[:, None, None] * np.einsum("nki,nkl,nlj->nij", B, C, B)
    scalar = (np.ones((3, 3)) + np.eye(3)) / 12.0
    M = np.zeros((nt, 6, 6))
    M[:, 0::2, 0::2] = scalar
    M[:, 1::2, 1::2] = scalar
    M *= (np.broadcast_to(rho, (nt,)) * area)[:, None, None]
    return K, M


def _edge_geometry(vertices, edges):
    p = vertices[edges]
    t = p[:, 1] - p[:, 0]
    length = np.linalg.norm(t, axis=1)
    normal = np.column_stack([t[:, 1], -t[:, 0]]) / length[:, None]
    return p, length, normal


def _edge_mass(length):
    scalar = np.array([[2.0, 1.0], [1.0, 2.0]]) / 6.0
    return length[:, None, None] * scalar


def impedance_edge_matrices(vertices, edges, media, omega):
    """``-i`` edge mass times impedance, one 4x4 block per oriented edge."""
    _, length, normal = _edge_geometry(vertices, edges)
    out = np.empty((len(edges), 4, 4), dtype=complex)
    em = _edge_mass(length)
    for i, m in enumerate(media):
        sig = impedance(normal[i], m, omega)
        out[i] = -1j * np.kron(em[i], sig)
    return out


def _coo(rows_cols_vals, n):
    r, c, v = rows_cols_vals
    A = sp.coo_matrix((v, (r, c)), shape=(n, n)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter(dofs, blocks):
    k = dofs.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    return rows, cols, blocks.reshape(-1)


class NavierDiscretization:
    """Element-level data of one Navier problem, reusable for global and local matrices.

    Parameters
    ----------
    mesh : TriangleMesh
    media : ElasticMedium or dict
        Single medium, or mapping from ``element_region`` id to medium.
    omega : float
        Angular frequency.
    bcs : dict
        Boundary tag to :class:`BoundaryCondition`; every tag needs one.
    body_force : callable, optional
        ``f(points) -> (n, 2)`` complex volume load.
    exact : PlaneWave, optional
        Field interpolated into ``AssembledSystem.exact_solution``.
    """

    def __init__(self, mesh, media, omega, bcs, body_force=None, exact=None):
        self.mesh = mesh
        self.space = VectorP1Space(mesh.n_vertices)
        self.omega = float(omega)
        if isinstance(media, ElasticMedium):
            media = {int(r): media for r in np.unique(mesh.element_region)}
        self.media = dict(media)
        unknown = set(np.unique(mesh.element_region).tolist()) - set(self.media)
        if unknown:
            raise UsageError(f"no medium given for region ids {sorted(unknown)}")
        missing = set(mesh.tags()) - set(bcs)
        if missing:
            raise UsageError(f"boundary tags without a condition: {sorted(missing)}")
        self.bcs = dict(bcs)
        self.body_force = body_force
        self.exact = exact

        regions = mesh.element_region
        lam = np.array([self.media[r].lam for r in regions])
        mu = np.array([self.media[r].mu for r in regions])
        rho = np.array([self.media[r].rho for r in regions])
        pts = mesh.vertices[mesh.triangles]
        self.stiffness, self.mass_blocks = element_stiffness_mass(pts, lam, mu, rho)
        self.element_blocks = self.stiffness - self.omega**2 * self.mass_blocks
        self.element_dofs = self.space.element_dofs(mesh.triangles)

        self._edge_owner = self._owners(mesh.boundary_edges)
        self.boundary_kind = np.array([self.bcs[t].kind for t in mesh.boundary_tags], dtype=object)
        absorb = np.isin(self.boundary_kind, ("absorbing", "taylor0"))
        self.absorbing_edges = np.nonzero(absorb)[0]
        self.absorbing_blocks = impedance_edge_matrices(
            mesh.vertices,
            mesh.boundary_edges[absorb],
            [self.media[regions[o]] for o in self._edge_owner[absorb]],
            self.omega,
        )
        self.dirichlet_dofs, self.dirichlet_values = self._dirichlet_data()

    def _owners(self, edges):
        tri = self.mesh.triangles
        loc = {}
        for t, (a, b, c) in enumerate(tri):
            loc[(a, b)] = t
            loc[(b, c)] = t
            loc[(c, a)] = t
        try:
            return np.array([loc[(a, b)] for a, b in edges], dtype=np.int64)
        except KeyError as exc:
            raise UsageError(f"boundary edge {exc} is not a counterclockwise triangle edge") from None

    def medium_of(self, element):
        return self.media[int(self.mesh.element_region[element])]

    def _dirichlet_data(self):
        mesh = self.mesh
        is_d = self.boundary_kind == "dirichlet"
        if not is_d.any():
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=complex)
        values = {}
        for tag in set(mesh.boundary_tags[is_d].tolist()):
            verts = np.unique(mesh.edges_with_tag(tag))
            bc = self.bcs[tag]
            vals = bc.field.value(mesh.vertices[verts]) if bc.field is not None else np.zeros((len(verts), 2))
            for v, val in zip(verts, vals):
                values.setdefault(int(v), val)
        verts = np.array(sorted(values), dtype=np.int64)
        dofs = self.space.dofs_of_vertices(verts)
        vals = np.array([values[v] for v in verts], dtype=complex).ravel()
        return dofs, vals

    # -- global assembly -----------------------------------------------------

    def _boundary_load(self):
        mesh = self.mesh
        b = np.zeros(self.space.n_dofs, dtype=complex)
        for tag, bc in self.bcs.items():
            if bc.kind == "dirichlet" or bc.field is None:
                continue
            mask = mesh.boundary_tags == tag
            edges = mesh.boundary_edges[mask]
            owners = self._edge_owner[mask]
            p, length, normal = _edge_geometry(mesh.vertices, edges)
            for e in range(len(edges)):
                m = self.medium_of(owners[e])
                q = p[e, 0] + _GAUSS_T[:, None] * (p[e, 1] - p[e, 0])
                nrm = np.repeat(normal[e][None], 3, axis=0)
                g = bc.field.traction(q, nrm, m)
                if bc.kind != "natural":
                    g = g - 1j * bc.field.value(q) @ impedance(normal[e], m, self.omega).T
                w = _GAUSS_W * length[e]
                for a, phi in enumerate((1 - _GAUSS_T, _GAUSS_T)):
                    b[2 * edges[e, a]: 2 * edges[e, a] + 2] += (w * phi) @ g
        return b

    def _volume_load(self):
        b = np.zeros(self.space.n_dofs, dtype=complex)
        if self.body_force is None:
            return b
        mesh = self.mesh
        p = mesh.vertices[mesh.triangles]
        area = mesh.signed_areas()
        mids = [(p[:, 0] + p[:, 1]) / 2, (p[:, 1] + p[:, 2]) / 2, (p[:, 2] + p[:, 0]) / 2]
        f01, f12, f20 = (self.body_force(m) for m in mids)
        w = (area / 6.0)[:, None]
        contrib = np.stack([w * (f01 + f20), w * (f01 + f12), w * (f12 + f20)], axis=1)
        np.add.at(b, self.element_dofs.reshape(-1), contrib.reshape(-1))
        return b

    def _raw_matrix(self):
        parts = [_scatter(self.element_dofs, self.element_blocks.astype(complex))]
        if len(self.absorbing_edges):
            edges = self.mesh.boundary_edges[self.absorbing_edges]
            parts.append(_scatter(self.space.element_dofs(edges).reshape(-1, 4), self.absorbing_blocks))
        return _coo(tuple(np.concatenate([p[i] for p in parts]) for i in range(3)), self.space.n_dofs)

    def assemble(self):
        """Global matrix and load with Dirichlet rows/columns eliminated symmetrically."""
        A = self._raw_matrix()
        b = self._volume_load() + self._boundary_load()
        A, b = eliminate_dirichlet(A, b, self.dirichlet_dofs, self.dirichlet_values)
        exact = None
        if self.exact is not None:
            exact = self.exact.value(self.mesh.vertices).ravel()
        return AssembledSystem(A, b, exact, self.dirichlet_dofs, self.l2_mass())

    def l2_mass(self, element_ids=None):
        """Unweighted vector mass matrix defining the discrete L2 norm."""
        area = self.mesh.signed_areas()
        scalar = (np.ones((3, 3)) + np.eye(3)) / 12.0
        blocks = np.zeros((self.mesh.n_triangles, 6, 6))
        blocks[:, 0::2, 0::2] = scalar
        blocks[:, 1::2, 1::2] = scalar
        blocks *= area[:, None, None]
        return _coo(_scatter(self.element_dofs, blocks), self.space.n_dofs)

    # -- local problems ------------------------------------------------------

    def _local_boundary(self, element_ids):
        tri = self.mesh.triangles[element_ids]
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        owner = np.tile(element_ids, 3)
        key = np.sort(e, axis=1)
        _, inv, counts = np.unique(key, axis=0, return_inverse=True, return_counts=True)
        single = counts[inv.ravel()] == 1
        return e[single], owner[single]

    def subdomain_boundary(self, element_ids):
        """Split the boundary of an element set into physical and interface edges.

        Returns ``(physical, interface)``: indices into ``mesh.boundary_edges``
        and an ``(m, 3)`` array of ``(a, b, owner)`` oriented interface edges.
        """
        element_ids = np.unique(np.asarray(element_ids, dtype=np.int64))
        e, owner = self._local_boundary(element_ids)
        global_keys = {(a, b): i for i, (a, b) in enumerate(self.mesh.boundary_edges.tolist())}
        physical, interface = [], []
        for (a, b), o in zip(e.tolist(), owner.tolist()):
            gi = global_keys.get((a, b))
            if gi is None:
                interface.append((a, b, o))
            else:
                physical.append(gi)
        return np.array(sorted(physical), dtype=np.int64), np.array(interface, dtype=np.int64).reshape(-1, 3)

    def local_matrix(self, element_ids, interface_edges=None, edge_weight=None):
        """Local matrix on ``element_ids`` with zeroth-order Taylor interface terms.

        ``interface_edges`` holds oriented ``(a, b)`` vertex pairs on the boundary
        of the element set; by default these are all such edges not on the global
        boundary.  A listed edge that lies on the global boundary has its physical
        condition replaced by the interface term.  ``edge_weight``, if given, maps
        an interface edge ``(a, b)`` to a multiplier of its interface term.
        Returns ``(matrix, dofs)`` with ``dofs`` the sorted global indices of the
        local unknowns.
        """
        element_ids = np.unique(np.asarray(element_ids, dtype=np.int64))
        physical, auto_interface = self.subdomain_boundary(element_ids)
        if interface_edges is None:
            interface = auto_interface
        else:
            e, owner = self._local_boundary(element_ids)
            owner_of = {(a, b): o for (a, b), o in zip(e.tolist(), owner.tolist())}
            rows = []
            for a, b in np.asarray(interface_edges, dtype=np.int64).reshape(-1, 2).tolist():
                if (a, b) not in owner_of:
                    if (b, a) in owner_of:
                        a, b = b, a
                    else:
                        raise UsageError(f"edge ({a}, {b}) is not on the subdomain boundary")
                rows.append((a, b, owner_of[(a, b)]))
            interface = np.array(rows, dtype=np.int64).reshape(-1, 3)
            overridden = {(a, b) for a, b, _ in rows}
            physical = np.array([g for g in physical.tolist()
                                 if tuple(self.mesh.boundary_edges[g].tolist()) not in overridden],
                                dtype=np.int64)
        verts = np.unique(self.mesh.triangles[element_ids])
        dofs = self.space.dofs_of_vertices(verts)
        g2l = np.full(self.space.n_dofs, -1, dtype=np.int64)
        g2l[dofs] = np.arange(len(dofs))

        parts = [_scatter(g2l[self.element_dofs[element_ids]], self.element_blocks[element_ids].astype(complex))]
        absorbing_pos = {int(g): i for i, g in enumerate(self.absorbing_edges)}
        phys_abs = [absorbing_pos[g] for g in physical.tolist() if g in absorbing_pos]
        if phys_abs:
            edges = self.mesh.boundary_edges[self.absorbing_edges[phys_abs]]
            parts.append(_scatter(g2l[self.space.element_dofs(edges)], self.absorbing_blocks[phys_abs]))
        if len(interface):
            edges = interface[:, :2]
            media = [self.medium_of(o) for o in interface[:, 2]]
            blocks = impedance_edge_matrices(self.mesh.vertices, edges, media, self.omega)
            if edge_weight is not None:
                blocks = blocks * np.array([edge_weight(a, b) for a, b in edges.tolist()])[:, None, None]
            parts.append(_scatter(g2l[self.space.element_dofs(edges)], blocks))
        B = _coo(tuple(np.concatenate([p[i] for p in parts]) for i in range(3)), len(dofs))
        # Dirichlet dofs stay fixed, except on edges now carrying an interface term
        fixed = self._dirichlet_vertices(physical)
        local_d = g2l[self.space.dofs_of_vertices(fixed)] if len(fixed) else np.zeros(0, dtype=np.int64)
        local_d = local_d[local_d >= 0]
        B, _ = eliminate_dirichlet(B, None, local_d, None)
        return B, dofs

    def _dirichlet_vertices(self, physical):
        is_d = self.boundary_kind[physical] == "dirichlet" if len(physical) else np.zeros(0, bool)
        return np.unique(self.mesh.boundary_edges[physical[is_d]])


def eliminate_dirichlet(A, b, dofs, values):
    """Zero Dirichlet rows and columns, put ones on their diagonal, lift the load."""
    n = A.shape[0]
    if len(dofs) == 0:
        return A, b
    is_d = np.zeros(n)
    is_d[dofs] = 1.0
    keep = sp.diags(1.0 - is_d)
    if b is not None:
        g = np.zeros(n, dtype=complex)
        if values is not None:
            g[dofs] = values
        b = keep @ (b - A @ g) + g
    A = (keep @ A @ keep + sp.diags(is_d)).tocsr()
    A.eliminate_zeros()
    A.sort_indices()
    return A, b


def assemble_navier(mesh, media, omega, bcs, body_force=None, exact=None):
    """Assemble ``A u = b`` for the Navier equations on ``mesh``."""
    return NavierDiscretization(mesh, media, omega, bcs, body_force, exact).assemble()


def assemble_local_oras(discretization, element_ids, interface_edges=None, edge_weight=None):
    """Local ORAS matrix ``B_i`` on an element set; see :meth:`NavierDiscretization.local_matrix`."""
    return discretization.local_matrix(element_ids, interface_edges, edge_weight)


def write_coo(matrix, path):
    """Dump a sparse matrix as ``row col re im`` lines."""
    A = sp.coo_matrix(matrix)
    order = np.lexsort((A.col, A.row))
    with open(path, "w") as fh:
        for r, c, v in zip(A.row[order], A.col[order], A.data[order]):
            v = complex(v)
            fh.write(f"{r} {c} {v.real + 0.0:.17g} {v.imag + 0.0:.17g}\n")
    return path
