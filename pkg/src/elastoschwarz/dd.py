"""Overlapping decompositions and restricted additive Schwarz preconditioners.

``M^{-1} r = sum_i R_i^T D_i A_i^{-1} R_i r`` where ``A_i`` is either the
restricted global matrix ``R_i A R_i^T`` (RAS) or a local Navier matrix with
impedance interface conditions (ORAS).
"""
from __future__ import annotations

import json
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import FactorizationError, PartitionError, UsageError
from .history import ConvergenceHistory
from .solvers import factorize

KINDS = ("RAS", "ORAS")
INTERFACE_WEIGHTINGS = ("single", "neighbors")
DIVERGENCE_LIMIT = 1e8


@dataclass(frozen=True)
class GridPartition:
    px: int
    py: int


@dataclass(frozen=True)
class CoordinateBisection:
    n: int


def parse_strategy(text):
    """Parse ``"grid(px,py)"`` or ``"coordinate_bisection(N)"``."""
    s = text.replace(" ", "")
    m = re.fullmatch(r"grid\((\d+),(\d+)\)", s)
    if m:
        return GridPartition(int(m[1]), int(m[2]))
    m = re.fullmatch(r"(?:coordinate_bisection|bisection)\((\d+)\)", s)
    if m:
        return CoordinateBisection(int(m[1]))
    raise UsageError(f"unrecognized partition strategy {text!r}")


def partition_elements(mesh, strategy):
    """Assign each triangle a subdomain id in ``0..n_parts-1``.

    ``grid`` splits the bounding box into a uniform ``px x py`` array of cells
    (row-major from the bottom-left) and assigns triangles by centroid;
    ``coordinate_bisection`` recursively halves the longer extent at the
    count-proportional median.
    """
    if isinstance(strategy, str):
        strategy = parse_strategy(strategy)
    c = mesh.centroids()
    nt = mesh.n_triangles
    if isinstance(strategy, GridPartition):
        px, py = strategy.px, strategy.py
        if px < 1 or py < 1:
            raise UsageError("grid partition needs px, py >= 1")
        n_parts = px * py
        if n_parts > nt:
            raise UsageError(f"{n_parts} subdomains requested for {nt} elements")
        lo = mesh.vertices.min(axis=0)
        hi = mesh.vertices.max(axis=0)
        ix = np.clip(np.floor((c[:, 0] - lo[0]) / (hi[0] - lo[0]) * px), 0, px - 1).astype(np.int64)
        iy = np.clip(np.floor((c[:, 1] - lo[1]) / (hi[1] - lo[1]) * py), 0, py - 1).astype(np.int64)
        parts = iy * px + ix
        if len(np.unique(parts)) != n_parts:
            raise UsageError("grid partition produced empty subdomains")
        return parts
    if isinstance(strategy, CoordinateBisection):
        if strategy.n < 1:
            raise UsageError("bisection needs at least one part")
        if strategy.n > nt:
            raise UsageError(f"{strategy.n} subdomains requested for {nt} elements")
        parts = np.empty(nt, dtype=np.int64)
        _bisect(c, np.arange(nt), strategy.n, 0, parts)
        return parts
    raise UsageError(f"unsupported strategy {strategy!r}")


def _bisect(c, ids, n, first, out):
    if n == 1:
        out[ids] = first
        return
    pts = c[ids]
    axis = int(np.argmax(pts.max(axis=0) - pts.min(axis=0)))
    order = ids[np.lexsort((ids, pts[:, axis]))]
    n_left = n // 2
    cut = int(round(len(ids) * n_left / n))
    _bisect(c, order[:cut], n_left, first, out)
    _bisect(c, order[cut:], n - n_left, first + n_left, out)


def grow_overlap(mesh, element_partition, layers):
    """Element and dof sets after ``layers`` rounds of vertex-neighbour growth.

    Returns a :class:`Decomposition` without local operators.
    """
    if layers < 0:
        raise UsageError("overlap layers must be nonnegative")
    parts = np.asarray(element_partition, dtype=np.int64)
    inc = mesh.incidence().astype(np.int32)
    elements, dofs, cores = [], [], []
    for i in range(int(parts.max()) + 1):
        mask = parts == i
        cores.append(np.nonzero(mask)[0])
        for _ in range(layers):
            verts = (inc[mask].sum(axis=0).A1 > 0)
            mask = (inc @ verts.astype(np.int32)) > 0
        e = np.nonzero(mask)[0]
        v = np.unique(mesh.triangles[e])
        elements.append(e)
        dofs.append(np.column_stack([2 * v, 2 * v + 1]).ravel())
    return Decomposition(elements, dofs, layers, 2 * mesh.n_vertices, cores, parts)


@dataclass
class Decomposition:
    """Overlapping subdomains as element and dof index sets.

    ``pou_weights`` is filled by :func:`build_pou`; ``core_elements`` holds
    the non-overlapping partition each subdomain was grown from.
    """

    subdomain_elements: list
    subdomain_dofs: list
    overlap_layers: int
    n_dofs: int
    core_elements: list = field(default_factory=list)
    element_partition: np.ndarray = None
    pou_weights: list = field(default_factory=list)

    @property
    def n_subdomains(self):
        return len(self.subdomain_dofs)

    def restriction(self, i):
        """Boolean selection matrix ``R_i`` of shape ``(n_i, n_dofs)``."""
        d = self.subdomain_dofs[i]
        return sp.csr_matrix((np.ones(len(d)), (np.arange(len(d)), d)), shape=(len(d), self.n_dofs))

    def multiplicity(self):
        m = np.zeros(self.n_dofs, dtype=np.int64)
        for d in self.subdomain_dofs:
            m[d] += 1
        return m

    def pou_sum(self):
        """Diagonal of ``sum_i R_i^T D_i R_i``."""
        s = np.zeros(self.n_dofs)
        for d, w in zip(self.subdomain_dofs, self.pou_weights):
            np.add.at(s, d, w)
        return s

    def summary(self):
        mult = self.multiplicity()
        return {
            "n_subdomains": self.n_subdomains,
            "overlap_layers": self.overlap_layers,
            "n_dofs": self.n_dofs,
            "subdomain_dofs": [int(len(d)) for d in self.subdomain_dofs],
            "subdomain_elements": [int(len(e)) for e in self.subdomain_elements],
            "overlap_dofs": [int(np.sum(mult[d] > 1)) for d in self.subdomain_dofs],
            "shared_dofs_total": int(np.sum(mult > 1)),
        }

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2)
        return path


def build_pou(decomposition, mode="multiplicity", mesh=None):
    """Diagonal partition-of-unity weights, stored on and returned from ``decomposition``.

    ``mode="multiplicity"`` gives ``1 / (number of subdomains holding the dof)``.
    ``mode="restricted"`` counts only the non-overlapping cores (needs ``mesh``),
    so the weights vanish on the outer layer of each overlapping subdomain.
    """
    dec = decomposition
    if mode == "multiplicity":
        sets = dec.subdomain_dofs
    elif mode == "restricted":
        if mesh is None or not dec.core_elements:
            raise UsageError("restricted weights need the mesh and core elements")
        sets = []
        for e in dec.core_elements:
            v = np.unique(mesh.triangles[e])
            sets.append(np.column_stack([2 * v, 2 * v + 1]).ravel())
    else:
        raise UsageError(f"unknown partition-of-unity mode {mode!r}")
    mult = np.zeros(dec.n_dofs, dtype=np.int64)
    for d in sets:
        mult[d] += 1
    if np.any(mult == 0):
        raise PartitionError(f"{np.sum(mult == 0)} dofs are not covered by any subdomain")
    weights = []
    for d, core in zip(dec.subdomain_dofs, sets):
        w = np.zeros(len(d))
        pos = np.searchsorted(d, core) if mode == "restricted" else np.arange(len(d))
        w[pos] = 1.0 / mult[d[pos]]
        weights.append(w)
    dec.pou_weights = weights
    return weights


def edge_subdomain_counts(mesh, decomposition):
    """Map each undirected edge ``(a, b)``, ``a < b``, to the number of subdomains containing it."""
    counts = {}
    for els in decomposition.subdomain_elements:
        tri = mesh.triangles[els]
        e = np.sort(np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]]), axis=1)
        for key in map(tuple, np.unique(e, axis=0).tolist()):
            counts[key] = counts.get(key, 0) + 1
    return counts


def neighbor_edge_weight(counts):
    """Interface multiplier: the number of other subdomains containing the edge, at least 1.

    Along a plain interface this is 1.  Near cross points an edge of the
    local boundary lies inside several neighbours and receives one impedance
    term per neighbour.
    """
    def weight(a, b):
        return max(counts.get((min(a, b), max(a, b)), 1) - 1, 1)
    return weight


class SchwarzPreconditioner:
    """Factorized local problems of a decomposition and the RAS/ORAS action.

    Parameters
    ----------
    decomposition : Decomposition
        Must carry partition-of-unity weights.
    kind : {"RAS", "ORAS"}
    matrix : sparse matrix
        Global matrix; used for RAS local operators.
    discretization : NavierDiscretization, optional
        Required for ORAS, which assembles local impedance matrices.
    workers : int
        Thread count for the local solves (results are summed in subdomain order).
    interface_weighting : {"single", "neighbors"}
        ORAS only.  ``"single"`` applies the impedance term once on every
        interface edge; ``"neighbors"`` applies it once per neighbouring
        subdomain containing the edge (see :func:`neighbor_edge_weight`).
    """

    def __init__(self, decomposition, kind, matrix, discretization=None, workers=1,
                 interface_weighting="single"):
        if kind not in KINDS:
            raise UsageError(f"preconditioner kind must be one of {KINDS}")
        if interface_weighting not in INTERFACE_WEIGHTINGS:
            raise UsageError(f"interface weighting must be one of {INTERFACE_WEIGHTINGS}")
        if not decomposition.pou_weights:
            build_pou(decomposition)
        self.decomposition = decomposition
        self.kind = kind
        self.workers = workers
        A = sp.csr_matrix(matrix)
        self.local_ops = []
        self.factors = []
        weight = None
        if kind == "ORAS" and interface_weighting == "neighbors" and discretization is not None:
            weight = neighbor_edge_weight(edge_subdomain_counts(discretization.mesh, decomposition))
        for i, (els, dofs) in enumerate(zip(decomposition.subdomain_elements, decomposition.subdomain_dofs)):
            if kind == "RAS":
                Ai = A[dofs][:, dofs]
            else:
                if discretization is None:
                    raise UsageError("ORAS needs the discretization to build local matrices")
                Ai, ldofs = discretization.local_matrix(els, edge_weight=weight)
                if not np.array_equal(ldofs, dofs):
                    raise UsageError(f"local dofs of subdomain {i} do not match the decomposition")
            self.local_ops.append(Ai)
            try:
                self.factors.append(factorize(Ai, subdomain=i))
            except FactorizationError as exc:
                raise FactorizationError(str(exc), subdomain=i) from None

    @property
    def n(self):
        return self.decomposition.n_dofs

    def _local(self, i, r):
        d = self.decomposition.subdomain_dofs[i]
        return self.decomposition.pou_weights[i] * self.factors[i].solve(r[d])

    def apply(self, r):
        r = np.asarray(r, dtype=complex)
        idx = range(self.decomposition.n_subdomains)
        if self.workers > 1:
            with ThreadPoolExecutor(self.workers) as pool:
                parts = list(pool.map(lambda i: self._local(i, r), idx))
        else:
            parts = [self._local(i, r) for i in idx]
        out = np.zeros(self.n, dtype=complex)
        for d, p in zip(self.decomposition.subdomain_dofs, parts):
            out[d] += p
        return out

    def solve(self, r):
        return self.apply(r)

    __call__ = apply


def apply_preconditioner(preconditioner, residual):
    """``sum_i R_i^T D_i A_i^{-1} R_i residual``."""
    return preconditioner.apply(residual)


def stationary_iterate(system, preconditioner, u0=None, max_iters=100, tol=1e-6,
                       reference=None, norm=None, snapshots=(), label=""):
    """Run ``u <- u + M^{-1}(b - A u)`` and record relative errors.

    The error is measured against ``reference`` (by default the direct solution
    of the global system) in ``norm`` (by default ``system.l2_norm``) and scaled
    by the initial error.  Iteration stops when it drops to ``tol``, when it
    exceeds ``DIVERGENCE_LIMIT``, or after ``max_iters`` steps.  A run that ends
    with a larger error than it started with is flagged as diverged.

    Returns
    -------
    history : ConvergenceHistory
        ``history.metadata["snapshots"]`` maps each requested iteration to the
        error vector at that iteration; ``history.metadata["solution"]`` holds
        the final iterate.
    """
    if not tol > 0:
        raise UsageError("tol must be positive")
    A, b = system.matrix, system.rhs
    if reference is None:
        reference = factorize(A).solve(b)
    norm = norm or system.l2_norm
    u = np.zeros(A.shape[0], dtype=complex) if u0 is None else np.array(u0, dtype=complex)
    bnorm = np.linalg.norm(b) or 1.0
    e0 = norm(reference - u) or 1.0
    hist = ConvergenceHistory(label=label or preconditioner.kind)
    hist.metadata["snapshots"] = {}
    snapshots = set(snapshots)

    def record(it):
        r = b - A @ u
        hist.append(norm(reference - u) / e0, np.linalg.norm(r) / bnorm)
        if it in snapshots:
            hist.metadata["snapshots"][it] = reference - u
        return r

    r = record(0)
    if hist.rel_error[-1] <= tol:
        hist.status = "converged"
    for it in range(1, max_iters + 1):
        if hist.status != "running":
            break
        u = u + preconditioner.apply(r)
        r = record(it)
        err = hist.rel_error[-1]
        if not np.isfinite(err) or err > DIVERGENCE_LIMIT:
            hist.status = "diverged"
        elif err <= tol:
            hist.status = "converged"
    if hist.status == "running":
        hist.status = "diverged" if hist.rel_error[-1] > hist.rel_error[0] else "max_iters"
    hist.metadata["solution"] = u
    return hist
