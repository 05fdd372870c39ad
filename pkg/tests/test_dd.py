import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from elastoschwarz import dd, fem
from elastoschwarz.errors import FactorizationError, PartitionError, UsageError
from elastoschwarz.experiments import interface_cut
from elastoschwarz.mesh import build_rect_mesh
from elastoschwarz.solvers import factorize
from elastoschwarz.symbols import ElasticMedium, rho_values

from oracles import dense_ras, element_components

M = ElasticMedium.from_speeds(1.0, 0.5)


def waveguide(n, omega=5.0, walls="absorbing"):
    mesh = build_rect_mesh(2 * n, n, (-1, 1), (0, 1))
    wave = fem.PlaneWave(omega, M)
    bcs = {t: fem.BoundaryCondition("absorbing", wave) for t in ("left", "right")}
    for t in ("top", "bottom"):
        bcs[t] = fem.BoundaryCondition(walls, wave)
    disc = fem.NavierDiscretization(mesh, M, omega, bcs, body_force=wave.body_force)
    return mesh, disc, disc.assemble()


def decomposition(mesh, strategy, layers, pou="restricted"):
    dec = dd.grow_overlap(mesh, dd.partition_elements(mesh, strategy), layers)
    dd.build_pou(dec, pou, mesh)
    return dec


# -- partitions -------------------------------------------------------------------

def test_grid_two_by_one():
    mesh = build_rect_mesh(4, 2, (-1, 1), (0, 1))
    parts = dd.partition_elements(mesh, "grid(2,1)")
    x = mesh.centroids()[:, 0]
    assert np.array_equal(parts, (x > 0).astype(int))


def test_grid_four_by_four_nonempty():
    mesh = build_rect_mesh(80, 80)
    parts = dd.partition_elements(mesh, "grid(4,4)")
    assert sorted(np.unique(parts)) == list(range(16))
    assert np.all(np.bincount(parts) == 800)


def test_bisection_connected():
    mesh = build_rect_mesh(13, 9)
    parts = dd.partition_elements(mesh, "coordinate_bisection(4)")
    assert sorted(np.unique(parts)) == [0, 1, 2, 3]
    for i in range(4):
        assert element_components(mesh.triangles, np.nonzero(parts == i)[0]) == 1


@pytest.mark.parametrize("strategy", ["grid(3,3)", "coordinate_bisection(9)"])
def test_too_many_parts(strategy):
    with pytest.raises(UsageError):
        dd.partition_elements(build_rect_mesh(2, 2), strategy)


def test_bad_strategy():
    with pytest.raises(UsageError):
        dd.parse_strategy("metis(4)")


# -- overlap ----------------------------------------------------------------------

def test_zero_overlap_is_core():
    mesh = build_rect_mesh(6, 6)
    parts = dd.partition_elements(mesh, "grid(2,2)")
    dec = dd.grow_overlap(mesh, parts, 0)
    for i in range(4):
        assert np.array_equal(dec.subdomain_elements[i], np.nonzero(parts == i)[0])


def test_overlap_monotone_and_bounded():
    mesh = build_rect_mesh(12, 12)
    parts = dd.partition_elements(mesh, "grid(2,2)")
    prev = None
    for layers in range(4):
        dec = dd.grow_overlap(mesh, parts, layers)
        if prev is not None:
            for a, b in zip(prev.subdomain_elements, dec.subdomain_elements):
                assert set(a) < set(b)
        prev = dec
    # one layer stays within two cells of the core
    dec = dd.grow_overlap(mesh, parts, 1)
    c = mesh.centroids()[dec.subdomain_elements[0]]
    assert c[:, 0].max() < 0.5 + 2 / 12 and c[:, 1].max() < 0.5 + 2 / 12


def test_negative_overlap():
    mesh = build_rect_mesh(2, 2)
    with pytest.raises(UsageError):
        dd.grow_overlap(mesh, np.zeros(8, int), -1)


# -- partition of unity -----------------------------------------------------------

def test_pou_single_subdomain():
    mesh = build_rect_mesh(3, 3)
    dec = decomposition(mesh, "grid(1,1)", 0, "multiplicity")
    assert np.all(dec.pou_weights[0] == 1.0)


def test_pou_two_subdomains_shared_half():
    mesh = build_rect_mesh(4, 2, (-1, 1), (0, 1))
    dec = decomposition(mesh, "grid(2,1)", 1, "multiplicity")
    mult = dec.multiplicity()
    for d, w in zip(dec.subdomain_dofs, dec.pou_weights):
        assert np.all(w[mult[d] == 2] == 0.5)


@settings(max_examples=15, deadline=None)
@given(nx=st.integers(4, 12), ny=st.integers(4, 12), layers=st.integers(0, 3),
       mode=st.sampled_from(["multiplicity", "restricted"]), seed=st.integers(0, 10**6))
def test_pou_sums_to_one(nx, ny, layers, mode, seed):
    mesh = build_rect_mesh(nx, ny)
    parts = np.random.default_rng(seed).integers(0, 4, mesh.n_triangles)
    parts[:4] = np.arange(4)  # every label used
    dec = dd.grow_overlap(mesh, parts, layers)
    dd.build_pou(dec, mode, mesh)
    assert np.max(np.abs(dec.pou_sum() - 1.0)) <= 1e-15


def test_pou_uncovered_dof():
    mesh = build_rect_mesh(2, 2)
    dec = dd.grow_overlap(mesh, dd.partition_elements(mesh, "grid(2,1)"), 0)
    dec.subdomain_dofs[1] = dec.subdomain_dofs[1][:-2]
    with pytest.raises(PartitionError):
        dd.build_pou(dec, "multiplicity")


def test_pou_unknown_mode():
    mesh = build_rect_mesh(2, 2)
    dec = dd.grow_overlap(mesh, dd.partition_elements(mesh, "grid(2,1)"), 0)
    with pytest.raises(UsageError):
        dd.build_pou(dec, "smooth")


# -- preconditioner ---------------------------------------------------------------

def test_single_subdomain_ras_is_inverse():
    mesh, disc, S = waveguide(4)
    dec = decomposition(mesh, "grid(1,1)", 0)
    P = dd.SchwarzPreconditioner(dec, "RAS", S.matrix)
    r = np.random.default_rng(0).normal(size=S.n_dofs) + 0j
    assert np.allclose(S.matrix @ P.apply(r), r, atol=1e-12)


def test_preconditioner_linear():
    mesh, disc, S = waveguide(4)
    dec = decomposition(mesh, "grid(2,1)", 1)
    rng = np.random.default_rng(1)
    for kind in dd.KINDS:
        P = dd.SchwarzPreconditioner(dec, kind, S.matrix, disc)
        r, s = rng.normal(size=(2, S.n_dofs))
        a = 0.3 - 2j
        assert np.allclose(P.apply(a * r + s), a * P.apply(r) + P.apply(s), atol=1e-12)


def test_ras_matches_dense_oracle():
    rng = np.random.default_rng(2)
    n = 10
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) + 10 * np.eye(n)
    sets = [np.arange(0, 6), np.arange(4, 10)]
    mult = np.zeros(n)
    for d in sets:
        mult[d] += 1
    weights = [1 / mult[d] for d in sets]
    dec = dd.Decomposition([[], []], sets, 1, n, pou_weights=weights)
    P = dd.SchwarzPreconditioner(dec, "RAS", sp.csr_matrix(A))
    r = rng.normal(size=n) + 1j * rng.normal(size=n)
    assert np.max(np.abs(P.apply(r) - dense_ras(A, sets, weights, r))) <= 1e-12


def test_workers_match_serial():
    mesh, disc, S = waveguide(6)
    dec = decomposition(mesh, "grid(2,2)", 1)
    r = np.random.default_rng(3).normal(size=S.n_dofs)
    a = dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc).apply(r)
    b = dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc, workers=3).apply(r)
    assert np.array_equal(a, b)


def test_factorization_error_names_subdomain():
    n = 8
    sets = [np.arange(0, 5), np.arange(3, 8)]
    diag = np.ones(n)
    diag[6:] = 0.0  # only subdomain 1 sees the zero block
    A = sp.diags(diag).tocsr()
    dec = dd.Decomposition([[], []], sets, 1, n, pou_weights=[np.ones(5), np.ones(5)])
    with pytest.raises(FactorizationError) as info:
        dd.SchwarzPreconditioner(dec, "RAS", A)
    assert info.value.subdomain == 1
    assert "subdomain 1" in str(info.value)


def test_bad_options():
    mesh, disc, S = waveguide(2)
    dec = decomposition(mesh, "grid(2,1)", 1)
    with pytest.raises(UsageError):
        dd.SchwarzPreconditioner(dec, "ASM", S.matrix)
    with pytest.raises(UsageError):
        dd.SchwarzPreconditioner(dec, "ORAS", S.matrix)
    with pytest.raises(UsageError):
        dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc, interface_weighting="all")


def test_neighbor_weighting_without_cross_points():
    mesh, disc, S = waveguide(6)
    dec = decomposition(mesh, "grid(2,1)", 2)
    a = dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc)
    b = dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc, interface_weighting="neighbors")
    for x, y in zip(a.local_ops, b.local_ops):
        assert abs(x - y).max() == 0


def test_neighbor_weighting_at_cross_point():
    mesh = build_rect_mesh(8, 8)
    dec = dd.grow_overlap(mesh, dd.partition_elements(mesh, "grid(2,2)"), 1)
    weight = dd.neighbor_edge_weight(dd.edge_subdomain_counts(mesh, dec))
    counts = dd.edge_subdomain_counts(mesh, dec)
    assert max(counts.values()) == 4
    center = int(np.argmin(np.linalg.norm(mesh.vertices - 0.5, axis=1)))
    edges = [e for e in counts if center in e]
    assert all(weight(*e) == 3 for e in edges) and weight(*edges[0][::-1]) == 3


# -- stationary iteration ---------------------------------------------------------

def test_single_subdomain_converges_in_one_step():
    mesh, disc, S = waveguide(6)
    dec = decomposition(mesh, "grid(1,1)", 0)
    h = dd.stationary_iterate(S, dd.SchwarzPreconditioner(dec, "RAS", S.matrix), tol=1e-10)
    assert h.converged and h.iterations == 1


def test_fixed_point_consistency():
    mesh, disc, S = waveguide(6)
    dec = decomposition(mesh, "grid(2,2)", 1)
    u = factorize(S.matrix).solve(S.rhs)
    P = dd.SchwarzPreconditioner(dec, "RAS", S.matrix)
    step = P.apply(S.rhs - S.matrix @ u)
    assert np.linalg.norm(step) <= 1e-12 * np.linalg.norm(u)


def test_stationary_rejects_bad_tol():
    mesh, disc, S = waveguide(2)
    dec = decomposition(mesh, "grid(1,1)", 0)
    with pytest.raises(UsageError):
        dd.stationary_iterate(S, dd.SchwarzPreconditioner(dec, "RAS", S.matrix), tol=0)


def test_snapshots_recorded():
    mesh, disc, S = waveguide(6)
    dec = decomposition(mesh, "grid(2,1)", 1)
    P = dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc)
    h = dd.stationary_iterate(S, P, max_iters=5, snapshots=(0, 3))
    assert sorted(h.metadata["snapshots"]) == [0, 3]
    assert h.status == "max_iters" and h.iterations == 5


def test_oras_improves_with_overlap():
    mesh, disc, S = waveguide(40)
    iters = []
    for layers in (1, 2, 3):
        dec = decomposition(mesh, "grid(2,1)", layers)
        h = dd.stationary_iterate(S, dd.SchwarzPreconditioner(dec, "ORAS", S.matrix, disc),
                                  max_iters=300, tol=1e-6)
        assert h.converged
        iters.append(h.iterations)
    assert iters[0] >= iters[1] >= iters[2]


def _pin(A, idx):
    keep = np.ones(A.shape[0])
    keep[idx] = 0
    P = sp.diags(keep)
    return (P @ A @ P + sp.diags(1 - keep)).tocsc()


def test_discrete_rates_follow_symbol():
    # sliding walls (u_y = 0, zero shear traction) make cos/sin Fourier modes exact
    n, omega, layers = 80, 5.0, 1
    mesh, disc, S = waveguide(n, omega, walls="natural")
    y = mesh.vertices[:, 1]
    pinned = 2 * np.nonzero((y < 1e-12) | (y > 1 - 1e-12))[0] + 1
    A = _pin(S.matrix, pinned)
    dec = decomposition(mesh, "grid(2,1)", layers)
    P = dd.SchwarzPreconditioner(dec, "ORAS", A, disc)
    for i, dofs in enumerate(dec.subdomain_dofs):
        P.local_ops[i] = _pin(P.local_ops[i], np.nonzero(np.isin(dofs, pinned))[0])
        P.factors[i] = factorize(P.local_ops[i])
    for m in range(4, 11):  # evanescent modes: end reflections are negligible
        k = m * np.pi
        e = np.zeros(A.shape[0], complex)
        e[0::2], e[1::2] = np.cos(k * y), np.sin(k * y)
        e[pinned] = 0
        norms = []
        for _ in range(31):
            e = e - P.apply(A @ e)
            norms.append(np.linalg.norm(interface_cut(mesh, e, 0.0)[1]))
        rate = (norms[-1] / norms[10]) ** (1 / 20)
        theory = rho_values([k], omega, M, 2 * layers / n)[0]
        assert rate == pytest.approx(theory, rel=0.05)
