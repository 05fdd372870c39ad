import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from hypothesis import given, settings
from hypothesis import strategies as st

from elastoschwarz import fem
from elastoschwarz.errors import UsageError
from elastoschwarz.mesh import assign_regions_by_radius, build_rect_mesh
from elastoschwarz.symbols import ElasticMedium, taylor_symbols

from oracles import plane_wave_mp

M = ElasticMedium.from_speeds(1.0, 0.5)
D = (np.cos(np.pi / 3), np.cos(np.pi / 3))


def absorbing(mesh, wave=None):
    return {t: fem.BoundaryCondition("absorbing", wave) for t in mesh.tags()}


def plane_wave_error(n, omega=5.0, kinds=None):
    mesh = build_rect_mesh(n, n)
    wave = fem.PlaneWave(omega, M)
    kinds = kinds or {}
    bcs = {t: fem.BoundaryCondition(kinds.get(t, "absorbing"), wave) for t in mesh.tags()}
    S = fem.assemble_navier(mesh, M, omega, bcs, body_force=wave.body_force, exact=wave)
    u = spla.spsolve(S.matrix.tocsc(), S.rhs)
    return S.l2_norm(u - S.exact_solution) / S.l2_norm(S.exact_solution)


# -- plane wave -------------------------------------------------------------------

def test_plane_wave_at_origin():
    d = np.array(D)
    assert np.allclose(fem.plane_wave([0.0, 0.0], 5.0, M), d + np.array([-d[1], d[0]]), atol=1e-15)


def test_plane_wave_extended_precision():
    ref = plane_wave_mp(1.0, 0.0, 5.0, 1.0, 0.5)
    assert np.allclose(fem.plane_wave([1.0, 0.0], 5.0, M), ref, rtol=1e-14, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(x=st.floats(-50, 50), y=st.floats(-50, 50), omega=st.floats(0.1, 30))
def test_plane_wave_bounded(x, y, omega):
    u = fem.plane_wave([x, y], omega, M)
    assert np.all(np.abs(u) <= 2 * np.linalg.norm(D) + 1e-12)


def test_plane_wave_zero_direction():
    with pytest.raises(UsageError):
        fem.PlaneWave(1.0, M, (0.0, 0.0))


def test_body_force_vanishes_for_unit_direction():
    wave = fem.PlaneWave(3.0, M, (0.6, 0.8))
    pts = np.random.default_rng(0).uniform(-1, 1, (20, 2))
    assert np.abs(wave.body_force(pts)).max() < 1e-12


def test_body_force_matches_finite_differences():
    m = ElasticMedium(2.0, 1.3, 0.7)
    wave = fem.PlaneWave(2.5, m)
    pts = np.random.default_rng(1).uniform(-1, 1, (10, 2))
    h = 1e-5
    div = np.zeros((len(pts), 2), dtype=complex)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        sp_ = fem.stress(wave.gradient(pts + e), m)
        sm = fem.stress(wave.gradient(pts - e), m)
        div += (sp_[:, :, j] - sm[:, :, j]) / (2 * h)
    expected = -(div + m.rho * wave.omega**2 * wave.value(pts))
    assert np.allclose(wave.body_force(pts), expected, rtol=1e-6, atol=1e-6)


# -- element and boundary terms -----------------------------------------------------

def test_impedance_symmetric_and_positive():
    rng = np.random.default_rng(2)
    n = rng.normal(size=(50, 2))
    n /= np.linalg.norm(n, axis=1)[:, None]
    sig = fem.impedance(n, M, 3.0)
    assert np.allclose(sig, np.swapaxes(sig, 1, 2), atol=0)
    assert np.all(np.linalg.eigvalsh(sig) > 0)


def test_impedance_is_taylor0_symbol_in_normal_frame():
    S1, _ = taylor_symbols(0, 1.0, 2.0, M)
    assert np.allclose(fem.impedance([1.0, 0.0], M, 2.0), S1.entries / 1j, atol=1e-14)
    # normal along y: the tangential (x) direction gets the shear speed
    assert np.allclose(fem.impedance([0.0, -1.0], M, 2.0), np.diag([S1[1, 1], S1[0, 0]]) / 1j, atol=1e-14)


def test_rigid_motions_in_kernel():
    mesh = build_rect_mesh(6, 5, (-1, 2), (0, 1))
    bcs = {t: fem.BoundaryCondition("natural") for t in mesh.tags()}
    A = fem.assemble_navier(mesh, M, 0.0, bcs).matrix
    x, y = mesh.vertices.T
    scale = abs(A).max()
    for u in (np.tile([1.0, 0.0], mesh.n_vertices), np.tile([0.0, 1.0], mesh.n_vertices),
              np.column_stack([-y, x]).ravel()):
        assert np.abs(A @ u).max() <= 1e-12 * scale


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_stiffness_positive_semidefinite(seed):
    rng = np.random.default_rng(seed)
    mesh = build_rect_mesh(4, 3)
    disc = fem.NavierDiscretization(mesh, ElasticMedium(1.0, rng.uniform(0, 3), rng.uniform(0.1, 2)), 1.0,
                                    absorbing(mesh))
    K = fem._coo(fem._scatter(disc.element_dofs, disc.stiffness), disc.space.n_dofs)
    v = rng.normal(size=K.shape[0])
    assert v @ (K @ v) >= -1e-12 * np.linalg.norm(v) ** 2


def test_matrix_complex_symmetric():
    mesh = build_rect_mesh(6, 6)
    bcs = absorbing(mesh)
    bcs["top"] = fem.BoundaryCondition("dirichlet")
    A = fem.assemble_navier(mesh, M, 5.0, bcs).matrix
    assert abs(A - A.T).max() <= 1e-14 * abs(A).max()
    assert abs(A - A.conj().T).max() > 0


def test_absorbing_blocks_symmetric():
    mesh = build_rect_mesh(3, 3)
    disc = fem.NavierDiscretization(mesh, M, 2.0, absorbing(mesh))
    blocks = disc.absorbing_blocks
    assert len(blocks) == len(mesh.boundary_edges)
    assert np.allclose(blocks, np.swapaxes(blocks, 1, 2), atol=0)


def test_assembly_deterministic():
    mesh = assign_regions_by_radius(build_rect_mesh(10, 10, (-1, 1), (-1, 1)), 0.5)
    media = {0: ElasticMedium(1.0, 2.0, 1.0), 1: M}
    a = fem.assemble_navier(mesh, media, 4.0, absorbing(mesh, fem.PlaneWave(4.0, M)))
    b = fem.assemble_navier(mesh, media, 4.0, absorbing(mesh, fem.PlaneWave(4.0, M)))
    assert np.array_equal(a.matrix.data, b.matrix.data) and np.array_equal(a.matrix.indices, b.matrix.indices)
    assert np.array_equal(a.rhs, b.rhs)


def test_dirichlet_rows_fixed():
    mesh = build_rect_mesh(4, 4)
    wave = fem.PlaneWave(2.0, M)
    bcs = {t: fem.BoundaryCondition("dirichlet", wave) for t in mesh.tags()}
    S = fem.assemble_navier(mesh, M, 2.0, bcs, body_force=wave.body_force, exact=wave)
    d = S.dirichlet_dofs
    assert len(d) == 2 * 16
    u = spla.spsolve(S.matrix.tocsc(), S.rhs)
    assert np.allclose(u[d], S.exact_solution[d], atol=1e-14)


def test_missing_tag_and_region():
    mesh = build_rect_mesh(2, 2)
    with pytest.raises(UsageError):
        fem.NavierDiscretization(mesh, M, 1.0, {"left": fem.BoundaryCondition("natural")})
    mesh.element_region[0] = 7
    with pytest.raises(UsageError):
        fem.NavierDiscretization(mesh, {0: M}, 1.0, absorbing(mesh))
    with pytest.raises(UsageError):
        fem.BoundaryCondition("robin")


def test_plane_wave_h_convergence():
    e20, e40 = plane_wave_error(20), plane_wave_error(40)
    assert e40 <= 0.35 * e20
    assert e20 < 0.05


def test_plane_wave_h_convergence_mixed_conditions():
    kinds = {"top": "dirichlet", "left": "natural"}
    e10, e20 = plane_wave_error(10, 3.0, kinds), plane_wave_error(20, 3.0, kinds)
    assert e20 <= 0.35 * e10


def test_write_coo(tmp_path):
    A = sp.csr_matrix(np.array([[1 + 2j, 0], [0.5, -3j]]))
    path = fem.write_coo(A, tmp_path / "a.txt")
    assert path.read_text().splitlines() == ["0 0 1 2", "1 0 0.5 0", "1 1 0 -3"]


# -- local ORAS matrices -------------------------------------------------------------

def _waveguide(n, right="absorbing"):
    mesh = build_rect_mesh(2 * n, n, (-1, 1), (0, 1))
    kinds = {"top": "dirichlet", "bottom": "dirichlet", "left": "absorbing", "right": right}
    bcs = {t: fem.BoundaryCondition(k) for t, k in kinds.items()}
    return mesh, fem.NavierDiscretization(mesh, M, 5.0, bcs)


def _match(small, big):
    """Index map from vertices of ``small`` to coincident vertices of ``big``."""
    lookup = {tuple(np.round(v, 12)): i for i, v in enumerate(big.vertices)}
    return np.array([lookup[tuple(np.round(v, 12))] for v in small.vertices])


def test_local_matrix_whole_domain_equals_global():
    mesh, disc = _waveguide(4)
    B, dofs = disc.local_matrix(np.arange(mesh.n_triangles))
    A = disc.assemble().matrix
    assert np.array_equal(dofs, np.arange(disc.space.n_dofs))
    assert abs(B - A).max() == 0


def test_interface_on_right_edge_equals_absorbing_condition():
    mesh, natural = _waveguide(5, right="natural")
    _, abc = _waveguide(5, right="absorbing")
    B, _ = natural.local_matrix(np.arange(mesh.n_triangles), interface_edges=mesh.edges_with_tag("right"))
    A = abc.assemble().matrix
    assert abs(B - A).max() <= 1e-14 * abs(A).max()


def test_local_matrix_equals_submesh_with_absorbing_interface():
    n = 6
    mesh, disc = _waveguide(n)
    left = np.nonzero(mesh.centroids()[:, 0] < 0)[0]
    B, dofs = disc.local_matrix(left)
    sub = build_rect_mesh(n, n, (-1, 0), (0, 1))
    kinds = {"top": "dirichlet", "bottom": "dirichlet", "left": "absorbing", "right": "absorbing"}
    ref = fem.NavierDiscretization(sub, M, 5.0, {t: fem.BoundaryCondition(k) for t, k in kinds.items()})
    A = ref.assemble().matrix
    vmap = _match(sub, mesh)
    gdofs = np.column_stack([2 * vmap, 2 * vmap + 1]).ravel()
    pos = np.searchsorted(dofs, gdofs)
    assert np.array_equal(dofs[pos], gdofs)
    Bp = B[pos][:, pos]
    assert abs(Bp - A).max() <= 1e-13 * abs(A).max()


def test_interface_term_complex_symmetric_and_bad_edge():
    mesh, disc = _waveguide(4)
    els = np.nonzero(mesh.centroids()[:, 0] < 0.3)[0]
    B, _ = fem.assemble_local_oras(disc, els)
    assert abs(B - B.T).max() == 0
    with pytest.raises(UsageError):
        disc.local_matrix(els, interface_edges=[[0, mesh.n_vertices - 1]])
    _, itf = disc.subdomain_boundary(els)
    assert len(itf) == 4  # one vertical line of edges across the unit height


def test_edge_weight_scales_interface_term():
    mesh, disc = _waveguide(4)
    els = np.nonzero(mesh.centroids()[:, 0] < 0)[0]
    B1, _ = disc.local_matrix(els)
    B0, _ = disc.local_matrix(els, interface_edges=np.zeros((0, 2), dtype=int))
    B3, _ = disc.local_matrix(els, edge_weight=lambda a, b: 3.0)
    assert abs((B3 - B0) - 3 * (B1 - B0)).max() <= 1e-14 * abs(B1).max()
