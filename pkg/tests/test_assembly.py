import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp

from divdiv.analysis import stress_field
from divdiv.assembly import (
    assemble_divdiv,
    assemble_load,
    assemble_mass,
    assemble_system,
    build_bases,
    export_matrix_market,
    local_divdiv,
)
from divdiv.dofmap import build_sigma_map, build_u_map
from divdiv.mesh import Mesh, build_lshape, build_unit_square, perturb
from divdiv.parallel import map_chunks
from divdiv.problems import example1
from divdiv.quadrature import edge_rule, triangle_rule
from divdiv.ref_basis import FUNCTIONAL_ORDERS, ElementGeometry, divergence, evaluate_local


def lone(corners=((0, 0), (1, 0), (0, 1))):
    return Mesh.from_triangles(np.array(corners, dtype=float), [[0, 1, 2]])


def test_single_triangle_mass_is_spd():
    s = assemble_system(lone())
    M = s.M.toarray()
    assert M.shape == (30, 30)
    assert np.abs(M - M.T).max() < 1e-12 * np.abs(M).max()
    assert np.linalg.eigvalsh(M).min() > 0


def test_quadratic_form_matches_direct_quadrature():
    mesh = perturb(build_unit_square(3), 0.2, 4)
    s = assemble_system(mesh)
    x = np.random.default_rng(1).standard_normal(s.n_sigma)
    field = stress_field(s, x)
    rule = triangle_rule(12)
    pts = ElementGeometry.from_mesh(mesh).map_points(rule.points)
    v = field.evaluate(pts)  # (T, 3, q)
    direct = np.sum((v[:, 0] ** 2 + 2 * v[:, 1] ** 2 + v[:, 2] ** 2) * rule.weights * mesh.dets[:, None])
    assert x @ s.M @ x == pytest.approx(direct, rel=1e-11)


def test_low_mass_degree_rejected():
    mesh = build_unit_square(1)
    with pytest.raises(ValueError):
        assemble_mass(mesh, build_bases(mesh), build_sigma_map(mesh), qdeg=5)


def test_scaling_follows_functional_units():
    c = 2.5
    m1 = build_unit_square(2)
    mc = Mesh.from_triangles(c * m1.vertices, m1.triangles)
    s1, sc = assemble_system(m1), assemble_system(mc)
    smap = s1.sigma_map
    order = np.zeros(s1.n_sigma)
    order[smap.local_to_global.ravel()] = np.tile(FUNCTIONAL_ORDERS, m1.n_triangles)
    D = sp.diags(c ** (-order))
    np.testing.assert_allclose(sc.M.toarray(), c**2 * (D @ s1.M @ D).toarray(), atol=1e-12 * abs(sc.M).max())
    np.testing.assert_allclose(sc.B.toarray(), (s1.B @ D).toarray(), atol=1e-12 * abs(sc.B).max())


def test_divdiv_matches_green_boundary_form():
    """(div div tau, l_r)_K = -sum_e (tau n, grad l_r)_e + sum_e (div tau . n, l_r)_e."""
    for corners in [((0, 0), (1, 0), (0, 1)), ((0.3, -0.2), (1.7, 0.4), (0.1, 1.1))]:
        mesh = lone(corners)
        basis = build_bases(mesh)
        geom = ElementGeometry.from_mesh(mesh)
        volume = local_divdiv(mesh, basis)[0]  # (3, 30)
        grads = np.linalg.inv(np.column_stack([np.ones(3), mesh.corners[0]]))[1:].T  # grad l_r rows
        rule = edge_rule(10)
        div = divergence(basis.coeffs, basis.scales)
        boundary = np.zeros((3, 30))
        for l in range(3):
            pts, n, length = geom.edge_points(l, rule.points)
            tau = evaluate_local(basis.coeffs, geom, pts)[0]  # (30, 3, q)
            dv = evaluate_local(div, geom, pts)[0]
            tn = np.stack([tau[:, 0] * n[0, 0] + tau[:, 1] * n[0, 1], tau[:, 1] * n[0, 0] + tau[:, 2] * n[0, 1]], 1)
            flux = dv[:, 0] * n[0, 0] + dv[:, 1] * n[0, 1]
            lam = np.zeros((3, len(rule.points)))
            lam[(l + 1) % 3] = 1 - rule.points
            lam[(l + 2) % 3] = rule.points
            w = rule.weights * length[0]
            boundary -= np.einsum("fcq,rc,q->rf", tn, grads, w)
            boundary += np.einsum("fq,rq,q->rf", flux, lam, w)
        np.testing.assert_allclose(volume, boundary, atol=1e-11 * np.abs(volume).max())
        # tested against v = 1: only the first two div-flux duals of each edge contribute
        ones = volume.sum(axis=0)
        expect = np.zeros(30)
        expect[[9 + 7 * l + j for l in range(3) for j in (4, 5)]] = 1.0
        np.testing.assert_allclose(ones, expect, atol=1e-11)


@pytest.mark.parametrize("mesh", [build_unit_square(1), build_unit_square(3), build_lshape(1), perturb(build_unit_square(4), 0.2, 0)])
def test_b_has_full_row_rank(mesh):
    B = assemble_system(mesh).B.toarray()
    sv = np.linalg.svd(B, compute_uv=False)
    assert np.sum(sv > 1e-8 * sv[0]) == B.shape[0]


def test_load_vectors():
    mesh = lone(((0.2, 0.1), (1.4, 0.3), (0.5, 0.9)))
    zero = assemble_load(mesh, example1(), f=lambda p: np.zeros(p.shape[:-1]))
    assert not np.any(zero)
    ones = assemble_load(mesh, example1(), f=lambda p: np.ones(p.shape[:-1]))
    np.testing.assert_allclose(ones, -mesh.areas[0] / 3, rtol=1e-14)
    assert example1().f(np.array([[0.5, 0.5]]))[0] == pytest.approx(5.0, abs=1e-13)


def test_load_uses_problem_data():
    mesh = build_unit_square(2)
    load = assemble_load(mesh, example1())
    rule = triangle_rule(14)
    pts = ElementGeometry.from_mesh(mesh).map_points(rule.points)
    f = example1().f(pts)
    lam = np.column_stack([1 - rule.points.sum(1), rule.points])
    expect = -np.einsum("tq,qr,q,t->tr", f, lam, rule.weights, mesh.dets).ravel()
    np.testing.assert_allclose(load, expect, rtol=1e-13)


def test_assembly_independent_of_thread_count(monkeypatch):
    import divdiv.parallel as par

    mesh = perturb(build_unit_square(4), 0.2, 1)
    monkeypatch.setattr(par, "CHUNK", 7)
    monkeypatch.setenv("DIVDIV_THREADS", "1")
    a = assemble_system(mesh, example1())
    monkeypatch.setenv("DIVDIV_THREADS", "4")
    b = assemble_system(mesh, example1())
    for x, y in [(a.M, b.M), (a.B, b.B)]:
        assert (x != y).nnz == 0
    np.testing.assert_array_equal(a.load, b.load)


def test_map_chunks_preserves_order(monkeypatch):
    monkeypatch.setenv("DIVDIV_THREADS", "3")
    out = map_chunks(lambda sl: np.arange(sl.start, sl.stop), 10, size=3)
    np.testing.assert_array_equal(np.concatenate(out), np.arange(10))


def test_matrix_market_export(tmp_path):
    s = assemble_system(build_unit_square(1))
    paths = export_matrix_market(s, tmp_path)
    M = scipy.io.mmread(str(paths[0]))
    B = scipy.io.mmread(str(paths[1]))
    assert abs(M - s.M).max() == 0 and abs(B - s.B).max() == 0


def test_u_map_shape_matches_b():
    mesh = build_lshape(1)
    s = assemble_system(mesh)
    assert s.B.shape == (build_u_map(mesh).n_dofs, build_sigma_map(mesh).n_dofs)
    B2 = assemble_divdiv(mesh, s.basis, s.sigma_map)
    assert abs(B2 - s.B).max() == 0
