import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from surfeig.eigensolver import lowest_eigenpairs
from surfeig.estimator import (estimator_breakdown, geometric_bound, global_estimator,
                               local_estimator)
from surfeig.mesh import MeshError, TriMesh, make_octahedron, refine
from surfeig.validation import fit_rate


def test_octahedron_face_bound():
    m = make_octahedron()
    assert_allclose(geometric_bound(m.vertices[m.triangles[0]]), (np.sqrt(3) - 1) * 5,
                    rtol=1e-14)


def test_bound_zero_where_normals_agree():
    # tangent triangle touching the sphere at its first vertex
    p = np.array([[0.0, 0.0, 1.0], [0.1, 0.0, 1.0], [0.0, 0.1, 1.0]])
    from surfeig.estimator import _sphere_bound
    b = _sphere_bound(p, np.array([0.0, 0.0, 1.0]))
    assert b[0] == 0.0 and b[1] > 0.0


def test_bound_rejects_flipped_triangle():
    m = make_octahedron()
    with pytest.raises(MeshError):
        geometric_bound(m.vertices[m.triangles[0]][::-1])


def test_bound_decreases_under_refinement(octa_hierarchy):
    maxima = [max(geometric_bound(m.vertices[t]) for t in m.triangles)
              for m in octa_hierarchy.meshes[:4]]
    assert np.all(np.diff(maxima) < 0)


def test_constant_has_zero_estimator(octa_hierarchy):
    m = octa_hierarchy.meshes[2]
    b = estimator_breakdown(m, np.ones(m.num_vertices), 0.0)
    assert_allclose(b.local, 0.0, atol=1e-13)


def test_no_jump_inside_flat_faces():
    # flat refinement: each central child triangle has all edges inside one planar face
    m = refine(make_octahedron(), projector=None)
    u = m.vertices @ np.array([1.0, -2.0, 0.5])
    b = estimator_breakdown(m, u, 0.0)
    assert_allclose(b.jump[3::4], 0.0, atol=1e-14)
    assert np.all(b.jump[0::4] > 1e-3)


def test_terms_nonnegative_and_sum(octa_hierarchy, rng):
    m = octa_hierarchy.meshes[2]
    u = rng.standard_normal(m.num_vertices)
    b = estimator_breakdown(m, u, 6.0)
    for t in (b.volume, b.jump, b.geometric):
        assert np.all(t >= 0)
    assert_allclose(b.total ** 2, np.sum(b.local ** 2), rtol=1e-13)


def test_volume_term_exact_l2(octa_hierarchy):
    m = octa_hierarchy.meshes[1]
    u = m.vertices[:, 2]
    from surfeig.assembly import element_mass
    b = estimator_breakdown(m, u, 2.0)
    for T in range(3):
        tri = m.triangles[T]
        p = m.vertices[tri]
        l2 = u[tri] @ element_mass(p) @ u[tri]
        h = max(np.linalg.norm(p[i] - p[j]) for i, j in ((0, 1), (1, 2), (0, 2)))
        assert_allclose(b.volume[T], h ** 2 * 4.0 * l2, rtol=1e-13)


@settings(max_examples=20, deadline=None)
@given(st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.integers(0, 2 ** 31))
def test_homogeneity(c, seed):
    m = _MESH
    u = np.random.default_rng(seed).standard_normal(m.num_vertices)
    assert_allclose(estimator_breakdown(m, c * u, 2.0).total,
                    abs(c) * estimator_breakdown(m, u, 2.0).total, rtol=1e-12)


_MESH = refine(refine(make_octahedron()))


def test_permutation_invariance(rng):
    m = _MESH
    u = rng.standard_normal(m.num_vertices)
    perm = rng.permutation(m.num_vertices)
    inv = np.argsort(perm)
    m2 = TriMesh(m.vertices[perm], inv[m.triangles])
    assert_allclose(estimator_breakdown(m2, u[perm], 3.0).total,
                    estimator_breakdown(m, u, 3.0).total, rtol=1e-12)


def test_local_and_global():
    m = _MESH
    u = m.vertices[:, 0]
    b = estimator_breakdown(m, u, 2.0)
    assert_allclose(local_estimator(m, None, u, 2.0, 5), b.local[5])
    with pytest.raises(IndexError):
        local_estimator(m, None, u, 2.0, m.num_triangles)
    assert global_estimator(np.zeros(4)) == 0.0
    assert global_estimator([0.0, 3.0, 0.0]) == 3.0
    x = np.random.default_rng(0).random(1000)
    acc = 0.0
    for v in x:
        acc += v * v
    assert_allclose(global_estimator(x), np.sqrt(acc), rtol=1e-14)


def test_input_validation():
    with pytest.raises(ValueError):
        estimator_breakdown(_MESH, np.ones(3), 1.0)


def test_decay_rate(octa_hierarchy):
    samples = []
    for k in (2, 3, 4):
        e = lowest_eigenpairs(octa_hierarchy.forms[k], 4)
        samples.append((octa_hierarchy.dofs[k],
                        estimator_breakdown(octa_hierarchy.meshes[k], e.vectors[:, 1],
                                            e.values[1]).total))
    slope = -fit_rate(samples, skip_coarsest=False).rate
    assert -0.65 <= slope <= -0.35


def test_csv_export(tmp_path):
    b = estimator_breakdown(_MESH, _MESH.vertices[:, 1], 2.0)
    b.write_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "triangle,volume_sq,jump_sq,geometric_sq,eta_T"
    assert len(lines) == _MESH.num_triangles + 1
