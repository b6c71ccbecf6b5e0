import numpy as np
import pytest

from semio.mesh import (HexMesh, InvertedElementError, MeshError, box_mesh, build_dofmap,
                        deform_affine, load_mesh, permute_elements, save_mesh)
from semio.operator import geometric_factors
from semio.basis import build_basis
from semio.solver import SemSystem, node_coordinates


@pytest.mark.parametrize("ext,E,V", [((1, 1, 1), 1, 8), ((2, 2, 2), 8, 27), ((4, 4, 4), 64, 125)])
def test_box_counts(ext, E, V):
    m = box_mesh(*ext)
    assert m.num_elements == E and m.num_vertices == V
    assert all(len(set(c)) == 8 for c in m.elements.tolist())


def test_box_corner_order_is_lexicographic():
    m = box_mesh(1, 1, 1)
    expected = [[a, b, d] for d in (0, 1) for b in (0, 1) for a in (0, 1)]
    np.testing.assert_array_equal(m.corners()[0], expected)


@pytest.mark.parametrize("ext", [(0, 1, 1), (1, -2, 1)])
def test_box_rejects_nonpositive_extent(ext):
    with pytest.raises(MeshError):
        box_mesh(*ext)


def test_deform_identity_is_noop():
    m = box_mesh(2, 3, 1)
    d = deform_affine(m, np.eye(3))
    np.testing.assert_array_equal(d.vertices, m.vertices)
    np.testing.assert_array_equal(d.elements, m.elements)


def test_deform_scale_multiplies_jacobian_by_eight():
    b = build_basis(3)
    m = box_mesh(2, 2, 2)
    g0 = geometric_factors(m, b)
    g1 = geometric_factors(deform_affine(m, 2 * np.eye(3)), b)
    np.testing.assert_allclose(g1.jw, 8 * g0.jw, rtol=1e-14)


@pytest.mark.parametrize("A", [np.diag([1.0, 1.0, -1.0]), np.zeros((3, 3))])
def test_deform_rejects_inversion(A):
    with pytest.raises(InvertedElementError):
        deform_affine(box_mesh(1, 1, 1), A)


def test_shear_gives_off_diagonal_factors():
    b = build_basis(3)
    m = deform_affine(box_mesh(2, 2, 2), [[1, 0.3, 0], [0, 1, 0], [0, 0, 1]])
    gf = geometric_factors(m, b)
    assert np.all(np.abs(gf.g[..., 1]) > 0)


def test_dofmap_single_element():
    dm = build_dofmap(box_mesh(1, 1, 1), 2)
    assert dm.n == 27 and dm.n_unique == 27
    assert np.all(dm.multiplicity == 1)


def test_dofmap_two_elements_order_one():
    dm = build_dofmap(box_mesh(2, 1, 1), 1)
    assert dm.n == 16 and dm.n_unique == 12
    assert np.count_nonzero(dm.multiplicity == 2) == 8


def test_dofmap_4cube_order7():
    assert build_dofmap(box_mesh(4, 4, 4), 7).n_unique == 29**3 == 24389


@pytest.mark.parametrize("ext", [(1, 1, 1), (2, 1, 3), (3, 3, 2), (4, 4, 4)])
@pytest.mark.parametrize("N", [1, 2, 4])
def test_dofmap_invariants(ext, N):
    ex, ey, ez = ext
    dm = build_dofmap(box_mesh(*ext), N)
    assert dm.n_unique == (ex * N + 1) * (ey * N + 1) * (ez * N + 1)
    interior = max(ex * N - 1, 0) * max(ey * N - 1, 0) * max(ez * N - 1, 0)
    assert dm.n_boundary_unique == dm.n_unique - interior
    assert abs(dm.inv_mult.sum() - dm.n_unique) < 1e-9
    assert set(np.unique(dm.multiplicity).tolist()) <= {1, 2, 4, 8}
    # boundary flag is a property of the global point
    flags = {}
    for g, f in zip(dm.global_id.tolist(), dm.dirichlet_mask.tolist()):
        assert flags.setdefault(g, f) == f


def test_dofmap_shared_ids_iff_coordinates_coincide():
    m = box_mesh(2, 2, 1)
    dm = build_dofmap(m, 2)
    xyz = node_coordinates(SemSystem.build(m, 2)).reshape(-1, 3)
    keys = [tuple(np.round(c, 12)) for c in xyz]
    by_coord = {}
    for k, g in zip(keys, dm.global_id.tolist()):
        assert by_coord.setdefault(k, g) == g
    assert len(by_coord) == dm.n_unique


def test_gather_volume_bounded_by_model():
    N = 3
    dm = build_dofmap(box_mesh(3, 3, 3), N)
    p = N + 1
    assert np.count_nonzero(dm.multiplicity > 1) <= dm.n * (p**3 - (N - 1) ** 3) / p**3


def test_permutation_keeps_numbering_per_element():
    m = box_mesh(3, 2, 2)
    pm = permute_elements(m, np.random.default_rng(1))
    dm, dp = build_dofmap(m, 2), build_dofmap(pm, 2)
    assert dm.n_unique == dp.n_unique
    assert sorted(map(tuple, dm.global_id.reshape(12, -1).tolist())) == \
        sorted(map(tuple, dp.global_id.reshape(12, -1).tolist()))


def test_json_round_trip(tmp_path):
    m = deform_affine(box_mesh(2, 1, 2), [[1, 0.2, 0], [0, 1, 0.1], [0, 0, 2]], [1, 0, 0])
    path = tmp_path / "mesh.json"
    save_mesh(m, path)
    back = load_mesh(path)
    np.testing.assert_array_equal(back.vertices, m.vertices)
    np.testing.assert_array_equal(back.elements, m.elements)
    assert back.shape == m.shape


def test_json_rejects_unknown_format():
    with pytest.raises(MeshError):
        HexMesh.from_dict({"format": "other"})


def test_dofmap_rejects_non_lattice_connectivity():
    m = box_mesh(2, 1, 1)
    bad = HexMesh(m.vertices, m.elements[:, ::-1].copy(), m.shape, m.bbox)
    with pytest.raises(MeshError):
        build_dofmap(bad, 2)
