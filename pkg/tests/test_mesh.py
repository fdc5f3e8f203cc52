import numpy as np
import pytest

from fpsi.errors import MeshIncompatibilityError
from fpsi.mesh import BIOT_TAGS, FLUID_TAGS, build_interface_map, build_reference_meshes


@pytest.mark.parametrize("nx,ny", [(1, 1), (2, 3), (4, 2)])
def test_every_boundary_edge_has_one_tag(nx, ny):
    fluid, biot, _ = build_reference_meshes(1.0, 1.0, nx, ny)
    for m, tags in ((fluid, FLUID_TAGS), (biot, BIOT_TAGS)):
        assert len(m.boundary_tags) == len(m.boundary_edges)
        assert set(m.boundary_tags) <= set(tags)
        assert len({tuple(sorted(e)) for e in m.boundary_edges.tolist()}) == len(m.boundary_edges)
        assert len(m.boundary_edges) == 2 * (nx + ny)


def test_unit_counts():
    fluid, biot, plate = build_reference_meshes(1.0, 1.0, 1, 1)
    assert fluid.n_vertices == 4 and biot.n_vertices == 4
    assert plate.n_vertices == 2 and plate.n_cells == 1


def test_two_by_two_counts():
    fluid, biot, plate = build_reference_meshes(1.0, 1.0, 2, 2)
    assert fluid.n_vertices == 9 and biot.n_vertices == 9
    assert len(build_interface_map(fluid, biot, plate)) == 3


def test_domains_covered():
    fluid, biot, plate = build_reference_meshes(2.0, 0.5, 4, 2)
    assert fluid.vertices[:, 0].min() == 0 and fluid.vertices[:, 0].max() == 2.0
    assert fluid.vertices[:, 1].min() == -0.5 and fluid.vertices[:, 1].max() == 0.0
    assert biot.vertices[:, 1].min() == 0.0 and biot.vertices[:, 1].max() == 0.5
    # cell areas sum to the rectangle area
    for m, area in ((fluid, 1.0), (biot, 1.0)):
        v = m.vertices[m.cells]
        e1, e2 = v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]
        a = 0.5 * np.abs(e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])
        assert np.isclose(a.sum(), area, rtol=1e-14)


def test_interface_coordinates_coincide():
    fluid, biot, plate = build_reference_meshes(2.0, 0.5, 4, 2)
    imap = build_interface_map(fluid, biot, plate)
    expected = np.array([0, 0.5, 1, 1.5, 2])
    assert np.array_equal(imap.x, expected)
    assert np.array_equal(fluid.vertices[imap.fluid_nodes, 0], expected)
    assert np.array_equal(biot.vertices[imap.biot_nodes, 0], expected)
    assert np.all(fluid.vertices[imap.fluid_nodes, 1] == 0) and np.all(biot.vertices[imap.biot_nodes, 1] == 0)


def test_single_element_endpoints_matched():
    imap = build_interface_map(*build_reference_meshes(1.0, 1.0, 1, 1))
    assert [t[0] for t in imap.triples()] == [0, 1]
    assert np.array_equal(imap.x, [0.0, 1.0])


def test_incompatible_meshes_rejected():
    f2, _, p2 = build_reference_meshes(1.0, 1.0, 2, 2)
    _, b3, _ = build_reference_meshes(1.0, 1.0, 3, 2)
    with pytest.raises(MeshIncompatibilityError):
        build_interface_map(f2, b3, p2)
