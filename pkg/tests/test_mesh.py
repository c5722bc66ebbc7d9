import numpy as np
import pytest

from splineot.mesh import (
    MeshError,
    StarDomain,
    StarShapeError,
    Triangulation,
    boundary_collocation,
    make_star_domain,
    parse_mesh,
    polyline_distance,
    ray_exit_point,
)
from splineot.shapes import (
    disk_domain,
    grid_mesh,
    lshape_domain,
    lshape_mesh,
    moon_domain,
    rect_domain,
    square_grid_mesh,
    star_polygon_mesh,
)


def two_triangle_square():
    verts = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)]
    tris = [(0, 1, 2), (0, 2, 3)]
    return Triangulation(np.array(verts), np.array(tris))


class TestTriangulation:
    def test_two_triangle_square_counts(self):
        m = two_triangle_square()
        assert m.n_vertices == 4
        assert m.n_triangles == 2
        assert len(m.interior_edges) == 1
        assert len(m.boundary_edges) == 4
        assert m.euler_characteristic() == 1

    def test_reorients_clockwise_triangles(self):
        verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)])
        m = Triangulation(verts, np.array([(0, 2, 1)]))
        assert m.areas[0] > 0

    def test_duplicate_vertices_rejected(self):
        verts = np.array([(0.0, 0.0), (1.0, 0.0), (1.0, 1e-13), (0.0, 1.0)])
        with pytest.raises(MeshError, match="duplicate"):
            Triangulation(verts, np.array([(0, 1, 3), (1, 2, 3)]))

    def test_degenerate_triangle_rejected(self):
        verts = np.array([(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (0.0, 1.0)])
        with pytest.raises(MeshError, match="degenerate"):
            Triangulation(verts, np.array([(0, 1, 2), (0, 2, 3)]))

    def test_nonmanifold_edge_rejected(self):
        verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.5, 1.0), (0.5, -1.0), (1.5, 0.5)])
        tris = np.array([(0, 1, 2), (0, 1, 3), (0, 1, 4)])
        with pytest.raises(MeshError, match="non-manifold"):
            Triangulation(verts, tris)

    def test_dangling_vertex_rejected(self):
        verts = np.array([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (5.0, 5.0)])
        with pytest.raises(MeshError, match="dangling"):
            Triangulation(verts, np.array([(0, 1, 2)]))

    def test_grid_mesh_euler_and_area(self):
        m = square_grid_mesh(-1.0, 1.0, 8)
        assert m.n_vertices == 81
        assert m.n_triangles == 128
        assert m.euler_characteristic() == 1
        assert m.areas.sum() == pytest.approx(4.0, rel=1e-12)

    def test_lshape_mesh_covers_domain(self):
        m = lshape_mesh(8)
        dom = lshape_domain()
        assert m.areas.sum() == pytest.approx(dom.area, rel=1e-9)

    def test_refine_uniform(self):
        m = two_triangle_square().refine_uniform()
        assert m.n_triangles == 8
        assert m.areas.sum() == pytest.approx(1.0, rel=1e-12)


class TestParseMesh:
    def test_roundtrip_81_vertex_mesh(self):
        from splineot.mesh import format_mesh

        m = square_grid_mesh(-1.0, 1.0, 8)
        node, ele = format_mesh(m)
        m2 = parse_mesh(node, ele)
        assert m2.n_vertices == 81
        assert m2.n_triangles == 128
        assert np.allclose(m2.vertices, m.vertices)

    def test_two_triangle_parse(self):
        node = "4 2 0 0\n1 0 0\n2 1 0\n3 1 1\n4 0 1\n"
        ele = "2 3 0\n1 1 2 3\n2 1 3 4\n"
        m = parse_mesh(node, ele)
        assert len(m.interior_edges) == 1
        assert len(m.boundary_edges) == 4

    def test_zero_based_index_rejected(self):
        node = "3 2 0 0\n1 0 0\n2 1 0\n3 0 1\n"
        ele = "1 3 0\n1 0 1 2\n"
        with pytest.raises(MeshError, match="out of range"):
            parse_mesh(node, ele)


class TestStarDomain:
    def test_unit_square_defaults(self):
        d = make_star_domain(np.array([(-1, -1), (1, -1), (1, 1), (-1, 1)], float))
        assert d.center == pytest.approx([0.0, 0.0])
        assert d.area == pytest.approx(4.0)

    def test_disk_area_matches_polygon_formula(self):
        d = disk_domain(0.0, 0.0, 1.0, 256)
        # regular n-gon area (n/2) sin(2 pi / n)
        assert d.area == pytest.approx(128 * np.sin(2 * np.pi / 256), rel=1e-12)
        assert abs(d.area - np.pi) < 1e-3

    def test_skewed_lshape_centroid_fails_star_check(self):
        poly = np.array([(0, 0), (4, 0), (4, 1), (1, 1), (1, 4), (0, 4)], float)
        with pytest.raises(StarShapeError):
            StarDomain(poly)
        # a center inside the kernel works
        d = StarDomain(poly, center=(0.5, 0.5))
        assert d.area == pytest.approx(7.0)

    def test_center_outside_rejected(self):
        poly = np.array([(0, 0), (1, 0), (1, 1), (0, 1)], float)
        with pytest.raises(StarShapeError, match="inside"):
            StarDomain(poly, center=(2.0, 2.0))

    def test_moon_is_star_shaped(self):
        moon_domain()  # constructor runs the 720-ray check


class TestRayExit:
    def test_disk_up(self):
        d = disk_domain(0.0, 0.0, 1.0, 256)
        p = ray_exit_point(d, np.pi / 2)
        assert p.x == pytest.approx(0.0, abs=1e-9)
        assert p.y == pytest.approx(1.0, abs=1e-3)

    def test_square_axis(self):
        d = rect_domain(-1, 1, -1, 1)
        p = ray_exit_point(d, 0.0)
        assert (p.x, p.y) == pytest.approx((1.0, 0.0), abs=1e-12)

    def test_square_corner_hit(self):
        d = rect_domain(-1, 1, -1, 1)
        p = ray_exit_point(d, np.pi / 4)
        assert (p.x, p.y) == pytest.approx((1.0, 1.0), abs=1e-9)

    def test_angle_roundtrip(self):
        d = moon_domain()
        for theta in np.linspace(0, 2 * np.pi, 37, endpoint=False):
            p = ray_exit_point(d, theta)
            back = np.arctan2(p.y - d.center[1], p.x - d.center[0]) % (2 * np.pi)
            assert back == pytest.approx(theta % (2 * np.pi), abs=1e-10)


class TestBoundaryCollocation:
    def test_two_triangle_square_corners(self):
        m = two_triangle_square()
        d = rect_domain(0, 1, 0, 1)
        pts, normals, thetas = boundary_collocation(d, m, 1)
        assert len(pts) == 4
        assert np.allclose(np.linalg.norm(normals, axis=1), 1.0)
        # all normals axis-aligned
        assert np.all(np.isclose(np.abs(normals), 0) | np.isclose(np.abs(normals), 1))

    def test_degree_two_counts(self):
        m = two_triangle_square()
        d = rect_domain(0, 1, 0, 1)
        pts, normals, _ = boundary_collocation(d, m, 2)
        assert len(pts) == 8

    def test_points_on_boundary(self):
        m = lshape_mesh(4)
        d = lshape_domain()
        pts, normals, _ = boundary_collocation(d, m, 5)
        assert polyline_distance(pts, d.boundary).max() <= 1e-9
        # outward: stepping along the normal leaves the domain
        probe = pts + 1e-6 * normals
        assert not d.contains(probe[:, 0], probe[:, 1]).any()


class TestStarPolygonMesh:
    def test_disk_mesh_conforms(self):
        d = disk_domain(0.0, 0.0, 1.0, 64)
        m = star_polygon_mesh(d, rings=5)
        assert m.euler_characteristic() == 1
        assert m.areas.sum() == pytest.approx(d.area, rel=1e-9)

    def test_area_sum_matches_domain(self):
        d = moon_domain()
        m = star_polygon_mesh(d, rings=6)
        assert m.areas.sum() == pytest.approx(d.area, rel=1e-9)
