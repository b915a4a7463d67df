import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ellipse_curvature_fd, ellipse_perimeter
from wulffflow import (
    ConvexityError,
    PolytopeBody,
    RandomBodySpec,
    SupportBody,
    add_wulff,
    aniso_area,
    anisotropic_support_s,
    check_convex,
    distance_to_scaled_wulff,
    hausdorff_W,
    inner_outer_radius,
    make_grid,
    polytope_support,
    radii_matrix,
    random_convex_body,
    volume,
)
from wulffflow.bodies import dilate, ellipse_body, scaled_wulff, translate

seeds = st.integers(0, 2**31 - 1)


def random_body(grid, seed):
    return random_convex_body(RandomBodySpec(seed=seed, n=grid.n), grid)


class TestRadii:
    def test_disk(self, grid512):
        assert np.allclose(radii_matrix(SupportBody(grid512, np.full(512, 3.0))), 3.0, atol=1e-12)

    def test_ellipse_radius_at_vertex(self, grid512):
        R = radii_matrix(ellipse_body(grid512, (2.0, 1.0)))
        ref = 1.0 / ellipse_curvature_fd(2.0, 1.0, 0.0)
        assert R[0, 0, 0] == pytest.approx(0.5, abs=1e-10)
        assert R[0, 0, 0] == pytest.approx(ref, abs=1e-6)

    def test_symmetric_n2(self, grid2):
        R = radii_matrix(ellipse_body(grid2, (1.3, 1.0, 0.8)))
        assert np.array_equal(R, np.swapaxes(R, 1, 2))

    def test_check_convex_examples(self, grid512):
        t = grid512.theta
        assert check_convex(SupportBody(grid512, np.ones(512))).ok
        rep = check_convex(SupportBody(grid512, 1 + 0.3 * np.cos(2 * t)), margin=0.05)
        assert rep.ok and rep.eigenvalue == pytest.approx(0.1, abs=1e-10)
        rep = check_convex(SupportBody(grid512, 1 + 0.5 * np.cos(2 * t)), margin=0.05)
        assert not rep.ok and rep.eigenvalue == pytest.approx(-0.5, abs=1e-10)

    def test_volume_raises_on_nonconvex(self, grid512):
        with pytest.raises(ConvexityError):
            volume(SupportBody(grid512, 1 + 0.5 * np.cos(2 * grid512.theta)))


class TestVolumeArea:
    def test_disk_and_ellipse(self, grid512, iso512):
        assert volume(SupportBody(grid512, np.full(512, 2.0))) == pytest.approx(4 * np.pi, abs=1e-12)
        e = ellipse_body(grid512, (2.0, 1.0))
        assert volume(e) == pytest.approx(2 * np.pi, abs=1e-10)
        assert aniso_area(e, iso512) == pytest.approx(ellipse_perimeter(2.0, 1.0), abs=1e-10)
        assert aniso_area(SupportBody(grid512, np.full(512, 1.5)), iso512) == pytest.approx(3 * np.pi, abs=1e-12)

    def test_ellipsoid(self, grid2, iso2):
        e = ellipse_body(grid2, (1.2, 1.0, 0.9))
        assert volume(e) == pytest.approx(4 / 3 * np.pi * 1.08, rel=1e-6)

    def test_square_plus_disk(self, grid512, iso512):
        sq = polytope_support(PolytopeBody.unit_square(), grid512)
        assert volume(add_wulff(sq, iso512, 0.1)) == pytest.approx(1 + 0.4 + np.pi * 0.01, abs=1e-6)

    @pytest.mark.parametrize("rho", [0.5, 1.0, 2.0])
    def test_scaled_wulff_area(self, trig512, rho):
        W = scaled_wulff(trig512, rho)
        assert aniso_area(W, trig512) == pytest.approx(rho * 2 * trig512.wulff_volume, rel=1e-10)

    @given(seeds, st.tuples(st.floats(-1, 1), st.floats(-1, 1)))
    def test_translation_invariance(self, grid512, trig512, seed, v):
        b = random_body(grid512, seed)
        bt = translate(b, v)
        assert np.allclose(bt.h, b.h + grid512.dirs @ np.array(v), atol=1e-14)
        assert volume(bt) == pytest.approx(volume(b), abs=1e-10)
        assert aniso_area(bt, trig512) == pytest.approx(aniso_area(b, trig512), abs=1e-10)
        ev = lambda body: np.linalg.eigvalsh(radii_matrix(body))
        assert np.max(np.abs(ev(bt) - ev(b))) < 1e-10

    @given(seeds, st.floats(0.2, 5.0))
    def test_scaling(self, grid512, trig512, seed, rho):
        b = random_body(grid512, seed)
        assert volume(dilate(b, rho)) == pytest.approx(rho**2 * volume(b), rel=1e-8)
        assert aniso_area(dilate(b, rho), trig512) == pytest.approx(rho * aniso_area(b, trig512), rel=1e-8)

    def test_minkowski_sum_volume_is_quadratic(self, grid512, trig512):
        b = random_body(grid512, 3)
        eps = np.linspace(0.0, 1.0, 7)
        vols = [volume(add_wulff(b, trig512, e)) for e in eps]
        coef, res, *_ = np.polyfit(eps, vols, 2, full=True)
        assert np.max(np.abs(np.polyval(coef, eps) - vols)) <= 1e-9


class TestSupportS:
    def test_examples(self, trig512, iso512):
        assert np.allclose(anisotropic_support_s(scaled_wulff(trig512, 1.0), trig512), 1.0, atol=1e-12)
        assert np.allclose(anisotropic_support_s(scaled_wulff(trig512, 1.7), trig512), 1.7, atol=1e-12)
        e = ellipse_body(iso512.grid, (2.0, 1.0))
        assert np.allclose(anisotropic_support_s(e, iso512), e.h, atol=1e-14)


class TestRadius:
    def test_scaled_wulff(self, trig512):
        res = inner_outer_radius(scaled_wulff(trig512, 1.3), trig512)
        assert res.r == pytest.approx(1.3, abs=1e-9) and res.R == pytest.approx(1.3, abs=1e-9)
        assert np.allclose(res.inner_center, 0.0, atol=1e-8)

    def test_ellipse(self, iso512):
        res = inner_outer_radius(ellipse_body(iso512.grid, (2.0, 1.0)), iso512)
        assert res.r == pytest.approx(1.0, abs=1e-9)
        assert res.R == pytest.approx(2.0, abs=1e-9)

    def test_translated_body_moves_centres(self, trig512):
        b = translate(scaled_wulff(trig512, 0.8), [0.3, -0.2])
        res = inner_outer_radius(b, trig512)
        assert np.allclose(res.inner_center, [0.3, -0.2], atol=1e-8)
        assert np.allclose(res.outer_center, [0.3, -0.2], atol=1e-8)

    @pytest.mark.parametrize("seed", range(100))
    def test_bounds_on_random_bodies(self, grid512, trig512, seed):
        b = random_body(grid512, 1000 + seed)
        res = inner_outer_radius(b, trig512)
        vol, area, n = volume(b), aniso_area(b, trig512), 1
        upper = area**n / ((n + 1) ** (n - 1) * trig512.wulff_volume * vol ** (n - 1))
        assert vol / area <= res.r + 1e-8
        assert res.r <= res.R + 1e-12
        assert res.R <= upper + 1e-8

    def test_square(self, iso512):
        res = inner_outer_radius(polytope_support(PolytopeBody.unit_square(), iso512.grid), iso512)
        assert res.r == pytest.approx(0.5, abs=1e-12)
        assert res.R == pytest.approx(np.sqrt(0.5), abs=1e-12)


class TestHausdorff:
    def test_examples(self, trig512, iso512):
        W = scaled_wulff(trig512, 1.0)
        assert hausdorff_W(W, W, trig512) == 0.0
        assert hausdorff_W(W, scaled_wulff(trig512, 2.5), trig512) == pytest.approx(1.5, abs=1e-12)
        D = SupportBody(iso512.grid, np.ones(512))
        assert hausdorff_W(D, translate(D, [0.7, 0.0]), iso512) == pytest.approx(0.7, abs=1e-12)

    @given(seeds, seeds, seeds)
    def test_triangle_and_symmetry(self, grid512, trig512, s1, s2, s3):
        a, b, c = (random_body(grid512, s) for s in (s1, s2, s3))
        ab = hausdorff_W(a, b, trig512)
        assert ab == hausdorff_W(b, a, trig512)
        assert hausdorff_W(a, c, trig512) <= ab + hausdorff_W(b, c, trig512) + 1e-14


class TestDistanceToWulff:
    @given(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), st.floats(0.3, 3.0))
    def test_translation_invariance(self, trig512, v, rho):
        assert distance_to_scaled_wulff(scaled_wulff(trig512, rho, v), trig512, rho) <= 1e-8

    def test_concentric(self, trig512):
        assert distance_to_scaled_wulff(scaled_wulff(trig512, 1.0), trig512, 2.0) == pytest.approx(1.0, abs=1e-10)

    def test_ellipse_against_translation_grid(self, iso512):
        e = ellipse_body(iso512.grid, (2.0, 1.0))
        rho = np.sqrt(2.0)
        d = distance_to_scaled_wulff(e, iso512, rho)
        Z = iso512.grid.dirs
        xs = np.linspace(-0.3, 0.3, 61)
        brute = min(np.max(np.abs(e.h - rho - Z @ np.array([x, y]))) for x in xs for y in xs)
        assert 0 < d <= max(2 - rho, rho - 1) + 1e-12
        assert d <= brute + 1e-12
        assert d == pytest.approx(brute, abs=1e-9)


class TestPolytope:
    def test_support_examples(self, grid512):
        sq = PolytopeBody.unit_square()
        assert sq.support([[1.0, 0.0]])[0] == 1.0
        z = np.array([[1.0, 1.0]]) / np.sqrt(2)
        assert sq.support(z)[0] == pytest.approx(np.sqrt(2))
        tri = PolytopeBody([[0, 0], [1, 0], [0, 1]])
        assert tri.support([[0.0, -1.0]])[0] == 0.0
        hs = polytope_support(sq, grid512)
        assert hs.h[0] == 1.0 and hs.is_polytopal

    def test_rejects_degenerate_input(self):
        with pytest.raises(Exception):
            PolytopeBody([[0, 0], [1, 1], [2, 2]])
        with pytest.raises(ValueError):
            PolytopeBody([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]])

    def test_cube(self):
        cube = PolytopeBody([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)])
        assert len(cube.normals) == 6 and np.allclose(cube.facet_sizes, 1.0)
        assert len(cube.edges) == 12 and cube.volume == pytest.approx(1.0)


class TestSerialization:
    @given(seeds)
    def test_support_body_round_trip(self, grid512, seed):
        b = translate(random_body(grid512, seed), [0.1, 1 / 3])
        c = SupportBody.from_json(json.dumps(json.loads(b.to_json())))
        assert np.array_equal(c.h, b.h) and np.array_equal(c.offset, b.offset)

    def test_polytope_round_trip(self, rng):
        V = rng.normal(size=(7, 2))
        from scipy.spatial import ConvexHull

        P = PolytopeBody(V[ConvexHull(V).vertices])
        Q = PolytopeBody.from_dict(json.loads(json.dumps(P.to_dict())))
        assert np.array_equal(P.vertices, Q.vertices)

    def test_document_shape(self, grid512):
        d = SupportBody(grid512, np.ones(512)).to_dict()
        assert set(d) == {"n", "grid_size", "h", "offset"} and d["grid_size"] == 512
        assert PolytopeBody.unit_square().to_dict()["dim"] == 2
