import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import ellipse_perimeter, ellipse_radius_squared_integral
from wulffflow import (
    ConvexityError,
    GammaSpec,
    PolytopeBody,
    QUnavailableError,
    RandomBodySpec,
    SupportBody,
    af_slacks,
    aniso_area,
    aniso_curvatures,
    build_anisotropy,
    factorization_error,
    heintze_karcher_slack,
    iso_ratio,
    maclaurin_slack,
    make_grid,
    materialize_q,
    minkowski_residual,
    mixed_volumes,
    polytope_support,
    random_convex_body,
    steiner_fit_global,
    tau_cross_check,
    volume,
)
from wulffflow.bodies import dilate, ellipse_body, scaled_wulff, translate
from conftest import TRIG_TERMS

seeds = st.integers(0, 2**31 - 1)
L_ELL = ellipse_perimeter(2.0, 1.0)
ISO_ELL = L_ELL**2 / (4 * np.pi * 2 * np.pi)


def rbody(grid, seed):
    return random_convex_body(RandomBodySpec(seed=seed, n=grid.n), grid)


@pytest.fixture(scope="module")
def trig_q():
    return materialize_q(build_anisotropy(GammaSpec.trig(1.0, TRIG_TERMS), make_grid(1, 512)))


class TestCurvatures:
    @pytest.mark.parametrize("rho", [0.5, 1.0, 3.0])
    def test_scaled_wulff(self, trig512, ell2, rho):
        for f in (trig512, ell2):
            c = aniso_curvatures(scaled_wulff(f, rho), f)
            assert np.max(np.abs(c.kappa - 1 / rho)) <= 1e-8

    def test_isotropic_equals_euclidean(self, iso512, iso2):
        for f in (iso512, iso2):
            c = aniso_curvatures(rbody(f.grid, 5), f)
            assert np.allclose(c.kappa, c.lam, rtol=1e-12)

    def test_ellipse_vertex_curvature(self, iso512):
        c = aniso_curvatures(ellipse_body(iso512.grid, (2.0, 1.0)), iso512)
        assert c.kappa[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_elementary_means(self, ell2):
        c = aniso_curvatures(ellipse_body(ell2.grid, (1.5, 1.0, 0.7)), ell2)
        k1, k2 = c.kappa[:, 0], c.kappa[:, 1]
        assert np.allclose(c.E[:, 0], 1.0)
        assert np.allclose(c.E[:, 1], (k1 + k2) / 2, rtol=1e-13)
        assert np.allclose(c.E[:, 2], k1 * k2, rtol=1e-13)

    def test_nonconvex_raises(self, iso512):
        with pytest.raises(ConvexityError):
            aniso_curvatures(SupportBody(iso512.grid, 1 + 0.5 * np.cos(2 * iso512.grid.theta)), iso512)

    @given(seeds)
    def test_factorization(self, trig512, seed):
        assert factorization_error(rbody(trig512.grid, seed), trig512) <= 1e-10

    def test_factorization_n2(self, ell2):
        assert factorization_error(rbody(ell2.grid, 9), ell2) <= 1e-10

    @given(seeds, st.floats(0.2, 5.0))
    def test_scaling_law(self, trig512, seed, rho):
        b = rbody(trig512.grid, seed)
        c1 = aniso_curvatures(b, trig512).kappa
        c2 = aniso_curvatures(dilate(b, rho), trig512).kappa
        assert np.allclose(c2 * rho, c1, rtol=1e-8)
        v1, v2 = mixed_volumes(b, trig512).as_array(), mixed_volumes(dilate(b, rho), trig512).as_array()
        assert np.allclose(v2, v1 * rho ** np.arange(3), rtol=1e-8)

    @pytest.mark.parametrize("seed", range(10))
    def test_maclaurin_chain_n2(self, ell2, seed):
        c = aniso_curvatures(rbody(ell2.grid, seed), ell2)
        assert maclaurin_slack(c) >= -1e-12


class TestMixedVolumes:
    @pytest.mark.parametrize("rho", [0.5, 2.0])
    def test_scaled_wulff(self, trig512, ell2, rho):
        for f in (trig512, ell2):
            n = f.n
            V = mixed_volumes(scaled_wulff(f, rho, [0.1] * (n + 1)), f).as_array()
            ref = (n + 1) * rho ** np.arange(n + 2) * f.wulff_volume
            assert np.allclose(V, ref, rtol=1e-8)

    def test_square_steiner_path(self, iso512):
        V = mixed_volumes(polytope_support(PolytopeBody.unit_square(), iso512.grid), iso512)
        assert np.allclose(V.as_array(), [2 * np.pi, 4.0, 2.0], atol=1e-12)

    def test_ellipse(self, iso512):
        V = mixed_volumes(ellipse_body(iso512.grid, (2.0, 1.0)), iso512)
        assert V[2] == pytest.approx(4 * np.pi, abs=1e-10)
        assert V[1] == pytest.approx(L_ELL, abs=1e-10)
        assert V[0] == pytest.approx(2 * np.pi, abs=1e-12)

    @pytest.mark.parametrize("seed", range(5))
    def test_cross_pipeline(self, trig512, seed):
        b = rbody(trig512.grid, seed)
        quad = mixed_volumes(b, trig512).as_array()
        fit, _ = steiner_fit_global(b, trig512)
        assert np.allclose(fit.as_array(), quad, rtol=1e-6)

    def test_cross_pipeline_n2(self, ell2):
        b = rbody(ell2.grid, 4)
        fit, _ = steiner_fit_global(b, ell2)
        assert np.allclose(fit.as_array(), mixed_volumes(b, ell2).as_array(), rtol=1e-6)


class TestIsoRatio:
    def test_wulff(self, trig512, ell2):
        assert iso_ratio(scaled_wulff(trig512, 2.0), trig512, 1) == pytest.approx(1.0, abs=1e-10)
        for ell in (1, 2):
            assert iso_ratio(scaled_wulff(ell2, 0.7), ell2, ell) == pytest.approx(1.0, abs=1e-8)

    def test_ellipse_against_arclength(self, iso512):
        assert ISO_ELL == pytest.approx(1.1884, abs=1e-3)
        assert iso_ratio(ellipse_body(iso512.grid, (2.0, 1.0)), iso512, 1) == pytest.approx(ISO_ELL, rel=1e-12)

    @given(seeds, st.floats(0.1, 10.0))
    def test_scale_invariant_and_at_least_one(self, trig512, seed, rho):
        b = rbody(trig512.grid, seed)
        i1 = iso_ratio(b, trig512, 1)
        assert i1 >= 1 - 1e-12
        assert iso_ratio(dilate(b, rho), trig512, 1) == pytest.approx(i1, rel=1e-10)

    def test_bad_index(self, iso512):
        with pytest.raises(ValueError):
            iso_ratio(scaled_wulff(iso512), iso512, 2)


class TestMinkowski:
    def test_wulff_is_exact(self, trig512):
        assert minkowski_residual(scaled_wulff(trig512, 1.4), trig512, 1) == pytest.approx(0.0, abs=1e-12)

    @given(seeds)
    def test_random_bodies(self, trig512, seed):
        b = rbody(trig512.grid, seed)
        assert abs(minkowski_residual(b, trig512, 1)) <= 1e-8 * aniso_area(b, trig512)

    @given(seeds, st.tuples(st.floats(-0.5, 0.5), st.floats(-0.5, 0.5)))
    def test_translation_invariant(self, trig512, seed, v):
        b = rbody(trig512.grid, seed)
        area = aniso_area(b, trig512)
        assert abs(minkowski_residual(translate(b, v), trig512, 1)) <= 1e-8 * area

    def test_n2(self, ell2):
        b = rbody(ell2.grid, 2)
        area = aniso_area(b, ell2)
        for r in (1, 2):
            assert abs(minkowski_residual(b, ell2, r)) <= 1e-6 * area


class TestHeintzeKarcher:
    def test_wulff_equality(self, trig512):
        for v in ([0, 0], [0.4, -0.3]):
            assert abs(heintze_karcher_slack(scaled_wulff(trig512, 1.3, v), trig512)) <= 1e-8

    def test_ellipse_oracle(self, iso512):
        ref = ellipse_radius_squared_integral(2.0, 1.0) - 2 * (2 * np.pi)
        assert ref == pytest.approx(3.375 * np.pi, rel=1e-12)
        assert heintze_karcher_slack(ellipse_body(iso512.grid, (2.0, 1.0)), iso512) == pytest.approx(ref, rel=1e-10)

    @pytest.mark.parametrize("seed", range(100))
    def test_random_bodies(self, trig512, seed):
        assert heintze_karcher_slack(rbody(trig512.grid, 500 + seed), trig512) >= -1e-8


class TestAlexandrovFenchel:
    def test_wulff_equality(self, trig512, ell2):
        for f in (trig512, ell2):
            for _, s in af_slacks(scaled_wulff(f, 1.7), f):
                assert abs(s) <= 1e-8

    def test_ellipse(self, iso512):
        (triple, s), = af_slacks(ellipse_body(iso512.grid, (2.0, 1.0)), iso512)
        assert triple == (0, 1, 2)
        assert s == pytest.approx(np.log(ISO_ELL), rel=1e-10)

    def test_triples_n2(self, ell2):
        sl = af_slacks(rbody(ell2.grid, 1), ell2)
        assert [t for t, _ in sl] == [(0, 1, 2), (0, 1, 3), (0, 2, 3), (1, 2, 3)]
        assert min(s for _, s in sl) >= -1e-8

    @given(seeds)
    def test_random_bodies(self, trig512, seed):
        assert min(s for _, s in af_slacks(rbody(trig512.grid, seed), trig512)) >= -1e-8


class TestTau:
    def test_needs_q(self, trig512):
        with pytest.raises(QUnavailableError):
            tau_cross_check(scaled_wulff(trig512), trig512)

    def test_wulff(self, trig_q):
        assert tau_cross_check(scaled_wulff(trig_q, 1.5), trig_q) <= 1e-6

    def test_isotropic(self, iso512):
        f = materialize_q(iso512)
        assert tau_cross_check(rbody(f.grid, 3), f) <= 1e-8

    def test_random_anisotropic_refines(self, trig_q):
        # the gap falls spectrally until the finite-difference floor of Q (~1e-7)
        spec = RandomBodySpec(seed=11, n=1, modes=4)
        gaps = []
        for N in (16, 24, 32):
            f = materialize_q(build_anisotropy(GammaSpec.trig(1.0, TRIG_TERMS), make_grid(1, N)))
            gaps.append(tau_cross_check(random_convex_body(spec, f.grid), f))
        gaps.append(tau_cross_check(random_convex_body(spec, trig_q.grid), trig_q))
        assert gaps[-1] <= 1e-4
        assert gaps[0] > gaps[1] > gaps[2] > gaps[3]

    def test_ellipsoid_n2(self, grid2):
        f = materialize_q(build_anisotropy(GammaSpec.ellipse((1.2, 1.0, 0.9)), grid2))
        assert tau_cross_check(ellipse_body(grid2, (1.4, 1.0, 0.8)), f) <= 1e-4
        assert tau_cross_check(scaled_wulff(f, 2.0), f) <= 1e-6


def test_volume_matches_v_top(trig512):
    b = rbody(trig512.grid, 77)
    assert mixed_volumes(b, trig512)[2] == pytest.approx(2 * volume(b), rel=1e-14)
