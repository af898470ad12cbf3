import math

import numpy as np
import pytest

from finslerforms import builtins as bi
from finslerforms.errors import ConfigError, DomainError, NotPositiveDefinite, OutOfChart, ZeroVector
from finslerforms.jets import JetRequest, fd_partial
from finslerforms.metric import ChartSpec, FinslerStructure

from conftest import sample_points

FAMILIES = ["euclidean", "randers-torus", "riemannian-torus", "riemannian-sphere", "quartic-torus"]


class TestNormEvaluation:
    def test_euclidean_norm(self, euclidean):
        assert euclidean.F([0.1, 0.2], [3.0, 4.0]) == pytest.approx(5.0, abs=1e-14)

    def test_randers_shifted_norm(self, randers):
        assert randers.F([0.1, 0.2], [1.0, 0.0]) == pytest.approx(1.5, abs=1e-14)

    def test_sphere_equator_unit(self, sphere):
        assert sphere.F([math.pi / 2, 0.0], [0.0, 1.0]) == pytest.approx(1.0, abs=1e-14)

    def test_zero_vector_rejected(self, euclidean):
        with pytest.raises(ZeroVector):
            euclidean.F([0.1, 0.2], [0.0, 0.0])

    def test_out_of_chart_rejected(self, sphere):
        with pytest.raises(OutOfChart):
            sphere.F([-0.5, 0.0], [1.0, 0.0])

    def test_randers_positivity_guard(self):
        with pytest.raises(ConfigError, match="a-norm of b"):
            FinslerStructure.randers(a=[[1, 0], [0, 1]], b=[1.1, 0.0])

    def test_degenerate_riemannian_rejected(self):
        with pytest.raises(NotPositiveDefinite):
            FinslerStructure.riemannian([[1.0, 2.0], [2.0, 1.0]])


class TestSpherePoints:
    def test_normalize_euclidean(self, euclidean):
        z = euclidean.normalize_to_indicatrix([0.1, 0.2], [3.0, 4.0])
        assert np.allclose(z.y, [0.6, 0.8], atol=1e-14)

    def test_normalize_randers(self, randers):
        z = randers.normalize_to_indicatrix([0.1, 0.2], [1.0, 0.0])
        assert np.allclose(z.y, [2.0 / 3.0, 0.0], atol=1e-14)

    def test_normalize_idempotent(self, randers, rng):
        for z in sample_points(randers, 5):
            z2 = randers.normalize_to_indicatrix(z.x, z.y)
            assert np.max(np.abs(z2.y - z.y)) < 1e-12

    def test_constructor_renormalizes_small_drift(self, randers):
        z = randers.normalize_to_indicatrix([0.1, 0.2], [1.0, 0.4])
        z2 = randers.sphere_point(z.x, z.y * (1.0 + 5e-7))
        assert abs(randers.F(z2.x, z2.y) - 1.0) < 1e-10

    def test_constructor_rejects_far_points(self, randers):
        with pytest.raises(DomainError):
            randers.sphere_point([0.1, 0.2], [2.0, 0.0])


class TestHomogeneityAndEuler:
    def test_homogeneity_suite(self):
        """F is 1-homogeneous, g is 0-homogeneous and C is (-1)-homogeneous in y."""
        rng = np.random.default_rng(2)
        for name in FAMILIES:
            s = bi.get_metric(name)
            for z in bi.random_chart_points(rng, s, 20):
                x, y = list(z.x), list(z.y)
                F1 = s.F(x, y)
                g1 = s.fundamental_tensor((x, y)).data
                C1 = s.cartan_tensor((x, y)).data
                for lam in (0.5, 2.0, 7.0):
                    assert s.F(x, list(lam * np.asarray(y))) == pytest.approx(lam * F1, rel=1e-10)
                for lam in (0.5, 2.0):
                    ys = list(lam * np.asarray(y))
                    assert np.allclose(s.fundamental_tensor((x, ys)).data, g1, atol=1e-10)
                    assert np.allclose(s.cartan_tensor((x, ys)).data, C1 / lam, atol=1e-10)

    def test_euler_identities(self):
        rng = np.random.default_rng(3)
        for name in FAMILIES:
            s = bi.get_metric(name)
            for z in bi.random_chart_points(rng, s, 20):
                x, y = z.x, z.y
                F = s.F(x, y)
                g = s.fundamental_tensor((x, y)).data
                C = s.cartan_tensor((x, y)).data
                T = s.cartan_trace((x, y)).data
                ell = s.hilbert_form((x, y)).data
                assert abs(y @ g @ y - F * F) < 1e-10 * (1 + F * F)
                assert abs(ell @ y - F) < 1e-10 * (1 + F)
                assert np.max(np.abs(np.einsum("kij,k->ij", C, y))) < 1e-10
                assert abs(T @ y) < 1e-10


class TestTensorLayer:
    def test_riemannian_cartan_vanishes(self, riemannian_torus, sphere):
        for s in (riemannian_torus, sphere):
            for z in sample_points(s, 5):
                assert np.max(np.abs(s.cartan_tensor((z.x, z.y)).data)) < 1e-12
                assert np.max(np.abs(s.cartan_trace((z.x, z.y)).data)) < 1e-12

    def test_riemannian_metric_is_coefficient_matrix(self, riemannian_torus):
        for z in sample_points(riemannian_torus, 5):
            g1 = riemannian_torus.fundamental_tensor((z.x, z.y)).data
            g2 = riemannian_torus.fundamental_tensor((z.x, 2.5 * z.y)).data
            assert np.allclose(g1, g2, atol=1e-12)

    def test_inverse_metric_identity(self):
        rng = np.random.default_rng(8)
        for name in FAMILIES:
            s = bi.get_metric(name)
            for z in bi.random_chart_points(rng, s, 10):
                g = s.fundamental_tensor((z.x, z.y)).data
                gi = s.inverse_metric((z.x, z.y)).data
                assert np.max(np.abs(g @ gi - np.eye(s.dim))) < 1e-12

    def test_randers_metric_matches_fd_hessian(self, randers):
        """Half the finite-difference y-Hessian of F^2 reproduces the metric."""
        for z in sample_points(randers, 5):
            g = randers.fundamental_tensor((z.x, z.y)).data
            for i in range(2):
                for j in range(2):
                    orders = [0, 0]
                    orders[i] += 1
                    orders[j] += 1
                    fd = 0.5 * fd_partial(
                        JetRequest(randers.f2, (list(z.x), list(z.y)), ((0, 0), tuple(orders)))
                    )
                    assert abs(g[i, j] - fd) < 1e-7

    def test_randers_cartan_matches_fd(self, randers):
        for z in sample_points(randers, 3):
            C = randers.cartan_tensor((z.x, z.y)).data

            def g01(xs, ys):
                from finslerforms.metric import metric_components

                return metric_components(randers, xs, ys)[0][1]

            for k in range(2):
                orders = [0, 0]
                orders[k] = 1
                fd = 0.5 * fd_partial(JetRequest(g01, (list(z.x), list(z.y)), ((0, 0), tuple(orders))))
                assert abs(C[k, 0, 1] - fd) < 1e-7

    def test_cartan_totally_symmetric(self, randers, quartic):
        for s in (randers, quartic):
            for z in sample_points(s, 5):
                C = s.cartan_tensor((z.x, z.y)).data
                for perm in ((0, 2, 1), (1, 0, 2), (2, 1, 0)):
                    assert np.max(np.abs(C - np.transpose(C, perm))) < 1e-12

    def test_hilbert_form(self, euclidean, randers):
        ell = euclidean.hilbert_form(([0.1, 0.2], [3.0, 4.0])).data
        assert np.allclose(ell, [0.6, 0.8], atol=1e-14)
        for z in sample_points(randers, 5):
            ell = randers.hilbert_form((z.x, z.y)).data
            g = randers.fundamental_tensor((z.x, z.y)).data
            F = randers.F(z.x, z.y)
            assert np.max(np.abs(ell - g @ z.y / F)) < 1e-10

    def test_cartan_trace_contraction_oracle(self, randers):
        for z in sample_points(randers, 5):
            T = randers.cartan_trace((z.x, z.y)).data
            C = randers.cartan_tensor((z.x, z.y)).data
            gi = randers.inverse_metric((z.x, z.y)).data
            assert np.max(np.abs(T - np.einsum("ik,ikj->j", gi, C))) < 1e-12

    def test_variance_tags(self, randers):
        z = sample_points(randers, 1)[0]
        assert randers.fundamental_tensor((z.x, z.y)).variance == "ll"
        assert randers.inverse_metric((z.x, z.y)).variance == "uu"
        assert randers.cartan_tensor((z.x, z.y)).variance == "lll"


class TestChartSpec:
    def test_margin_validation(self):
        with pytest.raises(ConfigError):
            ChartSpec(bounds=((0.0, 1.0),), periodic=(False,), excluded_margin=(0.6,))

    def test_empty_interval(self):
        with pytest.raises(ConfigError):
            ChartSpec(bounds=((1.0, 1.0),), periodic=(True,))
