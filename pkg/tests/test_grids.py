import numpy as np
import pytest

from empm.grids import (build_radial_quadrature, default_polar_grid,
                        degree_cap, sphere_grid)


def composite_oracle(f, K, n=10000):
    # dense composite trapezoid oracle for int_0^K f(k) dk
    k = np.linspace(0.0, K, n)
    return np.trapezoid(f(k), k)


class TestRadialQuadrature:
    def test_one_point_rule(self):
        # frozen: single Gaussian node for weight k^2 on (0,1) is 3/4,
        # weight is int_0^1 k^2 dk = 1/3
        rq = build_radial_quadrature(1.0, 1)
        assert rq.nodes[0] == pytest.approx(0.75, abs=1e-14)
        assert rq.weights3d[0] == pytest.approx(1.0 / 3.0, abs=1e-14)

    @pytest.mark.parametrize("K,R", [(1.0, 1), (5.0, 7), (48.0, 48)])
    def test_weight_sums(self, K, R):
        rq = build_radial_quadrature(K, R)
        assert np.sum(rq.weights3d) == pytest.approx(K**3 / 3.0, rel=1e-12)
        assert np.sum(rq.weights2d) == pytest.approx(K**2 / 2.0, rel=1e-12)

    def test_gaussian_integrand(self):
        rq = build_radial_quadrature(48.0, 48)
        g = lambda k: np.exp(-((k / 10.0) ** 2))
        got = np.sum(g(rq.nodes) * rq.weights3d)
        want = composite_oracle(lambda k: g(k) * k**2, 48.0, 200001)
        assert got == pytest.approx(want, rel=1e-6)

    def test_2d_weights_gaussian(self):
        rq = build_radial_quadrature(48.0, 48)
        g = lambda k: np.exp(-((k / 10.0) ** 2))
        got = np.sum(g(rq.nodes) * rq.weights2d)
        want = composite_oracle(lambda k: g(k) * k, 48.0, 200001)
        assert got == pytest.approx(want, rel=1e-6)

    def test_positivity_and_ordering(self):
        for K, R in [(1.0, 1), (12.0, 12), (48.0, 48), (48.0, 64)]:
            rq = build_radial_quadrature(K, R)
            assert np.all(np.diff(rq.nodes) > 0)
            assert rq.nodes[0] > 0 and rq.nodes[-1] < K
            assert np.all(rq.weights3d > 0)
            assert np.all(rq.weights2d > 0)

    def test_invalid_args(self):
        with pytest.raises(ValueError):
            build_radial_quadrature(-1.0, 4)
        with pytest.raises(ValueError):
            build_radial_quadrature(4.0, 0)


class TestPolarGrid:
    def test_defaults(self):
        g = default_polar_grid(48.0)
        assert g.R == 48
        assert g.Q == 98
        assert g.dpsi == pytest.approx(2 * np.pi / 98)

    def test_q_values_order(self):
        g = default_polar_grid(3.0)  # Q = 8
        assert list(g.q_values) == [0, 1, 2, 3, -4, -3, -2, -1]


class TestSphereGrid:
    def test_weight_sum(self):
        for L in [0, 1, 5, 51]:
            g = sphere_grid(L)
            assert np.sum(g.weights) == pytest.approx(4 * np.pi, rel=1e-12)
            assert np.all(g.weights > 0)

    def test_counts(self):
        g = sphere_grid(10)
        assert g.n_theta == 11
        assert g.n_phi == 22
        assert g.n_nodes == 242

    def test_degree_cap(self):
        assert degree_cap(1.0) == 3
        assert degree_cap(47.3) == 50

    def test_directions_unit(self):
        d = sphere_grid(6).directions()
        assert np.allclose(np.linalg.norm(d, axis=-1), 1.0)
