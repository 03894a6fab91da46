import numpy as np
import pytest

from paretodiff import (
    DualUnboundedError,
    GuidanceConfig,
    baseline_direction,
    phi_switch,
    proud_direction,
    solve_dual,
    two_anchor_benchmark,
)
from paretodiff.oracles import grid_dual_value


def dual_m1_closed_form(eps, g, phi):
    """Independent one-constraint oracle: lambda = max(0, (phi - eps.g)/|g|^2)."""
    return max(0.0, (phi - float(eps @ g)) / float(g @ g))


class TestPhiSwitch:
    def test_active_branch_paper_hyperparams(self):
        cfg = GuidanceConfig(alpha=0.5, e_threshold=0.03)
        assert abs(phi_switch(0.1, cfg) - 0.05) < 1e-15

    def test_inactive_branch(self):
        cfg = GuidanceConfig(alpha=0.5, e_threshold=0.03)
        assert phi_switch(0.01, cfg) == -np.inf

    def test_boundary_is_strict(self):
        cfg = GuidanceConfig(alpha=0.5, e_threshold=0.03)
        assert phi_switch(0.03, cfg) == -np.inf

    def test_negative_norm_rejected(self):
        with pytest.raises(ValueError):
            phi_switch(-1.0, GuidanceConfig())


class TestConfigValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(alpha=0.0),
            dict(e_threshold=0.0),
            dict(gamma=-0.1),
            dict(fixed_lambda=-1.0),
            dict(method="nope"),
            dict(single_weights=(0.5, 0.6)),
            dict(single_weights=(-0.1, 1.1)),
            dict(diversity_cap=0.0),
        ],
    )
    def test_rejects(self, kwargs):
        with pytest.raises(ValueError):
            GuidanceConfig(**kwargs)

    def test_infinite_threshold_allowed(self):
        cfg = GuidanceConfig(e_threshold=np.inf)
        assert phi_switch(1e9, cfg) == -np.inf


class TestSolveDual:
    def test_single_constraint_active(self):
        eps = np.array([1.0, 0.0])
        g = np.array([[0.0, 1.0]])
        lam = solve_dual(eps, g, 0.5)
        assert abs(lam[0] - dual_m1_closed_form(eps, g[0], 0.5)) < 1e-12
        np.testing.assert_allclose(eps + lam @ g, [1.0, 0.5])

    def test_single_constraint_slack(self):
        eps = np.array([1.0, 1.0])
        g = np.array([[1.0, 0.0]])
        lam = solve_dual(eps, g, 0.5)
        assert lam[0] == 0.0
        assert dual_m1_closed_form(eps, g[0], 0.5) == 0.0

    def test_separable_coordinates(self):
        eps = np.array([1.0, 0.0, 0.0])
        g = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
        lam = solve_dual(eps, g, 0.3)
        np.testing.assert_allclose(lam, [0.3, 0.3], atol=1e-12)
        np.testing.assert_allclose(eps + lam @ g, [1.0, 0.3, 0.3])

    def test_kkt_battery(self):
        rng = np.random.default_rng(100)
        solved = 0
        for _ in range(500):
            m = int(rng.integers(1, 4))
            d = int(rng.integers(2, 4))
            eps = rng.normal(size=d)
            g = rng.normal(size=(m, d))
            phi = float(rng.uniform(0.05, 1.0))
            try:
                lam = solve_dual(eps, g, phi)
            except DualUnboundedError:
                continue
            solved += 1
            out = eps + lam @ g
            assert np.all(lam >= 0.0)
            assert np.all(g @ out >= phi - 1e-6)
            assert np.all(np.abs(lam * (g @ out - phi)) <= 1e-6)
            # stationarity holds by construction of out
            np.testing.assert_allclose(out, eps + lam @ g, atol=1e-9)
        assert solved >= 400

    def test_matches_grid_search(self):
        rng = np.random.default_rng(101)
        done = 0
        while done < 5:
            m = int(rng.integers(1, 3))
            d = int(rng.integers(2, 4))
            eps = rng.normal(size=d)
            g = rng.normal(size=(m, d))
            g += np.sign(g) * 0.5
            phi = float(rng.uniform(0.05, 0.5))
            try:
                lam = solve_dual(eps, g, phi)
            except DualUnboundedError:
                continue
            if np.any(lam > 9.0):
                continue
            gram = g @ g.T
            val = (
                -0.5 * float(lam @ gram @ lam)
                - float(lam @ (g @ eps))
                + phi * float(lam.sum())
                - 0.5 * float(eps @ eps)
            )
            assert abs(val - grid_dual_value(eps, g, phi)) <= 1e-4
            done += 1

    def test_unbounded_detected(self):
        g = np.array([[1.0, 0.0], [-1.0, 0.0]])
        with pytest.raises(DualUnboundedError):
            solve_dual(np.array([0.0, 1.0]), g, 0.5)

    def test_zero_gradient_with_positive_phi_unbounded(self):
        g = np.array([[0.0, 0.0]])
        with pytest.raises(DualUnboundedError):
            solve_dual(np.array([1.0, 0.0]), g, 0.5)

    def test_projected_ascent_large_m(self):
        rng = np.random.default_rng(102)
        eps = rng.normal(size=6)
        g = rng.normal(size=(5, 6))
        phi = 0.2
        lam = solve_dual(eps, g, phi)
        out = eps + lam @ g
        assert np.all(lam >= 0.0)
        assert np.all(g @ out >= phi - 1e-6)
        assert np.all(np.abs(lam * (g @ out - phi)) <= 1e-6)

    def test_infinite_phi_rejected(self):
        with pytest.raises(ValueError):
            solve_dual(np.zeros(2), np.ones((1, 2)), -np.inf)


class TestProudDirection:
    def test_zero_gradients_pass_through(self):
        cfg = GuidanceConfig()
        eps = np.array([0.3, -0.7])
        out = proud_direction(eps, np.zeros((2, 2)), cfg)
        assert out.phi == -np.inf
        assert out.mgd_norm == 0.0
        np.testing.assert_array_equal(out.direction, eps)
        np.testing.assert_array_equal(out.multipliers, 0.0)

    def test_infinite_threshold_degenerates_to_diffusion(self):
        cfg = GuidanceConfig(e_threshold=np.inf)
        rng = np.random.default_rng(0)
        for _ in range(20):
            eps = rng.normal(size=3)
            g = rng.normal(size=(2, 3))
            out = proud_direction(eps, g, cfg)
            assert out.phi == -np.inf
            np.testing.assert_array_equal(out.direction, eps)

    def test_benchmark_constraints_hold_off_segment(self):
        objset = two_anchor_benchmark(2)
        cfg = GuidanceConfig(alpha=0.5, e_threshold=0.03)
        rng = np.random.default_rng(1)
        for _ in range(100):
            x = rng.normal(size=2) * 1.5
            g = objset.grad(x)
            eps = rng.normal(size=2)
            out = proud_direction(eps, g, cfg)
            if np.isfinite(out.phi):
                assert np.all(g @ out.direction >= out.phi - 1e-6)

    def test_determinism(self):
        cfg = GuidanceConfig()
        eps = np.array([0.5, 1.0])
        g = np.array([[1.0, 0.2], [-0.3, 0.9]])
        a = proud_direction(eps, g, cfg)
        b = proud_direction(eps, g, cfg)
        assert np.array_equal(a.direction, b.direction)
        assert np.array_equal(a.multipliers, b.multipliers)


class TestBaselines:
    def test_dm_mmgd(self):
        cfg = GuidanceConfig(method="dm_mmgd", fixed_lambda=1.0)
        eps = np.array([1.0, 0.0])
        g = np.array([[0.0, 1.0]])
        np.testing.assert_allclose(baseline_direction(eps, g, cfg), [1.0, 1.0])

    def test_dm_single_weighted_sum(self):
        cfg = GuidanceConfig(method="dm_single", fixed_lambda=1.0, single_weights=(0.5, 0.5))
        eps = np.zeros(2)
        g = np.array([[2.0, 0.0], [0.0, 2.0]])
        np.testing.assert_allclose(baseline_direction(eps, g, cfg), [1.0, 1.0])

    def test_m_mgd_ignores_eps(self):
        cfg = GuidanceConfig(method="m_mgd")
        g = np.array([[1.0, 0.0], [0.0, 1.0]])
        out = baseline_direction(np.array([9.0, 9.0]), g, cfg)
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_mplus1_treats_eps_as_extra_objective(self):
        cfg = GuidanceConfig(method="mplus1_mgd")
        g = np.array([[1.0, 0.0]])
        eps = np.array([0.0, 1.0])
        out = baseline_direction(eps, g, cfg)
        np.testing.assert_allclose(out, [0.5, 0.5])

    def test_proud_rejected_here(self):
        with pytest.raises(ValueError):
            baseline_direction(np.zeros(2), np.ones((1, 2)), GuidanceConfig(method="proud"))
