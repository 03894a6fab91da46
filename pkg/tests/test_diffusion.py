import numpy as np
import pytest

from paretodiff import (
    GaussianMixtureManifold,
    NoiseSchedule,
    eps_star,
    log_density,
    make_linear_schedule,
    noised_score,
)
from paretodiff.diffusion import log_density_batch


def cumprod_oracle(betas):
    out = []
    acc = 1.0
    for b in betas:
        acc *= 1.0 - b
        out.append(acc)
    return out


class TestSchedule:
    def test_single_step(self):
        s = make_linear_schedule(1, 0.1, 0.1, 1.0)
        assert s.betas.tolist() == [0.1]
        assert s.alphas_bar.tolist() == [0.9]

    def test_two_steps(self):
        s = make_linear_schedule(2, 0.1, 0.2, 1.0)
        np.testing.assert_allclose(s.betas, [0.1, 0.2])
        np.testing.assert_allclose(s.alphas_bar, [0.9, 0.72])

    def test_ddpm_range_cumprod_oracle(self):
        s = make_linear_schedule(1000, 1e-4, 0.02, 1.0)
        oracle = cumprod_oracle(np.linspace(1e-4, 0.02, 1000))
        np.testing.assert_allclose(s.alphas_bar, oracle, rtol=1e-13)
        assert abs(s.alphas_bar[-1] - 4.04e-5) < 1e-6

    def test_step_sizes_annealed(self):
        s = make_linear_schedule(100, 1e-3, 0.1, 0.5)
        np.testing.assert_allclose(s.step_sizes, 0.5 * (1.0 - s.alphas_bar))
        assert np.all(s.step_sizes > 0)
        assert np.all(np.diff(s.step_sizes) > 0)  # more noise, larger steps

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(t_steps=0),
            dict(t_steps=10, beta_min=0.0),
            dict(t_steps=10, beta_min=0.3, beta_max=0.2),
            dict(t_steps=10, beta_min=0.2, beta_max=0.2),
            dict(t_steps=10, beta_max=1.0),
            dict(t_steps=10, step_scale=0.0),
        ],
    )
    def test_rejects_bad_inputs(self, kwargs):
        with pytest.raises(ValueError):
            make_linear_schedule(**kwargs)

    def test_schedule_invariant_validation(self):
        with pytest.raises(ValueError):
            NoiseSchedule(betas=[0.2, 0.1], alphas_bar=[0.8, 0.72], step_sizes=[0.1, 0.1])
        with pytest.raises(ValueError):
            NoiseSchedule(betas=[0.1, 0.2], alphas_bar=[0.9, 0.72], step_sizes=[0.1, 0.0])

    def test_t_out_of_range(self):
        s = make_linear_schedule(10)
        with pytest.raises(ValueError):
            s.alpha_bar(0)
        with pytest.raises(ValueError):
            s.eta(11)


class TestManifoldValidation:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(ValueError):
            GaussianMixtureManifold([0.5, 0.6], [[0.0], [1.0]], [1.0, 1.0])

    def test_stdevs_positive(self):
        with pytest.raises(ValueError):
            GaussianMixtureManifold([1.0], [[0.0]], [0.0])

    def test_dim_consistency(self):
        with pytest.raises(ValueError):
            GaussianMixtureManifold([0.5, 0.5], [[0.0, 1.0]], [1.0, 1.0])


class TestNoisedScore:
    def test_standard_normal_any_t(self):
        # unit-variance component: the noised marginal stays standard normal
        model = GaussianMixtureManifold([1.0], [[0.0, 0.0]], [1.0])
        sched = make_linear_schedule(100)
        for t in (1, 37, 100):
            x = np.array([0.3, -2.0])
            np.testing.assert_allclose(noised_score(model, x, t, sched), -x, atol=1e-12)

    def test_near_dirac_component(self):
        model = GaussianMixtureManifold([1.0], [[2.0, -1.0]], [1e-12])
        sched = make_linear_schedule(50)
        t = 20
        ab = sched.alpha_bar(t)
        x = np.array([0.5, 0.5])
        expected = -(x - np.sqrt(ab) * np.array([2.0, -1.0])) / (1.0 - ab)
        np.testing.assert_allclose(noised_score(model, x, t, sched), expected, rtol=1e-9)

    def test_symmetric_mixture_zero_at_origin(self):
        model = GaussianMixtureManifold([0.5, 0.5], [[1.0, 0.0], [-1.0, 0.0]], [0.3, 0.3])
        sched = make_linear_schedule(10)
        np.testing.assert_allclose(noised_score(model, np.zeros(2), 5, sched), 0.0, atol=1e-14)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        model = GaussianMixtureManifold(
            [0.3, 0.5, 0.2], rng.normal(size=(3, 2)), [0.4, 0.9, 1.5]
        )
        sched = make_linear_schedule(400)

        def noised_logpdf(x, ab):
            # independent reimplementation of the noised mixture log-density
            centers = np.sqrt(ab) * model.means
            var = (1.0 - ab) + ab * model.stdevs**2
            comps = [
                np.log(w) - np.log(2 * np.pi * v) - ((x - c) ** 2).sum() / (2 * v)
                for w, c, v in zip(model.weights, centers, var)
            ]
            peak = max(comps)
            return peak + np.log(sum(np.exp(c - peak) for c in comps))

        h = 1e-5
        worst = 0.0
        for _ in range(100):
            x = rng.normal(scale=2.0, size=2)
            t = int(rng.integers(1, 401))
            ab = sched.alpha_bar(t)
            fd = np.array(
                [
                    (noised_logpdf(x + h * e, ab) - noised_logpdf(x - h * e, ab)) / (2 * h)
                    for e in np.eye(2)
                ]
            )
            an = noised_score(model, x, t, sched)
            worst = max(worst, np.linalg.norm(an - fd) / max(np.linalg.norm(fd), 1e-12))
        assert worst < 1e-5

    def test_high_noise_limit_is_standard_normal(self):
        rng = np.random.default_rng(3)
        model = GaussianMixtureManifold([0.4, 0.6], [[0.5, 0.5], [-1.0, 0.2]], [0.1, 0.2])
        sched = make_linear_schedule(1000)  # alpha_bar_T ~ 4e-5 < 1e-4
        assert sched.alpha_bar(1000) < 1e-4
        for _ in range(20):
            x = rng.normal(size=2)
            assert np.linalg.norm(noised_score(model, x, 1000, sched) + x) < 1e-2

    def test_rejects_bad_inputs(self):
        model = GaussianMixtureManifold([1.0], [[0.0, 0.0]], [1.0])
        sched = make_linear_schedule(10)
        with pytest.raises(ValueError):
            noised_score(model, np.zeros(3), 5, sched)
        with pytest.raises(ValueError):
            noised_score(model, np.zeros(2), 11, sched)


class TestEpsStar:
    def test_standard_normal_direction(self):
        model = GaussianMixtureManifold([1.0], [[0.0]], [1.0])
        sched = make_linear_schedule(100)
        t = 40
        x = np.array([1.7])
        expected = np.sqrt(1.0 - sched.alpha_bar(t)) * x
        np.testing.assert_allclose(eps_star(model, x, t, sched), expected, rtol=1e-12)

    def test_dirac_closed_form(self):
        # custom schedule hitting alpha_bar = 0.75 exactly
        sched = NoiseSchedule([0.25], [0.75], [0.1])
        mu = np.array([1.0, -2.0])
        model = GaussianMixtureManifold([1.0], [mu], [1e-12])
        x = np.array([0.4, 0.4])
        expected = (x - np.sqrt(0.75) * mu) / np.sqrt(0.25)
        np.testing.assert_allclose(eps_star(model, x, 1, sched), expected, rtol=1e-9)

    def test_zero_at_mode(self):
        model = GaussianMixtureManifold([1.0], [[0.7, -0.3]], [0.5])
        sched = make_linear_schedule(60)
        t = 25
        mode = np.sqrt(sched.alpha_bar(t)) * np.array([0.7, -0.3])
        np.testing.assert_allclose(eps_star(model, mode, t, sched), 0.0, atol=1e-13)


class TestLogDensity:
    def test_standard_normal_at_mode(self):
        model = GaussianMixtureManifold([1.0], [[0.0]], [1.0])
        assert abs(log_density(model, np.zeros(1)) - (-0.5 * np.log(2 * np.pi))) < 1e-12

    def test_far_point_finite(self):
        model = GaussianMixtureManifold([1.0], [[0.0, 0.0]], [1.0])
        val = log_density(model, np.array([100.0, 0.0]))
        assert np.isfinite(val) and val < -1000

    def test_log_space_stability_far_out(self):
        model = GaussianMixtureManifold([0.5, 0.5], [[0.0, 0.0], [1.0, 1.0]], [0.01, 0.02])
        vals = log_density_batch(model, np.array([[1e3, -1e3], [-1e3, 1e3]]))
        assert np.all(np.isfinite(vals))

    def test_symmetric_components_equal_at_means(self):
        model = GaussianMixtureManifold([0.5, 0.5], [[1.0, 0.0], [-1.0, 0.0]], [0.3, 0.3])
        a = log_density(model, np.array([1.0, 0.0]))
        b = log_density(model, np.array([-1.0, 0.0]))
        assert abs(a - b) < 1e-12

    def test_dim_mismatch(self):
        model = GaussianMixtureManifold([1.0], [[0.0, 0.0]], [1.0])
        with pytest.raises(ValueError):
            log_density(model, np.zeros(3))
