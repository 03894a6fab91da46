import numpy as np
import pytest

from paretodiff import (
    AnchorObjective,
    ObjectiveSet,
    three_anchor_benchmark,
    two_anchor_benchmark,
)
from paretodiff.oracles import finite_difference_gradient


class TestEval:
    def test_paper_front_endpoints(self):
        objset = two_anchor_benchmark(2)
        np.testing.assert_allclose(objset.eval(np.array([1.0, 1.0])), [0.0, 0.25])
        np.testing.assert_allclose(objset.eval(np.array([0.5, 0.5])), [0.25, 0.0])

    def test_paper_midpoint_value(self):
        objset = two_anchor_benchmark(2)
        np.testing.assert_allclose(objset.eval(np.array([0.75, 0.75])), [0.0625, 0.0625])

    def test_zero_at_anchor(self):
        obj = AnchorObjective(np.array([0.2, -0.4, 1.0]))
        assert obj.value(np.array([0.2, -0.4, 1.0])) == 0.0

    def test_mean_not_sum(self):
        # doubling the mask size leaves the per-coordinate scale unchanged
        a2 = AnchorObjective(np.zeros(2))
        a4 = AnchorObjective(np.zeros(4))
        assert abs(a2.value(np.ones(2)) - a4.value(np.ones(4))) < 1e-15

    def test_masked_subset(self):
        obj = AnchorObjective(np.array([1.0, 2.0]), mask=np.array([0, 3]))
        x = np.array([2.0, 9.0, 9.0, 4.0])
        assert abs(obj.value(x) - ((1.0 + 4.0) / 2.0)) < 1e-15

    def test_dim_mismatch(self):
        objset = two_anchor_benchmark(2)
        with pytest.raises(ValueError):
            objset.eval(np.zeros(3))


class TestGrad:
    def test_one_dim_example(self):
        obj = AnchorObjective(np.array([1.0]), mask=np.array([0]))
        np.testing.assert_allclose(obj.grad(np.array([0.5])), [-1.0])

    def test_zero_at_minimum(self):
        obj = AnchorObjective(np.array([0.3, 0.7]))
        np.testing.assert_allclose(obj.grad(np.array([0.3, 0.7])), 0.0)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        worst = 0.0
        for _ in range(100):
            d = int(rng.integers(2, 6))
            k = int(rng.integers(1, d + 1))
            mask = rng.choice(d, size=k, replace=False)
            obj = AnchorObjective(rng.normal(size=k), mask)
            x = rng.normal(size=d)
            fd = finite_difference_gradient(obj.value, x)
            rel = np.linalg.norm(obj.grad(x) - fd) / max(np.linalg.norm(fd), 1e-12)
            worst = max(worst, rel)
        assert worst < 1e-6

    def test_off_mask_coordinates_zero(self):
        obj = AnchorObjective(np.array([1.0]), mask=np.array([2]))
        g = obj.grad(np.array([5.0, 5.0, 2.0, 5.0]))
        assert g[0] == g[1] == g[3] == 0.0


class TestSegmentFront:
    def test_sqrt_sum_invariant(self):
        objset = two_anchor_benchmark(2)
        a, b = np.ones(2), np.full(2, 0.5)
        for kappa in np.linspace(0.0, 1.0, 1000):
            f = objset.eval(kappa * (a - b) + b)
            assert abs(np.sqrt(f[0]) + np.sqrt(f[1]) - 0.5) < 1e-10

    def test_front_points_measure_zero(self):
        objset = two_anchor_benchmark(3)
        rng = np.random.default_rng(0)
        a, b = np.ones(3), np.full(3, 0.5)
        for _ in range(1000):
            x = rng.random() * (a - b) + b
            assert objset.front_distance(objset.eval(x)) <= 1e-8

    def test_known_zero_points(self):
        objset = two_anchor_benchmark(2)
        assert objset.front_distance(np.array([0.0625, 0.0625])) <= 1e-12
        assert objset.front_distance(np.array([0.0, 0.25])) <= 1e-12
        assert objset.front_distance(np.array([0.25, 0.0])) <= 1e-12

    def test_off_front_matches_discretization_oracle(self):
        objset = two_anchor_benchmark(2)
        front = objset.front.points(np.linspace(0.0, 1.0, 100_000))
        rng = np.random.default_rng(5)
        for _ in range(20):
            y = rng.random(2) * 0.4
            oracle = np.sqrt(((front - y[None, :]) ** 2).sum(axis=1)).min()
            got = objset.front_distance(y)
            assert got <= oracle + 1e-12
            assert abs(got - oracle) < 1e-6

    def test_ref_corner_distance(self):
        objset = two_anchor_benchmark(2)
        front = objset.front.points(np.linspace(0.0, 1.0, 100_000))
        y = np.array([0.25, 0.25])
        oracle = np.sqrt(((front - y[None, :]) ** 2).sum(axis=1)).min()
        assert abs(objset.front_distance(y) - oracle) < 1e-6


class TestTriangleFront:
    def test_paper_anchor_pattern_d3(self):
        objset = three_anchor_benchmark(3)
        np.testing.assert_allclose(objset.objectives[0].anchor, [0.0, 0.0, 0.0])
        np.testing.assert_allclose(objset.objectives[1].anchor, [0.5, 0.0, 0.0])
        np.testing.assert_allclose(objset.objectives[2].anchor, [0.5, 0.5, 0.0])

    def test_front_points_measure_zero(self):
        objset = three_anchor_benchmark(3)
        anchors = np.stack([o.anchor for o in objset.objectives])
        rng = np.random.default_rng(1)
        for _ in range(1000):
            bary = rng.dirichlet(np.ones(3))
            x = bary @ anchors
            assert objset.front_distance(objset.eval(x)) <= 1e-8

    def test_off_front_positive(self):
        objset = three_anchor_benchmark(3)
        d = objset.front_distance(np.array([0.2, 0.1, 0.2]))
        assert d > 1e-3

    def test_off_front_matches_dense_discretization(self):
        objset = three_anchor_benchmark(3)
        front = objset.front.discretize(100_000)
        rng = np.random.default_rng(9)
        for _ in range(10):
            y = rng.random(3) * 0.2
            oracle = np.sqrt(((front - y[None, :]) ** 2).sum(axis=1)).min()
            got = objset.front_distance(y)
            assert got <= oracle + 1e-12
            assert abs(got - oracle) < 1e-4


class TestValidation:
    def test_duplicate_mask_rejected(self):
        with pytest.raises(ValueError):
            AnchorObjective(np.zeros(2), mask=np.array([1, 1]))

    def test_mask_out_of_bounds(self):
        objs = [AnchorObjective(np.zeros(1), mask=np.array([5]))]
        with pytest.raises(ValueError):
            ObjectiveSet(objs, dim=3)

    def test_empty_set_rejected(self):
        with pytest.raises(ValueError):
            ObjectiveSet([], dim=2)

    def test_missing_front(self):
        objset = ObjectiveSet([AnchorObjective(np.zeros(2))], dim=2)
        with pytest.raises(ValueError):
            objset.front_distance(np.zeros(1))
