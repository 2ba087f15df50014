"""Estimation tests: slope sampling for the Lipschitz constants, the
perturbed-loss gap estimate, and the analytic gap bound."""

import math

import numpy as np
import pytest

from sparseopt.constraint import BoxParams, GroupPartition
from sparseopt.estimation import delta_bound, estimate_delta, estimate_l0_q
from sparseopt.oracles import AbsSum, MaxAffine, Quadratic, StochasticProblem, builtin_problem
from sparseopt.smoothing import StreamTree


class ConstantProblem(StochasticProblem):
    def __init__(self, d=3, value=0.0):
        self.d = d
        self.kappa = 1.0
        self.L0 = 0.0
        self.Q = 0.0
        self._value = value

    def value(self, w, xi):
        return self._value

    def bp_gradient(self, w, xi):
        return np.zeros(self.d)


class TestEstimateL0Q:
    def test_linear_recovers_row_norm(self):
        p = MaxAffine(a=[[0.6, -0.8, 0.0, 0.0]], b=[0.1], kappa=1.0)
        est = estimate_l0_q(p, 1.0, StreamTree(7), q=250)
        assert est.L0_hat <= 1.0 + 1e-12
        assert est.L0_hat == pytest.approx(1.0, rel=0.05)

    def test_constant_function_gives_zero(self):
        est = estimate_l0_q(ConstantProblem(value=2.5), 1.0, StreamTree(3), q=20)
        assert est.L0_hat == 0.0
        assert est.Q_hat == 0.0

    def test_abs_sum_slopes_bounded_and_meaningful(self):
        p = AbsSum(d=4, c=1.0, kappa=1.0)
        est = estimate_l0_q(p, 1.0, StreamTree(11), q=250)
        assert all(s <= 2.0 + 1e-12 for s in est.per_xi_slopes)
        assert est.L0_hat >= 1.0

    def test_underestimation_direction(self):
        # Sampled slopes can never exceed the true constant, per sample.
        for seed in range(5):
            p = Quadratic(d=3, wstar=0.1, kappa=1.0)
            est = estimate_l0_q(p, 1.0, StreamTree(seed), q=60)
            for s in est.per_xi_slopes:
                assert s <= p.L0 * (1 + 1e-12)

    def test_monotonicity_in_q(self):
        p = AbsSum(d=3, c=1.0, noise=0.5, kappa=1.0)
        small = estimate_l0_q(p, 1.0, StreamTree(9), q=40)
        large = estimate_l0_q(p, 1.0, StreamTree(9), q=80)
        # shared xi prefix sees a superset of pairs
        for s_small, s_large in zip(small.per_xi_slopes, large.per_xi_slopes):
            assert s_large >= s_small - 1e-15

    def test_seed_determinism(self):
        p = Quadratic(d=4, wstar=0.0, noise_radius=0.2, kappa=1.0)
        a = estimate_l0_q(p, 1.0, StreamTree(21), q=50)
        b = estimate_l0_q(p, 1.0, StreamTree(21), q=50)
        assert a == b

    def test_default_pairing_radius(self):
        p = Quadratic(d=2, wstar=0.0, kappa=0.2)
        est = estimate_l0_q(p, 0.2, StreamTree(2), q=10)
        assert est.iota == pytest.approx(0.05)

    def test_rejects_bad_q(self):
        with pytest.raises(ValueError, match="q must be"):
            estimate_l0_q(ConstantProblem(), 1.0, StreamTree(0), q=1)

    def test_rejects_iota_at_least_kappa(self):
        with pytest.raises(ValueError, match="pairing radius"):
            estimate_l0_q(ConstantProblem(), 1.0, StreamTree(0), q=5, iota=1.5)


class TestEstimateDelta:
    part = GroupPartition(dims=(2, 2), penalties=(2.0, 2.0), budget=2.0)
    box = BoxParams(beta=1.0, kappa=2.0)

    def test_zero_loss_gives_zero(self):
        delta = estimate_delta(
            ConstantProblem(d=4, value=0.0), self.part, self.box, 0.1, StreamTree(1),
            num_samples=10,
        )
        assert delta == 0.0

    def test_negative_loss_rejected(self):
        with pytest.raises(ValueError, match="nonnegative"):
            estimate_delta(
                ConstantProblem(d=4, value=-1.0), self.part, self.box, 0.1, StreamTree(1),
                num_samples=5,
            )

    def test_zero_logits_network_gives_log_classes(self):
        prob = builtin_problem("tinynet_blobs", classes=3, num_points=100, spread=0.2)
        part = prob.partition(budget=0.5 * prob.d)
        box = BoxParams(beta=0.5, kappa=1.0)
        delta = estimate_delta(
            prob, part, box, 1e-3, StreamTree(5), w1=np.zeros(prob.d)
        )
        assert delta == pytest.approx(math.log(3), abs=1e-3)

    def test_ten_class_near_uniform_magnitude(self):
        prob = builtin_problem(
            "tinynet_blobs", classes=10, side=8, filters=3, hidden=10,
            num_points=200, spread=0.2,
        )
        part = prob.partition(budget=0.5 * prob.d)
        box = BoxParams(beta=0.5, kappa=1.0)
        delta = estimate_delta(prob, part, box, 1e-3, StreamTree(6), w1=np.zeros(prob.d))
        assert delta == pytest.approx(math.log(10), abs=1e-3)

    def test_multi_start_takes_max(self):
        prob = AbsSum(d=4, c=1.0, kappa=2.0)
        part = GroupPartition(dims=(2, 2), penalties=(1.0, 1.0), budget=2.0)
        box = BoxParams(beta=1.0, kappa=2.0)
        singles = [
            estimate_delta(prob, part, box, 0.05, StreamTree(13), num_samples=64, starts=k)
            for k in (1, 3)
        ]
        assert singles[1] >= singles[0] - 1e-12

    def test_determinism(self):
        prob = AbsSum(d=4, c=1.0, noise=0.1, kappa=2.0)
        part = GroupPartition(dims=(4,), penalties=(1.0,), budget=1.0)
        box = BoxParams(beta=1.0, kappa=2.0)
        a = estimate_delta(prob, part, box, 0.1, StreamTree(2), num_samples=32)
        b = estimate_delta(prob, part, box, 0.1, StreamTree(2), num_samples=32)
        assert a == b


class TestDeltaBound:
    def test_box_side_active(self):
        assert delta_bound(100.0, 0.0, 1.0, 4, 0.0, 0.1) == pytest.approx(0.4)

    def test_started_at_optimum(self):
        assert delta_bound(1.0, 1.0, 2.0, 4, 0.0, 0.5) == 0.0

    def test_reference_row_bound_exceeds_sampled_gap(self):
        # Constants of the full-scale ten-class image configuration: both
        # analytic sides exceed the sampled gap estimate of 2.31.
        bound = delta_bound(
            f_w1=math.log(10), f_wstar_lower=0.0, L0=8.53e-2, d=44426,
            alpha=6.42e-2, beta=1.66e-1,
        )
        assert bound >= 2.31

    def test_unbounded_box_uses_gap_side(self):
        b = delta_bound(2.0, 0.0, 1.0, 3, 0.3, math.inf)
        assert b == pytest.approx(2.0 + 0.3 * math.sqrt(3 / 3.0))

    def test_rejects_inverted_gap(self):
        with pytest.raises(ValueError, match="below"):
            delta_bound(0.5, 1.0, 1.0, 2, 0.1, 1.0)
