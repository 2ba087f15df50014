"""Algorithm tests: constants, parameter derivation, run behavior,
ablations, the high-probability wrapper and the shrinking-target schedule."""

import math
from fractions import Fraction

import numpy as np
import pytest

from sparseopt.constraint import BoxParams, GroupPartition, is_feasible, project, stationarity_distance
from sparseopt.oracles import AbsSum, Quadratic
from sparseopt.smoothing import SmoothingParams, StreamTree, first_order_estimate, sample_u
from sparseopt.spa import (
    ProblemMeta,
    SPAConfig,
    Targets,
    argmin_candidate,
    constants_c1_c2,
    derive_params,
    evaluate_stationarity,
    geometric_schedule,
    hp_parameters,
    initialize_feasible,
    meta_from_problem,
    run_asymptotic,
    run_high_probability,
    run_spa,
    write_trace_csv,
)


class TestConstants:
    @pytest.mark.parametrize(
        "rho,c1,c2",
        [(Fraction(4, 3), 34, 33), (Fraction(5, 3), 23, 21), (2, 20, 17), (5, 23, 11)],
    )
    def test_integer_reference_rows(self, rho, c1, c2):
        got1, got2 = constants_c1_c2(rho, 0)
        assert got1 == c1
        assert got2 == c2

    def test_general_tau_formula(self):
        rho, tau, M = 2.0, 0.5, 4
        c1, c2 = constants_c1_c2(rho, tau, M)
        assert c1 == pytest.approx(2 * (1 + 3 * rho) / (tau + rho - 1) + 3 * rho)
        assert c2 == pytest.approx(
            4 * (1 + 3 * rho) / (tau + rho - 1) * (0.5 + 2 * M * tau / (3 * rho**2)) + 3
        )

    def test_rejects_invalid_pair(self):
        with pytest.raises(ValueError, match="rho \\+ tau"):
            constants_c1_c2(0.5, 0.5)


class TestDeriveParams:
    def test_reference_row_first_dataset(self):
        meta = ProblemMeta(L0=8.53e-2, Q=7.49e-3, d=44426, kappa=0.2)
        alpha, beta, cfg = derive_params(
            Targets(eps1=1 / 3, eps2=1 / 3), meta, 2.5, "first", delta=2.31
        )
        assert alpha == pytest.approx(6.42e-2, rel=5e-3)
        assert beta == pytest.approx(1.66e-1, rel=5e-3)
        assert cfg.eta == pytest.approx(4.76e-4, rel=5e-3)
        assert cfg.K == pytest.approx(4.38e5, rel=5e-3)
        assert cfg.M == 2

    def test_noiseless_minimum_batch(self):
        meta = ProblemMeta(L0=1.0, Q=0.0, d=4, kappa=2.0)
        _, _, cfg = derive_params(Targets(eps1=0.5, eps2=0.5), meta, 2.0, "first", delta=1.0)
        assert cfg.M == 1

    def test_eta_formula(self):
        meta = ProblemMeta(L0=2.0, Q=0.5, d=9, kappa=3.0)
        alpha, _, cfg = derive_params(Targets(eps1=0.5, eps2=0.5), meta, 2.0, "first", delta=1.0)
        assert cfg.eta == pytest.approx(alpha / (3 * 2.0 * 3.0 * 2.0))

    def test_zeroth_mode_scales_batch_by_dimension(self):
        # chosen so the ceilings are exact: M scales by d between modes
        meta = ProblemMeta(L0=1.0, Q=0.5, d=8, kappa=3.0)
        _, _, first = derive_params(Targets(eps1=0.5, eps2=0.5), meta, 2.0, "first", delta=1.0)
        _, _, zeroth = derive_params(Targets(eps1=0.5, eps2=0.5), meta, 2.0, "zeroth", delta=1.0)
        assert first.M == 68
        assert zeroth.M == 8 * 68

    def test_radius_route(self):
        meta = ProblemMeta(L0=1.0, Q=0.1, d=4, kappa=2.0)
        eps3, eps4 = 0.4, 0.5
        alpha, beta, cfg = derive_params(Targets(eps3=eps3, eps4=eps4), meta, 2.0, "first", delta=1.0)
        assert alpha == pytest.approx(2 * eps3 / math.sqrt(4))
        c1, _ = constants_c1_c2(2.0, 0)
        assert cfg.K == math.ceil(c1 * 2 * 4 * 1.0 * 1.0 / (eps3 * eps4**2))
        assert meta.kappa > beta + eps3

    def test_kappa_too_small_rejected(self):
        meta = ProblemMeta(L0=1.0, Q=0.1, d=4, kappa=0.1)
        with pytest.raises(ValueError, match="kappa"):
            derive_params(Targets(eps3=0.4, eps4=0.5), meta, 2.0, "first", delta=1.0)

    def test_box_margin(self):
        meta = ProblemMeta(L0=1.0, Q=0.1, d=4, kappa=1.0)
        alpha, beta, _ = derive_params(Targets(eps1=0.5, eps2=0.5), meta, 2.0, "first", delta=1.0)
        assert meta.kappa > beta + alpha / 2


def quick_setup(d=4, budget=2.0, beta=1.5, kappa=3.0):
    part = GroupPartition(dims=(d,), penalties=(1.0,), budget=budget)
    box = BoxParams(beta=beta, kappa=kappa)
    return part, box


class TestRunSpa:
    def test_quadratic_contracts_at_linear_rate(self):
        # noiseless smoothed gradient is w - wstar, so with no constraint
        # active the distance to wstar contracts by (1 - eta) each step
        p = Quadratic(d=3, wstar=0.3, kappa=3.0)
        part, box = quick_setup(d=3)
        cfg = SPAConfig(
            eta=0.2, K=40, M=1, rho=2.0, tau=0.0, mode="first", alpha=1e-9, seed=3
        )
        w1 = np.array([1.2, 1.2, 1.2])
        res = run_spa(p, part, box, cfg, w1)
        # perturbations are negligible at alpha=1e-9, so check the rate
        dist0 = np.linalg.norm(w1 - 0.3)
        distR = np.linalg.norm(res.w - 0.3)
        assert distR == pytest.approx(dist0 * (1 - 0.2) ** (res.R - 1), rel=1e-4)

    def test_zero_step_size_is_identity(self):
        p = Quadratic(d=4, wstar=0.0, kappa=3.0)
        part, box = quick_setup()
        cfg = SPAConfig(eta=0.0, K=10, M=1, rho=2.0, tau=0.0, mode="first", alpha=0.1, seed=5)
        w1 = project(np.ones(4), part, box)
        res = run_spa(p, part, box, cfg, w1)
        assert np.array_equal(res.w, w1)

    def test_every_iterate_feasible_and_trace_length(self):
        p = AbsSum(d=4, c=1.0, kappa=3.0)
        part = GroupPartition(dims=(2, 2), penalties=(1.0, 1.0), budget=1.0)
        box = BoxParams(beta=1.0, kappa=3.0)
        cfg = SPAConfig(eta=0.05, K=60, M=2, rho=2.0, tau=0.0, mode="first", alpha=0.2, seed=8)
        w1 = project(np.full(4, 0.5), part, box)
        res = run_spa(p, part, box, cfg, w1)
        assert len(res.trace) == res.R - 1
        assert is_feasible(res.w, part, box)
        assert all(row.feasible_groups <= 1 for row in res.trace)

    def test_stopping_index_range_and_determinism(self):
        p = Quadratic(d=2, wstar=0.0, kappa=3.0)
        part, box = quick_setup(d=2)
        seen = set()
        for seed in range(30):
            cfg = SPAConfig(eta=0.1, K=5, M=1, rho=2.0, tau=0.0, mode="first", alpha=0.1, seed=seed)
            res = run_spa(p, part, box, cfg, np.zeros(2))
            assert 2 <= res.R <= 6
            seen.add(res.R)
        assert len(seen) >= 3  # stopping index actually varies

    def test_bit_identical_reruns(self, tmp_path):
        p = AbsSum(d=3, c=1.0, noise=0.2, kappa=3.0)
        part, box = quick_setup(d=3)
        cfg = SPAConfig(eta=0.05, K=30, M=3, rho=2.0, tau=0.0, mode="zeroth", alpha=0.3, seed=21)
        w1 = np.zeros(3)
        r1 = run_spa(p, part, box, cfg, w1)
        r2 = run_spa(p, part, box, cfg, w1)
        assert np.array_equal(r1.w, r2.w)
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        write_trace_csv(a, r1)
        write_trace_csv(b, r2)
        assert a.read_bytes() == b.read_bytes()

    def test_infeasible_start_rejected(self):
        p = Quadratic(d=4, wstar=0.0, kappa=3.0)
        part, box = quick_setup(budget=1.0)
        part = GroupPartition(dims=(2, 2), penalties=(1.0, 1.0), budget=1.0)
        cfg = SPAConfig(eta=0.1, K=5, M=1, rho=2.0, tau=0.0, mode="first", alpha=0.1, seed=1)
        with pytest.raises(ValueError, match="feasible"):
            run_spa(p, part, box, cfg, np.full(4, 0.5))

    def test_psgd_ablation_matches_manual_loop(self):
        # smoothing off: the loop is projected SGD on the bp gradient
        p = Quadratic(d=4, wstar=0.2, noise_radius=0.3, kappa=3.0)
        part = GroupPartition(dims=(2, 2), penalties=(1.0, 1.0), budget=1.0)
        box = BoxParams(beta=1.0, kappa=3.0)
        cfg = SPAConfig(
            eta=0.1, K=20, M=2, rho=2.0, tau=0.0, mode="first", alpha=0.1, seed=33,
            smoothing=False,
        )
        w1 = project(np.full(4, 0.4), part, box)
        res = run_spa(p, part, box, cfg, w1)

        kit = StreamTree(33)
        params = SmoothingParams(alpha=0.1, d=4)
        w = w1.copy()
        for k in range(1, res.R):
            acc = np.zeros(4)
            for i in (1, 2):
                xi = p.sample_xi(kit.child("iter", k).child(i, "xi").generator())
                acc += p.bp_gradient(w, xi)
            w = project(w - 0.1 * acc / 2, part, box)
        assert np.array_equal(res.w, w)

    def test_sgd_ablation_is_unconstrained(self):
        p = Quadratic(d=4, wstar=0.2, noise_radius=0.3, kappa=3.0)
        part = GroupPartition(dims=(2, 2), penalties=(1.0, 1.0), budget=1.0)
        box = BoxParams(beta=1.0, kappa=3.0)
        cfg = SPAConfig(
            eta=0.1, K=20, M=2, rho=2.0, tau=0.0, mode="first", alpha=0.1, seed=33,
            smoothing=False, projection=False,
        )
        res = run_spa(p, part, box, cfg, np.full(4, 0.4))
        # same draws as the projected run, different iterates
        kit = StreamTree(33)
        w = np.full(4, 0.4)
        for k in range(1, res.R):
            acc = np.zeros(4)
            for i in (1, 2):
                xi = p.sample_xi(kit.child("iter", k).child(i, "xi").generator())
                acc += p.bp_gradient(w, xi)
            w = w - 0.1 * acc / 2
        assert np.array_equal(res.w, w)

    def test_stationarity_trend_with_budget(self):
        # d=1 shifted absolute loss within a box: averaged measured gap at
        # the returned point shrinks as the iteration budget grows
        p = AbsSum(d=1, shift=0.5, kappa=3.0)
        part = GroupPartition(dims=(1,), penalties=(1.0,), budget=1.0)
        box = BoxParams(beta=1.0, kappa=3.0)
        alpha = 0.4
        means = []
        for K in (10, 100, 1000):
            dists = []
            for seed in range(10):
                cfg = SPAConfig(
                    eta=alpha / (3 * 2 * 1.0), K=K, M=1, rho=2.0, tau=0.0,
                    mode="first", alpha=alpha, seed=1000 + seed,
                )
                res = run_spa(p, part, box, cfg, np.zeros(1))
                g = p.smoothed_gradient(res.w, alpha)
                dists.append(stationarity_distance(g, res.w, part, box))
            means.append(float(np.mean(dists)))
        assert means[2] <= means[0] + 1e-12
        assert means[1] <= means[0] + 0.25 * (abs(means[0]) + 1e-6)


class TestInitialization:
    def test_feasible_output(self):
        p = AbsSum(d=6, c=1.0, kappa=2.0)
        part = GroupPartition(dims=(3, 3), penalties=(1.0, 1.0), budget=1.0)
        box = BoxParams(beta=1.0, kappa=2.0)
        w1, warns = initialize_feasible(p, part, box, StreamTree(0))
        assert is_feasible(w1, part, box)
        assert warns == []

    def test_layer_collapse_warning_when_budget_excludes_block(self):
        from sparseopt.oracles import builtin_problem

        prob = builtin_problem("tinynet_blobs", classes=3, num_points=30, spread=0.2)
        # budget below the smallest group penalty: nothing can stay active
        part = prob.partition(budget=0.01 * prob.d)
        box = BoxParams(beta=0.5, kappa=1.0)
        w1, warns = initialize_feasible(prob, part, box, StreamTree(5))
        assert np.array_equal(w1, np.zeros(prob.d))
        assert any("layer_collapse" in w for w in warns)


class TestHighProbability:
    def test_parameter_formulas(self):
        r, psi, T, eps_prime = hp_parameters(1 / 3, 0.1, 0.5, 2.0, Q=0.01, upsilon=1)
        assert r == 3
        assert psi == pytest.approx(60.0)
        assert T == math.ceil(6 * 2.0 * 60.0 * 0.01 / (1 / 9))
        assert eps_prime == pytest.approx(
            math.sqrt((1 / 9 - 6 * 60.0 * 0.01 / T) / (4 * math.e))
        )

    def test_noiseless_variance_term_vanishes(self):
        _, _, T, eps_prime = hp_parameters(0.4, 0.1, 0.5, 2.0, Q=0.0, upsilon=1)
        assert T == 1
        assert eps_prime == pytest.approx(0.4 / (2 * math.sqrt(math.e)))

    def test_argmin_returns_first_minimum(self):
        assert argmin_candidate([5.0, 1.0, 3.0]) == 1
        assert argmin_candidate([2.0, 2.0, 4.0]) == 0

    def test_selection_attains_recorded_minimum(self):
        p = AbsSum(d=2, c=0.3, shift=0.3, noise=0.1, kappa=4.0)
        part = GroupPartition(dims=(1, 1), penalties=(1.0, 1.0), budget=2.0)
        targets = Targets(eps1=1.0, eps2=1.5, gamma=0.4, c=0.5, phi=2.0)
        hp = run_high_probability(
            p, part, BoxParams(kappa=4.0), targets, 2.0, "first", delta=1.0, seed=9
        )
        assert hp.distances[hp.index] == min(hp.distances)
        assert np.array_equal(hp.w_star, hp.runs[hp.index].w)
        assert len(hp.runs) == hp.r

    def test_degenerate_single_run(self):
        # gamma and c large enough that ceil(-ln(c*gamma)) = 1
        p = AbsSum(d=2, c=0.3, shift=0.3, kappa=4.0)
        part = GroupPartition(dims=(1, 1), penalties=(1.0, 1.0), budget=2.0)
        targets = Targets(eps1=1.0, eps2=1.5, gamma=0.7, c=0.6, phi=2.0)
        hp = run_high_probability(
            p, part, BoxParams(kappa=4.0), targets, 2.0, "first", delta=1.0, seed=4
        )
        assert hp.r == 1
        assert hp.index == 0


class TestAsymptotic:
    def test_schedule_validation(self):
        assert geometric_schedule(0.8, 1.0, 3) == [(0.8, 1.0), (0.4, 0.5), (0.2, 0.25)]
        p = AbsSum(d=1, shift=0.5, kappa=4.0)
        part = GroupPartition(dims=(1,), penalties=(1.0,), budget=1.0)
        with pytest.raises(ValueError, match="strictly decreasing"):
            run_asymptotic(
                p, part, BoxParams(kappa=4.0), [(0.4, 0.5), (0.4, 0.5)], 2.0, "first",
                delta=1.0, seed=0,
            )

    def test_single_stage_matches_direct_run(self):
        p = AbsSum(d=1, shift=0.5, kappa=4.0)
        part = GroupPartition(dims=(1,), penalties=(1.0,), budget=1.0)
        meta = meta_from_problem(p)
        stages = run_asymptotic(
            p, part, BoxParams(kappa=4.0), [(0.8, 1.2)], 2.0, "first", delta=1.0, seed=77,
            eval_samples=50,
        )
        assert len(stages) == 1
        alpha, beta, cfg = derive_params(
            Targets(eps3=0.8, eps4=1.2), meta, 2.0, "first", delta=1.0
        )
        assert stages[0].alpha == alpha
        assert stages[0].run.config.K == cfg.K
        assert stages[0].run.config.M == cfg.M

    def test_alpha_tracks_schedule(self):
        p = AbsSum(d=1, shift=0.5, kappa=4.0)
        part = GroupPartition(dims=(1,), penalties=(1.0,), budget=1.0)
        stages = run_asymptotic(
            p, part, BoxParams(kappa=4.0), geometric_schedule(0.8, 1.4, 3), 2.0, "first",
            delta=1.0, seed=6, eval_samples=50,
        )
        alphas = [s.alpha for s in stages]
        assert alphas[1] == pytest.approx(alphas[0] / 2)
        assert alphas[2] == pytest.approx(alphas[0] / 4)

    def test_stationarity_trend_over_stages(self):
        p = AbsSum(d=1, shift=0.5, kappa=4.0)
        part = GroupPartition(dims=(1,), penalties=(1.0,), budget=1.0)
        per_stage = []
        for seed in range(8):
            stages = run_asymptotic(
                p, part, BoxParams(kappa=4.0), geometric_schedule(1.6, 2.0, 3), 2.0,
                "first", delta=1.0, seed=2000 + seed, eval_samples=300,
            )
            per_stage.append([s.stationarity for s in stages])
        arr = np.array(per_stage)
        means = arr.mean(axis=0)
        ses = arr.std(axis=0, ddof=1) / math.sqrt(len(arr))
        for i in range(2):
            assert means[i + 1] <= means[i] + 2 * math.hypot(ses[i], ses[i + 1])


class TestEvaluateStationarity:
    def test_matches_analytic_gradient_at_scale(self):
        p = Quadratic(d=3, wstar=0.4, kappa=3.0)
        part = GroupPartition(dims=(3,), penalties=(1.0,), budget=1.0)
        box = BoxParams(beta=1.0, kappa=3.0)
        w = project(np.full(3, 0.2), part, box)
        dist, g = evaluate_stationarity(
            p, w, part, box, 0.05, "first", 4000, StreamTree(1).child("eval")
        )
        exact = stationarity_distance(p.smoothed_gradient(w, 0.05), w, part, box)
        assert dist == pytest.approx(exact, abs=0.01)
