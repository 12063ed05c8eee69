"""Decaying-weight consensus: iteration, trajectories, and closed forms."""

from __future__ import annotations

import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from consensuslab import (
    DivergenceError,
    LinkFailureModel,
    NoiseModel,
    WeightSequence,
    and_step,
    build_laplacian,
    cr3_compliant_from,
    distance_to_consensus,
    erasure_mse_exact,
    mean_convergence_bound,
    mean_laplacian,
    mse_bound,
    path_graph,
    run_and,
    sample_noise,
    scale_weights_for_mse,
)
from consensuslab.models import draw_live_mask
from consensuslab.streams import INIT, LINKS, NOISE, RngStream

from conftest import random_connected_graph

# Frozen steady-state mean-squared error for the benchmark configuration
# (100 nodes, 500 edges, failure probability 0.4, per-link variance 30,
# weights 0.2/(i+1)); re-derived in-test from the printed closed form.
ZETA_BENCHMARK = 0.11843525281307234


def uniform_x0(n, seed=0, lo=-6.0, hi=6.0, lane=0):
    return RngStream(seed).generator(INIT, lane).uniform(lo, hi, n)


class TestWeightSequence:
    def test_hand_values(self):
        w = WeightSequence(0.2)
        assert w.alpha(0) == 0.2
        assert w.alpha(4) == pytest.approx(0.04)
        np.testing.assert_allclose(w.alpha(np.array([0, 1])), [0.2, 0.1])

    def test_general_form(self):
        w = WeightSequence(0.5, exponent=0.75, offset=2.0)
        assert w.alpha(3) == pytest.approx(0.5 / 5.0**0.75)

    def test_scale_must_be_positive(self):
        with pytest.raises(ValueError, match="scale"):
            WeightSequence(0.0)

    @pytest.mark.parametrize("exponent", [0.5, 0.49, 1.01, 2.0])
    def test_exponent_window(self, exponent):
        with pytest.raises(ValueError, match="exponent"):
            WeightSequence(0.2, exponent=exponent)

    def test_offset_must_be_at_least_one(self):
        with pytest.raises(ValueError, match="offset"):
            WeightSequence(0.2, offset=0.5)

    def test_sum_sq_reciprocal_closed_form(self):
        # For s/(i+1): s^2 * pi^2 / 6.
        w = WeightSequence(0.2)
        assert w.sum_sq == pytest.approx(0.04 * math.pi**2 / 6.0, rel=1e-12)

    def test_sum_sq_against_partial_sum_plus_tail(self):
        # Independent oracle: 10^7 explicit terms plus an integral bracket
        # for the tail.  The bracket width pins the target to ~1e-10.
        for scale, exponent, offset in ((1.0, 0.75, 2.0), (0.3, 0.9, 1.0), (2.0, 1.0, 3.5)):
            w = WeightSequence(scale, exponent=exponent, offset=offset)
            m = 10_000_000
            idx = np.arange(m, dtype=np.float64)
            partial = float(np.sum((scale / (idx + offset) ** exponent) ** 2))
            b = 2.0 * exponent
            tail_lo = scale**2 * (m + offset) ** (1.0 - b) / (b - 1.0)
            tail_hi = scale**2 * (m - 1 + offset) ** (1.0 - b) / (b - 1.0)
            assert partial + tail_lo <= w.sum_sq <= partial + tail_hi
            mid = partial + (tail_lo + tail_hi) / 2.0
            assert w.sum_sq == pytest.approx(mid, rel=1e-9)

    def test_partial_sums(self):
        w = WeightSequence(0.2)
        assert w.partial_sum(3) == pytest.approx(0.2 * (1 + 0.5 + 1 / 3), rel=1e-12)
        assert w.partial_sum_sq(2) == pytest.approx(0.04 * (1 + 0.25), rel=1e-12)
        assert w.partial_sum(0) == 0.0
        assert w.partial_sum_sq(0) == 0.0

    def test_partial_sum_sq_converges_to_sum_sq(self):
        w = WeightSequence(0.7)
        assert w.partial_sum_sq(200_000) < w.sum_sq
        assert w.sum_sq - w.partial_sum_sq(200_000) < 1e-5 * w.sum_sq + 1e-5

    def test_scaled(self):
        w = WeightSequence(0.2, exponent=0.8, offset=2.0).scaled(3.0)
        assert w.scale == pytest.approx(0.6)
        assert w.exponent == 0.8 and w.offset == 2.0


class TestAndStep:
    def test_hand_example_on_path(self):
        lap = build_laplacian(path_graph(3))
        x = np.array([1.0, 0.0, 0.0])
        noise = np.array([0.1, 0.0, -0.1])
        out = and_step(x, 0.5, lap, noise)
        np.testing.assert_allclose(out, [0.45, 0.5, 0.05])

    def test_consensus_is_fixed_point_without_noise(self):
        lap = build_laplacian(path_graph(5))
        x = np.full(5, 2.5)
        np.testing.assert_array_equal(and_step(x, 0.3, lap, np.zeros(5)), x)

    def test_average_shifts_only_by_noise_sum(self):
        lap = build_laplacian(path_graph(4))
        x = np.array([4.0, -1.0, 0.5, 2.0])
        noise = np.array([1.0, -2.0, 0.25, 0.5])
        out = and_step(x, 0.1, lap, noise)
        assert out.mean() == pytest.approx(x.mean() - 0.1 * noise.mean(), rel=1e-12)


class TestRunAndCore:
    def test_noiseless_reaches_consensus(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        x0 = uniform_x0(100, seed=0)
        rec = run_and(x0, WeightSequence(0.25), fail, NoiseModel.none(), 10_000,
                      RngStream(0), diag_stride=10_000)
        assert rec.dist_consensus[-1] < 0.005 * distance_to_consensus(x0)

    def test_noiseless_average_conserved_exactly(self, er_graph):
        # 1^T L(i) = 0 for every sampled Laplacian, so the running average
        # never moves, including over random link failures.
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        x0 = uniform_x0(100, seed=1)
        rec = run_and(x0, WeightSequence(0.25), fail, NoiseModel.none(), 2000, RngStream(1))
        assert np.abs(rec.x_avg - rec.initial_average).max() <= 1e-12 * max(1.0, abs(rec.initial_average))

    def test_average_is_martingale_under_noise(self, er_graph):
        # Grand mean of the final running average stays within 4 standard
        # errors of the initial average, for each supported noise family.
        x0 = uniform_x0(100, seed=2)
        r = x0.mean()
        cases = [
            (LinkFailureModel.erasure(er_graph, 0.4), NoiseModel.gaussian(15.0)),
            (LinkFailureModel.static(er_graph), NoiseModel.gaussian(15.0)),
            (LinkFailureModel.erasure(er_graph, 0.4), NoiseModel.uniform(3.0)),
        ]
        for fail, noise in cases:
            finals = np.array([
                run_and(x0, WeightSequence(0.2), fail, noise, 300,
                        RngStream(40).substream(k), diag_stride=300).x_avg[-1]
                for k in range(200)
            ])
            se = finals.std(ddof=1) / np.sqrt(finals.size)
            assert abs(finals.mean() - r) < 4 * se, (fail.kind, noise.kind)

    def test_deterministic_given_stream(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        x0 = uniform_x0(100, seed=3)
        a = run_and(x0, WeightSequence(0.2), fail, NoiseModel.gaussian(15.0), 500, RngStream(7))
        b = run_and(x0, WeightSequence(0.2), fail, NoiseModel.gaussian(15.0), 500, RngStream(7))
        c = run_and(x0, WeightSequence(0.2), fail, NoiseModel.gaussian(15.0), 500, RngStream(8))
        np.testing.assert_array_equal(a.final_state, b.final_state)
        np.testing.assert_array_equal(a.x_avg, b.x_avg)
        assert not np.array_equal(a.final_state, c.final_state)

    def test_translation_equivariance_noiseless(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        x0 = uniform_x0(100, seed=4)
        base = run_and(x0, WeightSequence(0.2), fail, NoiseModel.none(), 400, RngStream(9))
        shifted = run_and(x0 + 10.0, WeightSequence(0.2), fail, NoiseModel.none(), 400, RngStream(9))
        np.testing.assert_allclose(shifted.final_state, base.final_state + 10.0, atol=1e-8)

    def test_zero_iterations(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        x0 = uniform_x0(100, seed=5)
        rec = run_and(x0, WeightSequence(0.2), fail, NoiseModel.gaussian(1.0), 0, RngStream(0))
        np.testing.assert_array_equal(rec.final_state, x0)
        assert rec.iterations == 0

    def test_state_size_mismatch_rejected(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        with pytest.raises(ValueError, match="nodes"):
            run_and(np.zeros(7), WeightSequence(0.2), fail, NoiseModel.none(), 10, RngStream(0))

    def test_nonfinite_initial_state_rejected(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        x0 = np.zeros(100)
        x0[3] = np.nan
        with pytest.raises(ValueError, match="finite"):
            run_and(x0, WeightSequence(0.2), fail, NoiseModel.none(), 10, RngStream(0))

    @given(st.integers(min_value=0, max_value=60))
    @settings(max_examples=20)
    def test_average_conservation_property(self, seed):
        # Random connected graph, random noiseless model: conservation holds.
        gen = np.random.default_rng(seed)
        g = random_connected_graph(gen, max_nodes=12)
        fail = (
            LinkFailureModel.erasure(g, float(gen.uniform(0.0, 0.8)))
            if gen.random() < 0.5
            else LinkFailureModel.static(g)
        )
        x0 = gen.uniform(-5, 5, g.node_count)
        rec = run_and(x0, WeightSequence(0.1), fail, NoiseModel.none(), 50, RngStream(seed))
        assert np.abs(rec.x_avg - rec.initial_average).max() <= 1e-12 * max(1.0, abs(rec.initial_average))


class TestFastPathAgainstReplica:
    def _replay_fast_erasure(self, x0, weights, failure, noise, iterations, rng):
        """Mirror of the block kernel's math in plain numpy, consuming the
        links and noise streams in exactly the same order."""
        x = x0.astype(np.float64).copy()
        u, v = failure.graph.edge_arrays
        sigma = math.sqrt(noise.variance)
        gen_links = rng.generator(LINKS)
        gen_noise = rng.generator(NOISE)
        keep = 1.0 - failure.p
        block = 512
        done = 0
        while done < iterations:
            nb = min(block, iterations - done)
            alphas = weights.alpha(np.arange(done, done + nb))
            z = gen_noise.standard_normal((nb, x.size))
            unif = gen_links.random((nb, u.size))
            for k in range(nb):
                mask = unif[k] < keep
                lu, lv = u[mask], v[mask]
                diff = x[lu] - x[lv]
                lx = np.zeros(x.size)
                np.add.at(lx, lu, diff)
                np.subtract.at(lx, lv, diff)
                deg = np.zeros(x.size)
                np.add.at(deg, lu, 1.0)
                np.add.at(deg, lv, 1.0)
                nvec = np.sqrt(deg) * sigma * z[k]
                x = x - alphas[k] * (lx + nvec)
            done += nb
        return x

    def test_erasure_gaussian_kernel_matches_replica(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        noise = NoiseModel.gaussian(15.0)
        w = WeightSequence(0.2)
        x0 = uniform_x0(100, seed=6)
        rec = run_and(x0, w, fail, noise, 700, RngStream(31), diag_stride=700)
        replica = self._replay_fast_erasure(x0, w, fail, noise, 700, RngStream(31))
        np.testing.assert_allclose(rec.final_state, replica, rtol=0, atol=1e-10)

    def test_reference_path_matches_manual_composition(self, er_graph):
        # Uniform noise forces the pure-numpy path; replay it step by step
        # with the same generators and primitives.
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        noise = NoiseModel.uniform(3.0)
        w = WeightSequence(0.2)
        x0 = uniform_x0(100, seed=7)
        iterations = 120
        rec = run_and(x0, w, fail, noise, iterations, RngStream(33), diag_stride=iterations)

        u, v = er_graph.edge_arrays
        gen_links = RngStream(33).generator(LINKS)
        gen_noise = RngStream(33).generator(NOISE)
        x = x0.copy()
        for i in range(iterations):
            mask = draw_live_mask(fail, gen_links)
            lu, lv = u[mask], v[mask]
            diff = x[lu] - x[lv]
            lx = np.bincount(lu, weights=diff, minlength=100) - np.bincount(
                lv, weights=diff, minlength=100
            )
            nvec = sample_noise(noise, lu, lv, x, gen_noise)
            x = x - float(w.alpha(i)) * (lx + nvec)
        np.testing.assert_array_equal(rec.final_state, x)


class TestTrajectoryRecord:
    def test_diag_stride_indices(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        rec = run_and(uniform_x0(100), WeightSequence(0.2), fail, NoiseModel.none(),
                      25, RngStream(0), diag_stride=10)
        np.testing.assert_array_equal(rec.diag_iters, [0, 10, 20, 25])
        assert rec.x_avg.shape == rec.dist_consensus.shape == rec.sq_err.shape == (4,)

    def test_snapshots_include_start_and_end(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        x0 = uniform_x0(100, seed=8)
        rec = run_and(x0, WeightSequence(0.2), fail, NoiseModel.gaussian(15.0),
                      25, RngStream(3), snapshot_stride=10)
        np.testing.assert_array_equal(rec.snapshot_iters, [0, 10, 20, 25])
        np.testing.assert_array_equal(rec.snapshots[0], x0)
        np.testing.assert_array_equal(rec.snapshots[-1], rec.final_state)

    def test_snapshot_means_agree_with_diag_average(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        rec = run_and(uniform_x0(100, seed=9), WeightSequence(0.2), fail,
                      NoiseModel.gaussian(15.0), 40, RngStream(4), snapshot_stride=10)
        for k, it in enumerate(rec.snapshot_iters):
            assert rec.snapshots[k].mean() == pytest.approx(rec.x_avg[it], abs=1e-12)

    def test_default_snapshot_is_final_only(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        rec = run_and(uniform_x0(100), WeightSequence(0.2), fail, NoiseModel.none(),
                      17, RngStream(0))
        np.testing.assert_array_equal(rec.snapshot_iters, [17])
        np.testing.assert_array_equal(rec.snapshots[0], rec.final_state)

    def test_sq_err_definition(self, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        rec = run_and(uniform_x0(100, seed=10), WeightSequence(0.2), fail,
                      NoiseModel.gaussian(15.0), 50, RngStream(5))
        np.testing.assert_array_equal(rec.sq_err, (rec.x_avg - rec.initial_average) ** 2)

    def test_csv_round_trip(self, tmp_path, er_graph):
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        rec = run_and(uniform_x0(100, seed=11), WeightSequence(0.2), fail,
                      NoiseModel.gaussian(15.0), 30, RngStream(6), snapshot_stride=10)
        diag = tmp_path / "diag.csv"
        snaps = tmp_path / "snaps.csv"
        rec.write_csv(diag)
        rec.write_snapshots_csv(snaps)

        with open(diag) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == rec.diag_iters.size
        # repr round-trip: float(text) recovers the exact binary value.
        assert float(rows[3]["x_avg"]) == rec.x_avg[3]
        assert float(rows[-1]["dist_consensus"]) == rec.dist_consensus[-1]

        with open(snaps) as fh:
            srows = list(csv.DictReader(fh))
        assert len(srows) == rec.snapshot_iters.size * 100
        assert float(srows[-1]["value"]) == rec.final_state[-1]


class TestDivergenceGuard:
    def test_fast_path_raises_with_context(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        with pytest.raises(DivergenceError) as excinfo:
            run_and(uniform_x0(100), WeightSequence(50.0), fail, NoiseModel.none(),
                    200, RngStream(0))
        err = excinfo.value
        assert err.max_abs > 1e12
        assert err.iteration >= 0
        assert "weight scale" in err.hint

    def test_reference_path_raises(self, er_graph):
        fail = LinkFailureModel.static(er_graph)
        with pytest.raises(DivergenceError):
            run_and(uniform_x0(100), WeightSequence(50.0), fail, NoiseModel.uniform(1.0),
                    200, RngStream(0))


class TestMseClosedForms:
    def test_benchmark_value_frozen(self):
        w = WeightSequence(0.2)
        value = erasure_mse_exact(w, 500, 30.0, 0.4, 100)
        assert value == ZETA_BENCHMARK
        # Independent recomputation: (2 M mu (1-p) / N^2) * s^2 pi^2/6.
        direct = (2 * 500 * 30.0 * 0.6 / 100**2) * 0.04 * math.pi**2 / 6.0
        assert value == pytest.approx(direct, rel=1e-12)

    def test_mse_bound_formula(self):
        w = WeightSequence(0.3, exponent=0.9, offset=2.0)
        assert mse_bound(w, 120.0, 10) == pytest.approx(1.2 * w.sum_sq, rel=1e-12)

    def test_linear_in_noise_power(self):
        w = WeightSequence(0.2)
        assert erasure_mse_exact(w, 500, 60.0, 0.4, 100) == pytest.approx(
            2 * ZETA_BENCHMARK, rel=1e-12
        )
        assert mse_bound(w, 2 * 36.0, 10) == pytest.approx(2 * mse_bound(w, 36.0, 10), rel=1e-12)

    def test_more_failures_mean_less_noise(self):
        w = WeightSequence(0.2)
        values = [erasure_mse_exact(w, 500, 30.0, p, 100) for p in (0.0, 0.4, 0.8)]
        assert values[0] > values[1] > values[2]

    def test_negative_eta_rejected(self):
        with pytest.raises(ValueError, match="eta"):
            mse_bound(WeightSequence(0.2), -1.0, 10)


class TestScaleWeightsForMse:
    def test_round_trip_hits_target(self):
        base = WeightSequence(0.2)
        for target in (1e-4, 0.05, 2.0):
            scaled = scale_weights_for_mse(target, 18000.0, 100, base)
            assert mse_bound(scaled, 18000.0, 100) == pytest.approx(target, rel=1e-10)

    def test_reciprocal_closed_form(self):
        # exponent 1, offset 1: new scale = sqrt(6 target) N / (sqrt(eta) pi).
        target, eta, n = 0.05, 18000.0, 100
        scaled = scale_weights_for_mse(target, eta, n, WeightSequence(0.7))
        expected = math.sqrt(6.0 * target) * n / (math.sqrt(eta) * math.pi)
        assert scaled.scale == pytest.approx(expected, rel=1e-12)

    def test_shape_parameters_preserved(self):
        base = WeightSequence(0.2, exponent=0.8, offset=3.0)
        scaled = scale_weights_for_mse(0.1, 100.0, 50, base)
        assert scaled.exponent == 0.8 and scaled.offset == 3.0

    def test_invalid_inputs_rejected(self):
        with pytest.raises(ValueError, match="target"):
            scale_weights_for_mse(0.0, 100.0, 10, WeightSequence(0.2))
        with pytest.raises(ValueError, match="eta"):
            scale_weights_for_mse(0.1, 0.0, 10, WeightSequence(0.2))


class TestMeanConvergenceBound:
    def test_hand_value(self):
        w = WeightSequence(0.2)
        bound = mean_convergence_bound(3, 1.5, w, 10.0)
        assert bound == pytest.approx(math.exp(-1.5 * 0.2 * (1 + 0.5 + 1 / 3)) * 10.0, rel=1e-12)

    def test_zero_iterations_returns_initial(self):
        assert mean_convergence_bound(0, 1.5, WeightSequence(0.2), 7.5) == 7.5

    def test_decreasing_in_iterations(self):
        w = WeightSequence(0.2)
        values = [mean_convergence_bound(i, 1.5, w, 10.0) for i in (0, 10, 100, 1000)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_disconnected_mean_rejected(self):
        with pytest.raises(ValueError, match="connected"):
            mean_convergence_bound(10, 0.0, WeightSequence(0.2), 1.0)

    def test_oversized_first_weight_rejected_with_index(self):
        # alpha(0) = 1.0 > 2/(lam2+lamN) = 0.25: error names where the
        # sequence first complies.
        w = WeightSequence(1.0)
        with pytest.raises(ValueError, match="first comply at index"):
            mean_convergence_bound(10, 2.0, w, 1.0, lam_n_mean=6.0)

    def test_compliant_weights_accepted(self):
        w = WeightSequence(0.2)
        bound = mean_convergence_bound(10, 2.0, w, 1.0, lam_n_mean=6.0)
        assert 0 < bound < 1.0

    def test_mean_path_obeys_bound_deterministically(self, er_graph):
        # The expected trajectory is a deterministic linear recursion
        # E[x(i+1) - r1] = (I - alpha(i) Lbar) E[x(i) - r1]; its norm must sit
        # under the exponential bound at every iteration.
        fail = LinkFailureModel.erasure(er_graph, 0.4)
        lbar = mean_laplacian(fail)
        lam2 = lbar.eigenvalues[1]
        lam_n = lbar.eigenvalues[-1]
        # Scale 0.1 keeps every weight below 2/(lam2+lamN) of the mean
        # Laplacian, the precondition for the exponential contraction.
        w = WeightSequence(0.1)
        x0 = uniform_x0(100, seed=12)
        dev = x0 - x0.mean()
        d0 = float(np.linalg.norm(dev))
        for i in range(500):
            bound = mean_convergence_bound(i, lam2, w, d0, lam_n_mean=lam_n)
            assert np.linalg.norm(dev) <= bound * (1 + 1e-9)
            dev = dev - float(w.alpha(i)) * (lbar.matrix @ dev)


class TestCr3CompliantFrom:
    @pytest.mark.parametrize(
        "scale,exponent,offset",
        [(0.2, 1.0, 1.0), (1.0, 1.0, 1.0), (0.9, 0.75, 2.0), (5.0, 0.6, 1.0)],
    )
    def test_matches_brute_force_scan(self, scale, exponent, offset):
        w = WeightSequence(scale, exponent=exponent, offset=offset)
        for lam2, lam_n in ((1.5, 10.0), (0.3, 2.0), (2.76, 18.9)):
            thr = 2.0 / (lam2 + lam_n)
            brute = next(i for i in range(100_000) if w.alpha(i) <= thr)
            assert cr3_compliant_from(w, lam2, lam_n) == brute

    def test_already_compliant_is_zero(self):
        assert cr3_compliant_from(WeightSequence(0.05), 2.0, 6.0) == 0
